#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Sparse vector as (index, value) pairs, sorted by index not required.
using SparseVec = std::vector<std::pair<int, double>>;

/// Symmetric rank-two atom u v^T + v u^T. A lone diagonal entry d at (k, k)
/// is expressed as u = e_k, v = (d/2) e_k.
struct SymPair {
  SparseVec u, v;
};

/// One positive-definite constraint block S(x) = F0 + sum_i x_i F_i  (> 0),
/// where each F_i is a sum of SymPair atoms. identity_var, if >= 0, marks a
/// variable whose coefficient is the identity on this block.
struct SdpBlock {
  int dim = 0;
  MatrixXd F0;
  std::vector<std::vector<SymPair>> coeff;  // indexed by variable
  int identity_var = -1;
};

/// Interior scalar bound lo < x_i < hi (hi may be +inf).
struct ScalarBound {
  int var = -1;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

/// min cost^T x  s.t.  every block PD, scalar bounds, optional a^T x = b.
struct SdpProblem {
  int nvar = 0;
  VectorXd cost;
  std::vector<SdpBlock> blocks;
  std::vector<ScalarBound> bounds;
  VectorXd eq_a;
  double eq_b = 0.0;
  bool has_eq = false;
  VectorXd x0;  // strictly feasible start (required)
};

struct SdpOptions {
  double gap_tol = 1e-8;       // optimality-gap estimate, relative to max(1, |obj|)
  double mu0 = 1.0;
  double mu_factor = 10.0;
  // Centering threshold on lambda^2/2. Approximate centering is enough for
  // path-following: the duality-gap bound nu/mu only degrades by O(lambda).
  double newton_tol = 1e-5;
  int max_newton_total = 20000;
  int max_inner = 1000;  // Newton steps per centering before declaring a stall
  int max_line_search = 60;
  bool verbose = false;  // per-centering progress on stderr
  // Called after each successful centering with the iterate and the duality
  // gap bound nu/mu; a nonzero return stops the solve early (reported in
  // SdpResult::stop_code with converged = true). Lets feasibility-style
  // problems bail out once classified, before the path gets ill-conditioned.
  // Also invoked every stop_check_stride Newton steps mid-centering with
  // gap = +inf, so tests that do not rely on the gap bound (e.g. a feasible
  // witness check) can fire without waiting for the centering to finish.
  std::function<int(const VectorXd& x, double gap)> stop_check;
  int stop_check_stride = 16;
};

struct SdpResult {
  VectorXd x;
  double obj = 0.0;
  bool converged = false;
  int newton_steps = 0;
  int stop_code = 0;
  std::string message;
};

struct SdpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic primal barrier path-following solve. Throws SdpError if the
/// start point is not strictly feasible; reports converged = false on
/// centering failure.
SdpResult solve_sdp(const SdpProblem& prob, const SdpOptions& opts = {});

}  // namespace cfl
