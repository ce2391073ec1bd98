#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <string>

#include "certiflight/quad_dynamics.hpp"
#include "certiflight/sdp.hpp"
#include "certiflight/sector_bounds.hpp"

namespace cfl {

/// One feasibility query: closed-loop linear part, sector bounds of the NPV
/// residual, and a candidate controller Lipschitz bound.
struct LmiInstance {
  MatrixXd A_K;          // n x n, Hurwitz
  SectorBounds sector;   // n x (n+m)
  double L = 0.0;
  // Optional per-state-column Lipschitz weights replacing the uniform L in
  // the chi S-procedure terms; used when the instance is expressed in
  // rescaled state coordinates (|chi_rj| <= L_col(j) |s_j|). Empty = uniform.
  VectorXd L_col;
  int n = 0, m = 0;

  int size() const { return n + m * n + n * (n + m); }
  void validate() const;
};

/// The full stability LMI as a dense, exactly symmetric matrix. P is n x n
/// symmetric, Lambda is n x (n+m) (>= 0 elementwise), gamma is m x n (>= 0).
/// Feasibility means this matrix is negative definite.
MatrixXd assemble_lmi(const LmiInstance& inst, const MatrixXd& P,
                      const MatrixXd& Lambda, const MatrixXd& gamma);

struct CertifyOptions {
  double eps_margin = 1e-7;   // required negativity of the optimal shift
  double eps_P = 1e-8;        // P >= eps_P * I
  // Upper bound on every Lambda and gamma entry, applied in the balanced
  // coordinates of the internal solve. Feasible quadcopter instances need
  // multipliers of order 1e3 there; the cap bounds the barrier's travel.
  double multiplier_cap = 1e4;
  bool verbose = false;  // per-centering progress on stderr
  SdpOptions sdp;
};

struct SolverNonconvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InitialInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FeasibilityResult {
  bool feasible = false;
  double shift = 0.0;   // optimal t in min t s.t. LMI <= t I
  double margin = 0.0;  // largest eigenvalue of the LMI at the witness
  MatrixXd P, Lambda, gamma;
};

/// Eigenvalue-shift feasibility solve: min t s.t. M(P, Lambda, gamma) <= t I,
/// P >= eps_P I, tr P = n, 0 <= Lambda, gamma <= cap. Deterministic. Throws
/// SolverNonconvergence when the interior-point solve stalls.
FeasibilityResult check_feasible(const LmiInstance& inst,
                                 const CertifyOptions& opts = {});

struct Certificate {
  MatrixXd P, Lambda, gamma;
  Eigen::MatrixXd K;  // nominal state-feedback gain (m x n), fixed
  double L_star = 0.0;
  DomainBox S_star;
  double margin = 0.0;
  // Conditioning factor applied to the estimated sector bounds (and, in the
  // same proportion, to the parameter-variation box the certificate covers)
  // before the feasibility solve; 1 means the raw estimated bounds.
  double attenuation = 1.0;
  // Effective parameter-variation box the certificate is valid for.
  VectorXd alpha_lo, alpha_hi;
  std::uint64_t config_hash = 0;
};

void write_certificate(const Certificate& cert, const std::string& path);
Certificate read_certificate(const std::string& path);

/// Recomputes sector bounds for a candidate (L, S) during the search.
using SectorProvider = std::function<SectorBounds(double L, const DomainBox& S)>;

struct SearchSchedule {
  double growth = 1.05;    // initial multiplicative step for every knob
  double tol = 1e-3;       // relative step below which a knob is converged
  int max_rounds = 400;
  bool grow_L = true;
  std::vector<bool> grow_group;  // per domain group; empty = grow all
};

struct SearchTrace {
  int feasibility_checks = 0;
  int accepted_steps = 0;
};

/// Alternating maximization of the Lipschitz bound and the domain group
/// radii: each knob in round-robin tries its multiplicative step, keeps it on
/// feasibility, halves it otherwise. Requires feasibility at (L0, S0).
Certificate maximize_L_S(const MatrixXd& A_K, const Eigen::MatrixXd& K,
                         const SectorProvider& provider, double L0,
                         const DomainBox& S0, const SearchSchedule& schedule,
                         const CertifyOptions& opts = {},
                         SearchTrace* trace = nullptr);

/// End-to-end quadcopter certification settings. The sector bounds estimated
/// over each candidate (L, S) are scaled by `attenuation` before the
/// feasibility solve, and the parameter-variation box the certificate covers
/// is shrunk in the same proportion; the raw grid estimates of the coupled
/// rigid-body terms are otherwise too conservative for any useful domain.
struct QuadCertifyConfig {
  double L0 = 1.0;
  DomainBox S0 = DomainBox::quad(1.5, 0.2, 1.5, 0.2);
  double attenuation = 3.5e-3;
  double alpha_mag = 0.05;  // raw per-motor variation amplitude
  SearchSchedule schedule{/*growth=*/1.10, /*tol=*/0.02, /*max_rounds=*/400,
                          /*grow_L=*/true, /*grow_group=*/{}};
  CertifyOptions opts;
};

Certificate certify_quad(const QuadParams& p, const NominalGains& g,
                         const QuadCertifyConfig& cfg = {},
                         SearchTrace* trace = nullptr);

struct ValidationReport {
  int trials = 0;
  int v_nonincreasing = 0;
  int converged = 0;
  int satisfied = 0;  // both conditions
  double sublevel = 0.0;
};

/// Empirical check of the certified region: seeds initial states inside the
/// largest sublevel set of s^T P s inscribed in S_star, simulates the nominal
/// controller under per-step uniform alpha, and counts runs whose Lyapunov
/// value never increases (up to per-step slack) and that contract to 5% of
/// the initial norm.
ValidationReport validate_certificate(const Certificate& cert,
                                      const QuadParams& p,
                                      const NominalGains& g,
                                      const Vec4& alpha_lo, const Vec4& alpha_hi,
                                      int trials, std::uint64_t seed,
                                      double duration = 90.0, double dt = 0.01,
                                      double v_slack = 1e-3);

}  // namespace cfl
