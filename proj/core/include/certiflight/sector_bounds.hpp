#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

#include "certiflight/quad_dynamics.hpp"

namespace cfl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Closed axis-aligned box of admissible states. Coordinates are grouped
/// (position, attitude, velocity, rate for the quadcopter) so the
/// certification search can scale each group's radius independently.
struct DomainBox {
  VectorXd lower, upper;
  // group g covers coordinate indices [group_start[g], group_start[g+1])
  std::vector<int> group_start;

  int dim() const { return static_cast<int>(lower.size()); }
  int num_groups() const { return static_cast<int>(group_start.size()) - 1; }

  void validate() const;  // lower < upper, origin strictly inside

  /// Scales one group's intervals about 0.
  void scale_group(int g, double factor);

  /// Largest Euclidean norm over the box (attained at a corner).
  double max_norm() const;

  /// Symmetric quadcopter box from the four group radii.
  static DomainBox quad(double pos_r, double att_r, double vel_r, double rate_r);
};

/// Box over-approximation of the input set induced by a Lipschitz bound L on
/// the controller over the state domain S: each |u_i| <= L * max_{s in S} |s|_2.
DomainBox input_domain(double L, const DomainBox& S, int m);

/// Elementwise lower/upper bounds on the Jacobian of the NPV residual over a
/// domain. n x (n+m): state columns first, then input columns.
struct SectorBounds {
  MatrixXd lower, upper;

  int rows() const { return static_cast<int>(lower.rows()); }
  int cols() const { return static_cast<int>(lower.cols()); }
};

/// A plant in equilibrium-shifted coordinates together with its closed-loop
/// origin linearization. rhs(s, u, alpha) must be smooth near the domains of
/// interest.
struct NpvSystem {
  int n = 0, m = 0, d = 0;
  std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)> rhs;
  MatrixXd A_K;  // n x n, d rhs / d s at the origin
  MatrixXd B0;   // n x m, d rhs / d u at the origin
};

/// Quadcopter instance of NpvSystem (alpha dimension 4).
NpvSystem quad_npv_system(const QuadParams& p, const NominalGains& g);

/// NPV residual: rhs(s, u, alpha) - A_K s - B0 u, i.e. everything the origin
/// linearization misses. Its Jacobian vanishes at (0, 0, 0), so sector
/// bounds over any domain containing the origin straddle zero.
VectorXd npv_residual(const NpvSystem& sys, const VectorXd& s,
                      const VectorXd& u_nn, const VectorXd& alpha);

struct SectorGridSpec {
  int points_small = 7;   // per active coordinate when <= 3 are active
  int points_medium = 5;  // when exactly 4 are active
  int points_large = 3;   // when >= 5 are active
  double fd_step = 1e-5;
  double inflation = 1.10;
  double inflation_abs = 1e-6;
};

struct SectorBoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sector bounds of the NPV Jacobian over S x U_{L,S} x alpha_box, estimated
/// entrywise by central differences on a tensor grid over the coordinates the
/// entry actually depends on, then inflated. alpha coordinates are swept over
/// {lo, 0, hi}. Throws
/// SectorBoundError when samples are non-finite (the caller should shrink S).
SectorBounds estimate_sector_bounds(const NpvSystem& sys, const DomainBox& S,
                                    double L, const VectorXd& alpha_lo,
                                    const VectorXd& alpha_hi,
                                    const SectorGridSpec& grid = {});

/// CSV audit dump: row i, col j, lower, upper.
void write_sector_bounds_csv(const SectorBounds& sb, const std::string& path);

}  // namespace cfl
