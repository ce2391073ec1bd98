#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "certiflight/quad_dynamics.hpp"

namespace cfl {

struct TimedWaypoint {
  Vec3 pos;
  double t = 0.0;
};

struct TrajectoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Piecewise polynomial reference path, one polynomial per segment and axis
/// on normalized time tau in [0, 1]. Degree 7 for minimum-snap output;
/// lower-degree splines embed with zero high-order coefficients.
class PolyTrajectory {
 public:
  PolyTrajectory(std::vector<double> knots,
                 std::array<Eigen::MatrixXd, 3> coeffs);

  double t_min() const { return knots_.front(); }
  double t_max() const { return knots_.back(); }
  int num_segments() const { return static_cast<int>(knots_.size()) - 1; }

  /// Derivative of any order at time t (order 0 = position). Throws
  /// TrajectoryError outside [t_min, t_max].
  Vec3 derivative(double t, int order) const;

  struct Sample {
    Vec3 pos, vel, acc;
    double psi_d = 0.0;  // yaw reference is identically zero
  };
  Sample sample(double t) const;

  /// Discrete snap cost: sum over a dt-grid of squared jerk differences
  /// divided by dt. Matches the continuous integral of squared snap for
  /// smooth trajectories and heavily penalizes jerk jumps at the knots.
  double snap_cost(double dt = 0.01) const;

 private:
  std::vector<double> knots_;
  std::array<Eigen::MatrixXd, 3> coeffs_;  // per axis: num_segments x (deg+1)
};

/// Minimum-snap interpolation of the waypoints: per axis one equality-
/// constrained QP (KKT system) over degree-7 segment polynomials with
/// waypoint interpolation, C4 continuity at interior knots, and zero
/// velocity/acceleration/jerk at both endpoints. Throws TrajectoryError on
/// repeated knots or fewer than two waypoints.
PolyTrajectory min_snap(const std::vector<TimedWaypoint>& waypoints);

/// Natural cubic spline through the same waypoints (zero second derivative
/// at the ends); the comparison baseline for the snap cost.
PolyTrajectory natural_cubic(const std::vector<TimedWaypoint>& waypoints);

/// Waypoint CSV with header `x,y,z,t`.
std::vector<TimedWaypoint> load_waypoints_csv(const std::string& path);
void save_waypoints_csv(const std::vector<TimedWaypoint>& waypoints,
                        const std::string& path);

}  // namespace cfl
