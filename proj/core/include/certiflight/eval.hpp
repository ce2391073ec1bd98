#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "certiflight/config.hpp"
#include "certiflight/mlp.hpp"
#include "certiflight/quad_dynamics.hpp"
#include "certiflight/traj_plan.hpp"

namespace cfl {

struct EvalMetrics {
  double time_to_5pct = 0.0;   // settling time of the positional error [s]
  double ise = 0.0;            // integral of squared positional error [m^2 s]
  double max_abs_psi_err = 0.0;
  double terminal_error = 0.0;  // final positional error [m]
  bool settled = false;         // error reached and held 5% of initial
  bool left_domain = false;     // state left the safety box (when given)
  bool fault = false;           // attitude singularity or non-finite state
};

struct EvalReport {
  EvalMetrics metrics;
  Trajectory traj;          // absolute-coordinate time series
  std::vector<Vec4> refs;   // (ref_x, ref_y, ref_z, ref_psi) per step
};

/// Step-reference tracking: vehicle starts at rest at the origin, the
/// reference position is cfg.target. actor may be null (nominal-only);
/// otherwise its output adds per-motor thrust increments. Per-step alpha is
/// uniform in +-cfg.alpha_mag. safety, when nonnull, flags domain exits.
EvalReport eval_position(const Mlp* actor, const EvalConfig& cfg,
                         const QuadParams& p, const NominalGains& g,
                         std::uint64_t seed, const DomainBox* safety = nullptr);

/// Moving-target tracking along a planned trajectory: at each step the
/// controller is handed the planner position of the next sample instant.
/// Runs for cfg.traj_duration (clamped to the trajectory's time span).
EvalReport eval_trajectory(const Mlp* actor, const PolyTrajectory& traj,
                           const EvalConfig& cfg, const QuadParams& p,
                           const NominalGains& g, std::uint64_t seed,
                           const DomainBox* safety = nullptr);

/// Mean Euclidean positional error over a report's time series.
double mean_position_error(const EvalReport& rep);

}  // namespace cfl
