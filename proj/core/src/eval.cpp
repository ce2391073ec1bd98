#include "certiflight/eval.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace cfl {

namespace {

struct RefPoint {
  Vec3 pos = Vec3::Zero();
  double psi = 0.0;
};

// Shared closed-loop rollout in absolute coordinates. ctrl_ref is the target
// handed to the controllers at time t; eval_ref is the reference the error
// metrics are measured against (they differ for moving targets).
EvalReport run_tracking(const Mlp* actor,
                        const std::function<RefPoint(double)>& ctrl_ref,
                        const std::function<RefPoint(double)>& eval_ref,
                        const Vec3& start_pos, double duration, double dt,
                        double alpha_mag, const QuadParams& p,
                        const NominalGains& g, std::uint64_t seed,
                        const DomainBox* safety) {
  if (!(duration >= 0.0) || !(dt > 0.0))
    throw std::invalid_argument("eval: bad duration or dt");
  if (actor) {
    actor->validate();
    if (actor->input_dim() != 12 || actor->output_dim() != 4)
      throw std::invalid_argument("eval: actor must map 12 states to 4 inputs");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int steps = static_cast<int>(std::llround(duration / dt));

  EvalReport rep;
  Vec12 s_abs = Vec12::Zero();
  s_abs.segment<3>(kX) = start_pos;

  std::vector<double> pos_err;
  pos_err.reserve(steps + 1);

  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const RefPoint target = ctrl_ref(t);
    const RefPoint ref = eval_ref(t);

    Vec12 s_err = s_abs;
    s_err.segment<3>(kX) -= target.pos;
    s_err(kPsi) -= target.psi;

    const Vec4 u = actor ? Vec4(forward(*actor, VectorXd(s_err)))
                         : Vec4(Vec4::Zero());
    Vec4 alpha;
    for (int i = 0; i < 4; ++i) alpha(i) = alpha_mag * unif(rng);

    rep.traj.t.push_back(t);
    rep.traj.state.push_back(s_abs);
    rep.traj.control.push_back(u);
    rep.traj.alpha.push_back(alpha);
    rep.refs.push_back(Vec4(ref.pos(0), ref.pos(1), ref.pos(2), ref.psi));

    const double err = (s_abs.segment<3>(kX) - ref.pos).norm();
    pos_err.push_back(err);
    rep.metrics.ise += err * err * dt;
    rep.metrics.max_abs_psi_err =
        std::max(rep.metrics.max_abs_psi_err, std::abs(s_abs(kPsi) - ref.psi));
    if (safety) {
      for (int i = 0; i < 12 && !rep.metrics.left_domain; ++i)
        if (s_err(i) < safety->lower(i) || s_err(i) > safety->upper(i))
          rep.metrics.left_domain = true;
    }
    if (k == steps) break;

    Vec12 s_next;
    try {
      s_next = step(s_err, u, alpha, dt, p, g);
    } catch (const SingularAttitudeError&) {
      rep.metrics.fault = true;
      break;
    }
    if (!s_next.allFinite()) {
      rep.metrics.fault = true;
      break;
    }
    s_abs = s_next;
    s_abs.segment<3>(kX) += target.pos;
    s_abs(kPsi) += target.psi;
  }

  rep.metrics.terminal_error = pos_err.empty() ? 0.0 : pos_err.back();
  const double initial = pos_err.empty() ? 0.0 : pos_err.front();
  const double thr = 0.05 * initial;
  if (initial <= 1e-12) {
    rep.metrics.settled = !rep.metrics.fault;
    rep.metrics.time_to_5pct = 0.0;
  } else {
    // Settling time: earliest instant after which the error stays below 5%
    // of the initial error for the rest of the run.
    int settle = static_cast<int>(pos_err.size());
    for (int k = static_cast<int>(pos_err.size()) - 1; k >= 0; --k) {
      if (pos_err[k] <= thr)
        settle = k;
      else
        break;
    }
    rep.metrics.settled =
        !rep.metrics.fault && settle < static_cast<int>(pos_err.size());
    rep.metrics.time_to_5pct =
        rep.metrics.settled ? settle * dt : duration;
  }
  return rep;
}

}  // namespace

EvalReport eval_position(const Mlp* actor, const EvalConfig& cfg,
                         const QuadParams& p, const NominalGains& g,
                         std::uint64_t seed, const DomainBox* safety) {
  const RefPoint fixed{cfg.target, cfg.psi_d};
  auto constant = [fixed](double) { return fixed; };
  return run_tracking(actor, constant, constant, Vec3::Zero(), cfg.duration,
                      cfg.dt, cfg.alpha_mag, p, g, seed, safety);
}

EvalReport eval_trajectory(const Mlp* actor, const PolyTrajectory& traj,
                           const EvalConfig& cfg, const QuadParams& p,
                           const NominalGains& g, std::uint64_t seed,
                           const DomainBox* safety) {
  const double span = traj.t_max() - traj.t_min();
  const double duration = std::min(cfg.traj_duration, span);
  const double t0 = traj.t_min();
  const double dt = cfg.dt;
  const double t_last = traj.t_max();
  // The controller chases the planner position of the next sample instant.
  auto ctrl = [&traj, t0, dt, t_last](double t) {
    const auto s = traj.sample(std::min(t0 + t + dt, t_last));
    return RefPoint{s.pos, s.psi_d};
  };
  auto eval = [&traj, t0, t_last](double t) {
    const auto s = traj.sample(std::min(t0 + t, t_last));
    return RefPoint{s.pos, s.psi_d};
  };
  return run_tracking(actor, ctrl, eval, traj.sample(t0).pos, duration, dt,
                      cfg.alpha_mag, p, g, seed, safety);
}

double mean_position_error(const EvalReport& rep) {
  if (rep.traj.t.empty()) return 0.0;
  double sum = 0.0;
  for (size_t k = 0; k < rep.traj.t.size(); ++k)
    sum += (rep.traj.state[k].segment<3>(kX) -
            Vec3(rep.refs[k](0), rep.refs[k](1), rep.refs[k](2)))
               .norm();
  return sum / static_cast<double>(rep.traj.t.size());
}

}  // namespace cfl
