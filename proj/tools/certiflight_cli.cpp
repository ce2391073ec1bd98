// Command-line front end: certify -> train -> enforce-lipschitz -> evaluate.
//
// Exit codes: 0 success, 1 usage or malformed input, 2 infeasible problem or
// uncertified controller, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "certiflight/config.hpp"
#include "certiflight/eval.hpp"
#include "certiflight/lipschitz.hpp"
#include "certiflight/lmi_certify.hpp"
#include "certiflight/plot.hpp"
#include "certiflight/rl_train.hpp"
#include "certiflight/traj_plan.hpp"

namespace {

constexpr int kOk = 0, kUsage = 1, kInfeasible = 2, kNumerical = 3;

struct Global {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

cfl::ExperimentConfig load(const Global& g) {
  cfl::ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = cfl::load_config(g.config_path);
  return cfg;
}

std::string out_path(const Global& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return (std::filesystem::path(g.out_dir) / name).string();
}

int cmd_certify(const Global& g) {
  cfl::ExperimentConfig cfg = load(g);
  cfl::SearchTrace trace;
  cfl::Certificate cert;
  try {
    cert = cfl::certify_quad(cfg.quad, cfg.gains, cfg.certify, &trace);
  } catch (const cfl::InitialInfeasibleError& e) {
    std::fprintf(stderr, "certify: %s (try a smaller L0 or S0)\n", e.what());
    return kInfeasible;
  }
  cert.config_hash = cfg.hash;
  const std::string path = out_path(g, "certificate.txt");
  cfl::write_certificate(cert, path);
  std::printf("L_star %.6f\n", cert.L_star);
  for (int gi = 0; gi < cert.S_star.num_groups(); ++gi) {
    const int i = cert.S_star.group_start[gi];
    std::printf("S_star group %d [%.6f, %.6f]\n", gi, cert.S_star.lower(i),
                cert.S_star.upper(i));
  }
  std::printf("margin %.3e\nattenuation %.3e\nfeasibility_checks %d\n",
              cert.margin, cert.attenuation, trace.feasibility_checks);
  std::printf("certificate %s\n", path.c_str());
  return kOk;
}

int cmd_train(const Global& g, const std::string& actor_out,
              const std::string& curve_out) {
  cfl::ExperimentConfig cfg = load(g);
  if (g.seed != 0) cfg.ppo.seed = g.seed;
  const std::string curve = out_path(g, curve_out);
  const cfl::ActorCritic ac =
      cfl::train(cfg.ppo, cfg.quad, cfg.gains, curve);
  const std::string model = out_path(g, actor_out);
  cfl::save_mlp(ac.actor_mean(), model);
  std::printf("actor %s\ncurve %s\n", model.c_str(), curve.c_str());
  return kOk;
}

int cmd_lipschitz(const std::string& model, const std::string& method,
                  std::uint64_t seed) {
  const cfl::Mlp net = cfl::load_mlp(model);
  const cfl::LipschitzEstimate est =
      cfl::lipschitz_estimate(net, cfl::lip_method_from_string(method), seed);
  std::printf("%s %.10g%s\n", to_string(est.method).c_str(), est.value,
              est.conservative_fallback ? " (conservative fallback)" : "");
  return kOk;
}

int cmd_enforce(const Global& g, const std::string& model, double target,
                const std::string& cert_path, const std::string& out) {
  if (target <= 0.0 && cert_path.empty()) {
    std::fprintf(stderr, "enforce-lipschitz: need --target or --cert\n");
    return kUsage;
  }
  if (target <= 0.0) target = cfl::read_certificate(cert_path).L_star;
  const cfl::Mlp net = cfl::load_mlp(model);
  const cfl::ScaleResult res = cfl::scale_final_layer(net, target);
  cfl::save_mlp(res.net, out_path(g, out));
  std::printf("c %.3f\nbefore %.10g\nafter %.10g\ntarget %.10g\n", res.c,
              res.before.value, res.after.value, target);
  return kOk;
}

// Shared gate for the combined-controller evaluations: refuse uncertified
// actors unless explicitly overridden.
int gate_actor(const cfl::Mlp& actor, const std::string& cert_path,
               bool uncertified, cfl::Certificate* cert_out) {
  if (uncertified) {
    if (!cert_path.empty()) *cert_out = cfl::read_certificate(cert_path);
    return kOk;
  }
  if (cert_path.empty()) {
    std::fprintf(stderr,
                 "eval: combined mode needs --cert (or --uncertified)\n");
    return kUsage;
  }
  *cert_out = cfl::read_certificate(cert_path);
  const double L = cfl::lipschitz_sdp(actor).value;
  if (L > cert_out->L_star) {
    std::fprintf(stderr,
                 "eval: actor Lipschitz estimate %.6g exceeds certified "
                 "L* = %.6g; run enforce-lipschitz first or pass "
                 "--uncertified\n",
                 L, cert_out->L_star);
    return kInfeasible;
  }
  return kOk;
}

void print_metrics(const cfl::EvalReport& rep, const std::string& csv) {
  const cfl::EvalMetrics& m = rep.metrics;
  std::printf("time_to_5pct %.4f\nise %.6f\nmax_abs_psi_err %.6f\n"
              "terminal_error %.6f\nsettled %d\nleft_domain %d\nfault %d\n"
              "csv %s\n",
              m.time_to_5pct, m.ise, m.max_abs_psi_err, m.terminal_error,
              int(m.settled), int(m.left_domain), int(m.fault), csv.c_str());
}

int cmd_eval_position(const Global& g, const std::string& mode,
                      const std::string& actor_path,
                      const std::string& cert_path, bool uncertified) {
  cfl::ExperimentConfig cfg = load(g);
  cfl::Mlp actor;
  cfl::Certificate cert;
  const bool combined = mode == "combined";
  if (combined) {
    actor = cfl::load_mlp(actor_path);
    const int rc = gate_actor(actor, cert_path, uncertified, &cert);
    if (rc != kOk) return rc;
  } else if (!cert_path.empty()) {
    cert = cfl::read_certificate(cert_path);
  }
  const cfl::DomainBox* safety =
      cert.S_star.dim() == 12 ? &cert.S_star : nullptr;
  const cfl::EvalReport rep =
      cfl::eval_position(combined ? &actor : nullptr, cfg.eval, cfg.quad,
                         cfg.gains, g.seed, safety);
  const std::string csv = out_path(g, "position_" + mode + ".csv");
  cfl::write_trajectory_csv(rep.traj, rep.refs, csv);
  print_metrics(rep, csv);
  return rep.metrics.fault ? kNumerical : kOk;
}

int cmd_eval_trajectory(const Global& g, const std::string& mode,
                        const std::string& actor_path,
                        const std::string& cert_path, bool uncertified,
                        const std::string& waypoints_path) {
  cfl::ExperimentConfig cfg = load(g);
  const auto waypoints = cfl::load_waypoints_csv(waypoints_path);
  const cfl::PolyTrajectory traj = cfl::min_snap(waypoints);
  cfl::Mlp actor;
  cfl::Certificate cert;
  const bool combined = mode == "combined";
  if (combined) {
    actor = cfl::load_mlp(actor_path);
    const int rc = gate_actor(actor, cert_path, uncertified, &cert);
    if (rc != kOk) return rc;
  } else if (!cert_path.empty()) {
    cert = cfl::read_certificate(cert_path);
  }
  const cfl::DomainBox* safety =
      cert.S_star.dim() == 12 ? &cert.S_star : nullptr;
  const cfl::EvalReport rep =
      cfl::eval_trajectory(combined ? &actor : nullptr, traj, cfg.eval,
                           cfg.quad, cfg.gains, g.seed, safety);
  const std::string csv = out_path(g, "trajectory_" + mode + ".csv");
  cfl::write_trajectory_csv(rep.traj, rep.refs, csv);
  std::printf("mean_position_error %.6f\n", cfl::mean_position_error(rep));
  print_metrics(rep, csv);
  return rep.metrics.fault ? kNumerical : kOk;
}

int cmd_plot(const Global& g, const std::string& csv,
             const std::string& layout, const std::string& out) {
  const cfl::PlotLayout l = layout == "trajectory"
                                ? cfl::PlotLayout::kTrajectory
                                : cfl::PlotLayout::kPosition;
  cfl::plot_trajectory_csv(csv, l, out_path(g, out));
  std::printf("plot %s.ppm\nplot_data %s.txt\n", out_path(g, out).c_str(),
              out_path(g, out).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certiflight: certification, training, and evaluation of "
               "Lipschitz-bounded NN quadcopter controllers"};
  app.require_subcommand(1);

  Global g;
  app.add_option("--config", g.config_path, "experiment config (INI)");
  app.add_option("--seed", g.seed, "random seed for stochastic commands");
  app.add_option("--out-dir", g.out_dir, "output directory");

  auto* certify = app.add_subcommand("certify", "maximal (L, S) search");

  std::string actor_out = "actor.net", curve_out = "curve.csv";
  auto* train = app.add_subcommand("train", "PPO training");
  train->add_option("--actor-out", actor_out, "actor model file name");
  train->add_option("--curve-out", curve_out, "learning-curve CSV name");

  std::string model, method = "sdp";
  auto* lipschitz = app.add_subcommand("lipschitz", "Lipschitz estimation");
  lipschitz->add_option("--model", model, "model file")->required();
  lipschitz->add_option("--method", method,
                        "inf_product|spectral_product|sdp|sampled_lower");

  std::string enf_model, enf_cert, enf_out = "actor_scaled.net";
  double enf_target = 0.0;
  auto* enforce =
      app.add_subcommand("enforce-lipschitz", "last-layer scaling to a target");
  enforce->add_option("--model", enf_model, "model file")->required();
  enforce->add_option("--target", enf_target, "Lipschitz target");
  enforce->add_option("--cert", enf_cert, "certificate supplying L*");
  enforce->add_option("--out", enf_out, "scaled model file name");

  std::string ep_mode = "nominal", ep_actor, ep_cert;
  bool ep_uncert = false;
  auto* evalp = app.add_subcommand("eval-position", "step-reference tracking");
  evalp->add_option("--mode", ep_mode, "nominal|combined")
      ->check(CLI::IsMember({"nominal", "combined"}));
  evalp->add_option("--actor", ep_actor, "actor model (combined mode)");
  evalp->add_option("--cert", ep_cert, "certificate file");
  evalp->add_flag("--uncertified", ep_uncert, "skip the certificate gate");

  std::string et_mode = "nominal", et_actor, et_cert, et_waypoints;
  bool et_uncert = false;
  auto* evalt =
      app.add_subcommand("eval-trajectory", "minimum-snap trajectory tracking");
  evalt->add_option("--mode", et_mode, "nominal|combined")
      ->check(CLI::IsMember({"nominal", "combined"}));
  evalt->add_option("--actor", et_actor, "actor model (combined mode)");
  evalt->add_option("--cert", et_cert, "certificate file");
  evalt->add_flag("--uncertified", et_uncert, "skip the certificate gate");
  evalt->add_option("--waypoints", et_waypoints, "waypoints CSV")->required();

  std::string plot_csv, plot_layout = "position", plot_out = "plot";
  auto* plot = app.add_subcommand("plot", "render a trajectory CSV");
  plot->add_option("--csv", plot_csv, "trajectory CSV")->required();
  plot->add_option("--layout", plot_layout, "position|trajectory")
      ->check(CLI::IsMember({"position", "trajectory"}));
  plot->add_option("--out", plot_out, "output file prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (certify->parsed()) return cmd_certify(g);
    if (train->parsed()) return cmd_train(g, actor_out, curve_out);
    if (lipschitz->parsed()) return cmd_lipschitz(model, method, g.seed);
    if (enforce->parsed())
      return cmd_enforce(g, enf_model, enf_target, enf_cert, enf_out);
    if (evalp->parsed())
      return cmd_eval_position(g, ep_mode, ep_actor, ep_cert, ep_uncert);
    if (evalt->parsed())
      return cmd_eval_trajectory(g, et_mode, et_actor, et_cert, et_uncert,
                                 et_waypoints);
    if (plot->parsed())
      return cmd_plot(g, plot_csv, plot_layout, plot_out);
  } catch (const cfl::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const cfl::MlpFormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const cfl::TrajectoryError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const cfl::PlotError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const cfl::InitialInfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInfeasible;
  } catch (const cfl::SolverNonconvergence& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const cfl::SimulationFault& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  }
  return kUsage;
}
