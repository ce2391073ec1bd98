#include "certiflight/rl_train.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace cfl {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

// splitmix64 of (seed, salt): decorrelated per-iteration rollout streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip_factor > 0.0)) throw std::invalid_argument("ppo: clip_factor <= 0");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("ppo: discount outside (0, 1)");
  if (!(gae_factor >= 0.0 && gae_factor <= 1.0))
    throw std::invalid_argument("ppo: gae_factor outside [0, 1]");
  if (!(entropy_weight >= 0.0))
    throw std::invalid_argument("ppo: negative entropy_weight");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0))
    throw std::invalid_argument("ppo: nonpositive learning rate");
  if (horizon <= 0) throw std::invalid_argument("ppo: horizon <= 0");
  if (minibatch <= 0) throw std::invalid_argument("ppo: minibatch <= 0");
  if (epochs <= 0) throw std::invalid_argument("ppo: epochs <= 0");
  if (iterations < 0) throw std::invalid_argument("ppo: negative iterations");
  if (!(episode_seconds > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("ppo: nonpositive episode length or dt");
  if (!(ref_radius > 0.0)) throw std::invalid_argument("ppo: ref_radius <= 0");
  if (!(alpha_mag >= 0.0)) throw std::invalid_argument("ppo: alpha_mag < 0");
}

Mlp ActorCritic::actor_mean() const {
  Mlp net = trunk;
  net.layers.push_back(mean_head);
  net.layers.back().act = Activation::kNone;
  return net;
}

void ActorCritic::validate() const {
  trunk.validate();
  critic.validate();
  const int hidden = trunk.output_dim();
  if (mean_head.W.cols() != hidden || logvar_head.W.cols() != hidden)
    throw std::invalid_argument("ActorCritic: head width mismatch");
  if (mean_head.W.rows() != logvar_head.W.rows())
    throw std::invalid_argument("ActorCritic: head output mismatch");
  if (critic.output_dim() != 1)
    throw std::invalid_argument("ActorCritic: critic must be scalar");
}

ActorCritic make_actor_critic(const PpoConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x1ce));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto he_layer = [&](int rows, int cols, Activation act, double scale) {
    MlpLayer l;
    l.W.resize(rows, cols);
    const double sd = scale * std::sqrt(2.0 / cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) l.W(i, j) = sd * gauss(rng);
    l.b = VectorXd::Zero(rows);
    l.act = act;
    return l;
  };

  ActorCritic ac;
  ac.trunk.layers.push_back(he_layer(64, 12, Activation::kRelu, 1.0));
  for (int k = 0; k < 4; ++k)
    ac.trunk.layers.push_back(he_layer(64, 64, Activation::kRelu, 1.0));
  ac.mean_head = he_layer(4, 64, Activation::kNone, 0.01);
  ac.logvar_head = he_layer(4, 64, Activation::kNone, 0.01);
  ac.logvar_head.b.setConstant(cfg.logvar_init);

  const int widths[] = {256, 256, 192, 192};
  int prev = 12;
  for (int w : widths) {
    ac.critic.layers.push_back(he_layer(w, prev, Activation::kRelu, 1.0));
    prev = w;
  }
  ac.critic.layers.push_back(he_layer(1, prev, Activation::kNone, 1.0));
  ac.validate();
  return ac;
}

double reward(const Vec12& s_err) {
  const double pe = s_err.segment<3>(kX).norm();
  const double psie = std::abs(s_err(kPsi));
  // nu collects everything that must be at rest at the reference: linear
  // velocity and body rates.
  Eigen::Matrix<double, 6, 1> nu;
  nu << s_err.segment<3>(kVx), s_err.segment<3>(kP);
  const double r_pos = std::exp(-2.0 * pe);
  const double r_psi = std::exp(-psie);
  if (pe > 0.3) return 0.8 * r_pos + 0.2 * r_psi;
  return 0.6 * r_pos + 0.2 * r_psi + 0.2 * std::exp(-2.0 * nu.norm());
}

void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double bootstrap, double discount, double gae_factor,
         std::vector<double>* advantages, std::vector<double>* returns_out) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("gae: rewards/values length mismatch");
  const int T = static_cast<int>(rewards.size());
  advantages->assign(T, 0.0);
  if (returns_out) returns_out->assign(T, 0.0);
  double next_value = bootstrap;
  double acc = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const double delta = rewards[t] + discount * next_value - values[t];
    acc = delta + discount * gae_factor * acc;
    (*advantages)[t] = acc;
    if (returns_out) (*returns_out)[t] = acc + values[t];
    next_value = values[t];
  }
}

double gaussian_logprob(const VectorXd& u, const VectorXd& mean,
                        const VectorXd& logvar) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double d = u(j) - mean(j);
    lp -= 0.5 * (d * d * std::exp(-logvar(j)) + logvar(j) + kLog2Pi);
  }
  return lp;
}

RolloutBuffer collect_rollout(const ActorCritic& ac, const QuadParams& p,
                              const NominalGains& g, const PpoConfig& cfg,
                              int horizon, std::uint64_t seed) {
  ac.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int ep_steps = static_cast<int>(std::llround(cfg.episode_seconds / cfg.dt));
  const Mlp mean_net = ac.actor_mean();

  RolloutBuffer buf;
  buf.states.resize(12, horizon);
  buf.actions.resize(4, horizon);
  buf.logprob.resize(horizon);
  buf.advantage.resize(horizon);
  buf.value_target.resize(horizon);

  std::vector<double> adv_all(horizon), ret_all(horizon);
  std::vector<double> ep_rewards, ep_lengths;
  int filled = 0;

  while (filled < horizon) {
    // New episode: vehicle at rest at the origin, reference uniform in the
    // ball of radius ref_radius, so the shifted state starts at -reference.
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    if (dir.norm() < 1e-12) dir = Vec3::UnitX();
    dir.normalize();
    const double radius = cfg.ref_radius * std::cbrt(unif(rng));
    Vec12 s = Vec12::Zero();
    s.segment<3>(kX) = -radius * dir;

    std::vector<double> seg_r, seg_v;
    const int seg_begin = filled;
    double bootstrap = 0.0;
    bool fault = false;
    int t = 0;
    for (; t < ep_steps && filled < horizon; ++t) {
      const VectorXd h = forward(ac.trunk, VectorXd(s));
      const VectorXd mu = ac.mean_head.W * h + ac.mean_head.b;
      const VectorXd lv = ac.logvar_head.W * h + ac.logvar_head.b;
      Vec4 u;
      for (int j = 0; j < 4; ++j)
        u(j) = mu(j) + std::exp(0.5 * lv(j)) * gauss(rng);
      Vec4 alpha;
      for (int j = 0; j < 4; ++j)
        alpha(j) = cfg.alpha_mag * (2.0 * unif(rng) - 1.0);

      buf.states.col(filled) = s;
      buf.actions.col(filled) = u;
      buf.logprob(filled) = gaussian_logprob(u, mu, lv);
      seg_v.push_back(forward(ac.critic, VectorXd(s))(0));

      Vec12 s_next;
      try {
        s_next = step(s, u, alpha, cfg.dt, p, g);
      } catch (const SingularAttitudeError&) {
        fault = true;
      }
      if (!fault && !s_next.allFinite()) fault = true;
      if (fault) {
        seg_r.push_back(0.0);  // crash step earns nothing
        ++filled;
        break;
      }
      s = s_next;
      seg_r.push_back(reward(s));
      ++filled;
    }

    const bool truncated = !fault && t < ep_steps;  // horizon cut mid-episode
    if (fault) {
      bootstrap = 0.0;  // crash is genuinely terminal
      ++buf.faults;
    } else {
      // Timeouts and horizon cuts are time limits, not task termination:
      // bootstrap with the critic to avoid biasing values near the cut.
      bootstrap = forward(ac.critic, VectorXd(s))(0);
    }

    std::vector<double> adv, ret;
    gae(seg_r, seg_v, bootstrap, cfg.discount, cfg.gae_factor, &adv, &ret);
    for (size_t k = 0; k < adv.size(); ++k) {
      adv_all[seg_begin + k] = adv[k];
      ret_all[seg_begin + k] = ret[k];
    }

    double total = 0.0;
    for (double r : seg_r) total += r;
    // Fully played-out episodes enter the statistics; the horizon-cut
    // segment is included only when nothing else completed (short horizons)
    // so the learning curve never reads an uninformative zero.
    if (!truncated || ep_rewards.empty()) {
      ep_rewards.push_back(total);
      ep_lengths.push_back(static_cast<double>(seg_r.size()));
    }
  }

  double adv_mean = 0.0;
  for (double a : adv_all) adv_mean += a;
  adv_mean /= horizon;
  double adv_var = 0.0;
  for (double a : adv_all) adv_var += (a - adv_mean) * (a - adv_mean);
  const double adv_sd = std::sqrt(adv_var / horizon) + 1e-8;
  for (int k = 0; k < horizon; ++k) {
    buf.advantage(k) = (adv_all[k] - adv_mean) / adv_sd;
    buf.value_target(k) = ret_all[k];
  }

  if (!ep_rewards.empty()) {
    for (double r : ep_rewards) buf.mean_reward += r;
    buf.mean_reward /= static_cast<double>(ep_rewards.size());
    for (double l : ep_lengths) buf.mean_ep_len += l;
    buf.mean_ep_len /= static_cast<double>(ep_lengths.size());
  }
  return buf;
}

namespace {

// Forward pass through an Mlp keeping every post-activation (index 0 is the
// input); relu masks are recovered from the stored activations.
std::vector<MatrixXd> forward_cached(const Mlp& net, const MatrixXd& X) {
  std::vector<MatrixXd> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(X);
  for (const MlpLayer& l : net.layers) {
    MatrixXd H = (l.W * acts.back()).colwise() + l.b;
    if (l.act == Activation::kRelu) H = H.cwiseMax(0.0);
    acts.push_back(std::move(H));
  }
  return acts;
}

// Backpropagates d(loss)/d(output) through the cached forward pass,
// accumulating parameter gradients; returns d(loss)/d(input).
MatrixXd backward(const Mlp& net, const std::vector<MatrixXd>& acts,
                  MatrixXd grad_out, MlpGrads* grads) {
  const int L = static_cast<int>(net.layers.size());
  if (grads) {
    grads->dW.resize(L);
    grads->db.resize(L);
  }
  for (int l = L - 1; l >= 0; --l) {
    if (net.layers[l].act == Activation::kRelu)
      grad_out = grad_out.cwiseProduct(
          (acts[l + 1].array() > 0.0).cast<double>().matrix());
    if (grads) {
      grads->dW[l] = grad_out * acts[l].transpose();
      grads->db[l] = grad_out.rowwise().sum();
    }
    if (l > 0) grad_out = (net.layers[l].W.transpose() * grad_out).eval();
  }
  return net.layers.empty() ? grad_out
                            : net.layers[0].W.transpose() * grad_out;
}

}  // namespace

double actor_loss(const ActorCritic& ac, const RolloutBuffer& buf,
                  const PpoConfig& cfg, ActorGrads* grads) {
  const int N = buf.size();
  if (N == 0) throw std::invalid_argument("actor_loss: empty batch");
  const std::vector<MatrixXd> acts = forward_cached(ac.trunk, buf.states);
  const MatrixXd& H = acts.back();
  const MatrixXd Mu = (ac.mean_head.W * H).colwise() + ac.mean_head.b;
  const MatrixXd Lv = (ac.logvar_head.W * H).colwise() + ac.logvar_head.b;
  const int du = static_cast<int>(Mu.rows());

  double loss = 0.0;
  MatrixXd Gmu = MatrixXd::Zero(du, N);
  MatrixXd Glv = MatrixXd::Zero(du, N);
  const double lo = 1.0 - cfg.clip_factor, hi = 1.0 + cfg.clip_factor;
  for (int i = 0; i < N; ++i) {
    double lp = 0.0;
    for (int j = 0; j < du; ++j) {
      const double d = buf.actions(j, i) - Mu(j, i);
      lp -= 0.5 * (d * d * std::exp(-Lv(j, i)) + Lv(j, i) + kLog2Pi);
    }
    const double ratio = std::exp(lp - buf.logprob(i));
    const double A = buf.advantage(i);
    const double clipped = std::min(std::max(ratio, lo), hi);
    const double surr = std::min(ratio * A, clipped * A);
    loss -= surr / N;
    // d surr / d lp = A * ratio when the unclipped branch attains the min
    // (the clipped branch is locally constant in lp).
    const double dsurr = (ratio * A <= clipped * A) ? A * ratio : 0.0;
    const double glp = -dsurr / N;
    double ent = 0.0;
    for (int j = 0; j < du; ++j) {
      const double d = buf.actions(j, i) - Mu(j, i);
      const double inv_var = std::exp(-Lv(j, i));
      Gmu(j, i) = glp * d * inv_var;
      Glv(j, i) = glp * 0.5 * (d * d * inv_var - 1.0) -
                  cfg.entropy_weight * 0.5 / N;
      ent += 0.5 * (Lv(j, i) + kLog2Pi + 1.0);
    }
    loss -= cfg.entropy_weight * ent / N;
  }
  if (!std::isfinite(loss))
    throw std::runtime_error("actor_loss: non-finite loss");

  if (grads) {
    grads->dW_mean = Gmu * H.transpose();
    grads->db_mean = Gmu.rowwise().sum();
    grads->dW_logvar = Glv * H.transpose();
    grads->db_logvar = Glv.rowwise().sum();
    const MatrixXd Gh = ac.mean_head.W.transpose() * Gmu +
                        ac.logvar_head.W.transpose() * Glv;
    backward(ac.trunk, acts, Gh, &grads->trunk);
  }
  return loss;
}

double critic_loss(const Mlp& critic, const MatrixXd& states,
                   const VectorXd& targets, MlpGrads* grads) {
  const int N = static_cast<int>(states.cols());
  if (N == 0) throw std::invalid_argument("critic_loss: empty batch");
  const std::vector<MatrixXd> acts = forward_cached(critic, states);
  const MatrixXd& V = acts.back();
  double loss = 0.0;
  MatrixXd Gv(1, N);
  for (int i = 0; i < N; ++i) {
    const double e = V(0, i) - targets(i);
    loss += e * e / N;
    Gv(0, i) = 2.0 * e / N;
  }
  if (!std::isfinite(loss))
    throw std::runtime_error("critic_loss: non-finite loss");
  if (grads) backward(critic, acts, Gv, grads);
  return loss;
}

double policy_entropy(const ActorCritic& ac, const MatrixXd& states) {
  const MatrixXd H = forward(ac.trunk, states);
  const MatrixXd Lv = (ac.logvar_head.W * H).colwise() + ac.logvar_head.b;
  const double per = 0.5 * (kLog2Pi + 1.0) * Lv.rows();
  return per + 0.5 * Lv.sum() / Lv.cols();
}

namespace {

// Adam with bias correction over one parameter tensor.
struct AdamTensor {
  MatrixXd m, v;
  void init(Eigen::Index r, Eigen::Index c) {
    m = MatrixXd::Zero(r, c);
    v = MatrixXd::Zero(r, c);
  }
  void apply(MatrixXd& w, const MatrixXd& g, double lr, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    w -= (lr / c1) *
         (m.array() / ((v.array() / c2).sqrt() + eps)).matrix();
  }
};

struct AdamMlp {
  std::vector<AdamTensor> W, b;
  void init(const Mlp& net) {
    W.resize(net.layers.size());
    b.resize(net.layers.size());
    for (size_t l = 0; l < net.layers.size(); ++l) {
      W[l].init(net.layers[l].W.rows(), net.layers[l].W.cols());
      b[l].init(net.layers[l].b.size(), 1);
    }
  }
  void apply(Mlp& net, const MlpGrads& g, double lr, int t) {
    for (size_t l = 0; l < net.layers.size(); ++l) {
      W[l].apply(net.layers[l].W, g.dW[l], lr, t);
      MatrixXd bm = net.layers[l].b;
      b[l].apply(bm, g.db[l], lr, t);
      net.layers[l].b = bm;
    }
  }
};

}  // namespace

ActorCritic train(const PpoConfig& cfg, const QuadParams& p,
                  const NominalGains& g, const std::string& curve_csv,
                  std::vector<TrainStats>* stats) {
  cfg.validate();
  ActorCritic ac = make_actor_critic(cfg);

  AdamMlp opt_trunk, opt_critic;
  AdamTensor opt_Wm, opt_bm, opt_Wl, opt_bl;
  opt_trunk.init(ac.trunk);
  opt_critic.init(ac.critic);
  opt_Wm.init(4, 64);
  opt_bm.init(4, 1);
  opt_Wl.init(4, 64);
  opt_bl.init(4, 1);

  std::ofstream curve;
  if (!curve_csv.empty()) {
    curve.open(curve_csv);
    if (!curve) throw std::runtime_error("cannot open curve file: " + curve_csv);
    curve << "iter,mean_reward,mean_ep_len,actor_loss,critic_loss,entropy\n";
    curve.precision(9);
  }

  int adam_t = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const RolloutBuffer buf =
        collect_rollout(ac, p, g, cfg, cfg.horizon, mix_seed(cfg.seed, iter));

    TrainStats st;
    st.iter = iter;
    st.mean_reward = buf.mean_reward;
    st.mean_ep_len = buf.mean_ep_len;
    st.entropy = policy_entropy(ac, buf.states);

    const int batches = (buf.size() + cfg.minibatch - 1) / cfg.minibatch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (int bidx = 0; bidx < batches; ++bidx) {
        const int begin = bidx * cfg.minibatch;
        const int count = std::min(cfg.minibatch, buf.size() - begin);
        RolloutBuffer mb;
        mb.states = buf.states.middleCols(begin, count);
        mb.actions = buf.actions.middleCols(begin, count);
        mb.logprob = buf.logprob.segment(begin, count);
        mb.advantage = buf.advantage.segment(begin, count);
        mb.value_target = buf.value_target.segment(begin, count);

        ActorGrads ag;
        const double al = actor_loss(ac, mb, cfg, &ag);
        MlpGrads cg;
        const double cl =
            critic_loss(ac.critic, mb.states, mb.value_target, &cg);
        ++adam_t;
        opt_trunk.apply(ac.trunk, ag.trunk, cfg.actor_lr, adam_t);
        opt_Wm.apply(ac.mean_head.W, ag.dW_mean, cfg.actor_lr, adam_t);
        MatrixXd bm = ac.mean_head.b;
        opt_bm.apply(bm, ag.db_mean, cfg.actor_lr, adam_t);
        ac.mean_head.b = bm;
        opt_Wl.apply(ac.logvar_head.W, ag.dW_logvar, cfg.actor_lr, adam_t);
        MatrixXd bl = ac.logvar_head.b;
        opt_bl.apply(bl, ag.db_logvar, cfg.actor_lr, adam_t);
        ac.logvar_head.b = bl;
        opt_critic.apply(ac.critic, cg, cfg.critic_lr, adam_t);

        if (epoch == 0 && bidx == 0) {
          st.actor_loss = al;
          st.critic_loss = cl;
        }
      }
    }

    if (stats) stats->push_back(st);
    if (curve.is_open())
      curve << st.iter << ',' << st.mean_reward << ',' << st.mean_ep_len << ','
            << st.actor_loss << ',' << st.critic_loss << ',' << st.entropy
            << '\n';
  }
  return ac;
}

}  // namespace cfl
