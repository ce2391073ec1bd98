#include "certiflight/lipschitz.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace cfl {

LipMethod lip_method_from_string(const std::string& s) {
  if (s == "inf_product") return LipMethod::kInfProduct;
  if (s == "spectral_product") return LipMethod::kSpectralProduct;
  if (s == "sdp") return LipMethod::kSdp;
  if (s == "sampled_lower") return LipMethod::kSampledLower;
  throw std::invalid_argument("unknown lipschitz method: " + s);
}

std::string to_string(LipMethod m) {
  switch (m) {
    case LipMethod::kInfProduct: return "inf_product";
    case LipMethod::kSpectralProduct: return "spectral_product";
    case LipMethod::kSdp: return "sdp";
    case LipMethod::kSampledLower: return "sampled_lower";
  }
  return "?";
}

LipschitzEstimate lipschitz_inf_product(const Mlp& net) {
  net.validate();
  double prod = 1.0;
  for (const MlpLayer& l : net.layers)
    prod *= l.W.cwiseAbs().rowwise().sum().maxCoeff();
  return {prod, LipMethod::kInfProduct, false};
}

namespace {

// Largest singular value by power iteration on W^T W. Deterministic start.
double spectral_norm(const MatrixXd& W, double tol = 1e-9,
                     int max_iters = 10000) {
  VectorXd v = VectorXd::Ones(W.cols()).normalized();
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    VectorXd u = W * v;
    const double s = u.norm();
    if (s == 0.0) return 0.0;
    v = W.transpose() * u / s;
    const double s2 = v.norm();
    v /= s2;
    if (std::abs(s2 - sigma) <= tol * std::max(1.0, s2)) return s2;
    sigma = s2;
  }
  return sigma;  // best iterate; nonconvergence is benign for a bound this way
}

}  // namespace

LipschitzEstimate lipschitz_spectral_product(const Mlp& net) {
  net.validate();
  double prod = 1.0;
  for (const MlpLayer& l : net.layers) prod *= spectral_norm(l.W);
  return {prod, LipMethod::kSpectralProduct, false};
}

LipschitzEstimate lipschitz_sdp(const Mlp& net) {
  net.validate();
  const int depth = static_cast<int>(net.layers.size());
  for (int i = 0; i + 1 < depth; ++i)
    if (net.layers[i].act != Activation::kRelu)
      throw std::invalid_argument(
          "lipschitz_sdp: hidden activations must be relu");
  if (net.layers.back().act != Activation::kNone)
    throw std::invalid_argument("lipschitz_sdp: final layer must be linear");

  if (depth == 1) {
    const double s = spectral_norm(net.layers[0].W);
    return {s, LipMethod::kSdp, false};
  }

  // Variable vector over (x0, z1, ..., z_{l-1}) where z_i are the hidden
  // post-activation outputs; l-1 hidden layers, final linear layer W_l.
  const int hidden = depth - 1;
  std::vector<int> off(hidden + 1);
  off[0] = 0;
  int dim = net.layers[0].W.cols();
  for (int i = 0; i < hidden; ++i) {
    off[i + 1] = dim;
    dim += static_cast<int>(net.layers[i].W.rows());
  }
  const int n0 = net.layers[0].W.cols();
  int n_neurons = 0;
  for (int i = 0; i < hidden; ++i)
    n_neurons += static_cast<int>(net.layers[i].W.rows());

  // min rho s.t. S = -M(rho, lambda) > 0 with
  //   M = sum_k lambda_k [a_k b_k^T + b_k a_k^T - 2 b_k b_k^T]
  //       - rho I_{n0} + blkdiag(0,...,0, W_l^T W_l)
  // where a_k is neuron k's incoming weight row placed over its input slot
  // and b_k the unit vector of its output slot.
  SdpProblem prob;
  prob.nvar = 1 + n_neurons;
  prob.cost = VectorXd::Zero(prob.nvar);
  prob.cost(0) = 1.0;

  SdpBlock blk;
  blk.dim = dim;
  blk.F0 = MatrixXd::Zero(dim, dim);
  const MatrixXd& Wl = net.layers.back().W;
  blk.F0.bottomRightCorner(Wl.cols(), Wl.cols()) = -Wl.transpose() * Wl;
  blk.coeff.resize(prob.nvar);
  for (int i = 0; i < n0; ++i)
    blk.coeff[0].push_back({{{i, 1.0}}, {{i, 0.5}}});

  int var = 1;
  for (int i = 0; i < hidden; ++i) {
    const MatrixXd& W = net.layers[i].W;
    const int in_off = off[i], out_off = off[i + 1];
    for (int k = 0; k < W.rows(); ++k, ++var) {
      SparseVec a;
      for (int j = 0; j < W.cols(); ++j)
        if (W(k, j) != 0.0) a.push_back({in_off + j, -W(k, j)});
      SparseVec b = {{out_off + k, 1.0}};
      blk.coeff[var].push_back({a, b});                       // -(ab^T+ba^T)
      blk.coeff[var].push_back({b, {{out_off + k, 1.0}}});    // +2 bb^T
      prob.bounds.push_back({var, 0.0});
    }
  }
  prob.blocks.push_back(std::move(blk));

  // Strictly feasible start by backward Schur recursion: per-layer uniform
  // multipliers tau_i large enough that each elimination stays definite.
  prob.x0 = VectorXd::Zero(prob.nvar);
  MatrixXd G = Wl.transpose() * Wl;
  std::vector<double> tau(hidden);
  for (int i = hidden - 1; i >= 0; --i) {
    const double lam_max =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(G).eigenvalues().maxCoeff();
    tau[i] = std::max(1.0, lam_max);
    const MatrixXd& W = net.layers[i].W;
    const MatrixXd mid =
        (2.0 * tau[i] * MatrixXd::Identity(G.rows(), G.rows()) - G);
    G = tau[i] * tau[i] * W.transpose() * mid.llt().solve(W);
  }
  const double rho0 =
      2.0 * std::max(1.0, Eigen::SelfAdjointEigenSolver<MatrixXd>(G)
                              .eigenvalues()
                              .maxCoeff());
  prob.x0(0) = rho0;
  var = 1;
  for (int i = 0; i < hidden; ++i)
    for (int k = 0; k < net.layers[i].W.rows(); ++k, ++var)
      prob.x0(var) = tau[i];

  SdpOptions sdp_opts;
  sdp_opts.gap_tol = 1e-7;  // the estimate is an upper bound at any centered
                            // iterate, so a relative 1e-7 gap is ample
  SdpResult res = solve_sdp(prob, sdp_opts);
  if (!res.converged) {
    LipschitzEstimate fb = lipschitz_spectral_product(net);
    return {fb.value, LipMethod::kSdp, true};
  }
  return {std::sqrt(std::max(0.0, res.obj)), LipMethod::kSdp, false};
}

LipschitzEstimate sampled_lower(const Mlp& net, int samples,
                                std::uint64_t seed, double radius) {
  net.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = net.input_dim();
  double best = 0.0;
  for (int it = 0; it < samples; ++it) {
    VectorXd x(n), d(n);
    for (int i = 0; i < n; ++i) {
      x(i) = radius * gauss(rng);
      d(i) = gauss(rng);
    }
    d.normalize();
    // Tight finite-difference pairs probe local gradients; occasional long
    // pairs catch secant growth across kinks.
    const double h = (it % 4 == 0) ? radius : 1e-5;
    const VectorXd y = x + h * d;
    const double num = (forward(net, VectorXd(y)) - forward(net, x)).norm();
    best = std::max(best, num / h);
  }
  return {best, LipMethod::kSampledLower, false};
}

LipschitzEstimate lipschitz_estimate(const Mlp& net, LipMethod method,
                                     std::uint64_t seed) {
  switch (method) {
    case LipMethod::kInfProduct: return lipschitz_inf_product(net);
    case LipMethod::kSpectralProduct: return lipschitz_spectral_product(net);
    case LipMethod::kSdp: return lipschitz_sdp(net);
    case LipMethod::kSampledLower: return sampled_lower(net, 100000, seed);
  }
  throw std::invalid_argument("lipschitz_estimate: bad method");
}

ScaleResult scale_final_layer(const Mlp& net, double L_target,
                              LipMethod estimator) {
  net.validate();
  if (net.layers.back().act != Activation::kNone)
    throw std::invalid_argument("scale_final_layer: final layer must be linear");
  ScaleResult out;
  out.before = lipschitz_estimate(net, estimator);
  if (!(out.before.value > 0.0))
    throw std::invalid_argument("scale_final_layer: estimate must be positive");
  out.c = std::min(1.0, std::floor(1000.0 * L_target / out.before.value) / 1000.0);
  out.net = net;
  out.net.layers.back().W *= out.c;
  out.net.layers.back().b *= out.c;
  out.after = lipschitz_estimate(out.net, estimator);
  return out;
}

}  // namespace cfl
