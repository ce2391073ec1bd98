#pragma once

#include <cstdint>
#include <string>

#include "certiflight/mlp.hpp"
#include "certiflight/sdp.hpp"

namespace cfl {

enum class LipMethod { kInfProduct, kSpectralProduct, kSdp, kSampledLower };

LipMethod lip_method_from_string(const std::string& s);
std::string to_string(LipMethod m);

struct LipschitzEstimate {
  double value = 0.0;
  LipMethod method = LipMethod::kInfProduct;
  bool conservative_fallback = false;  // sdp solve failed, spectral returned
};

/// Product over layers of the max absolute row sum (infinity-norm operator
/// norm); bounds the infinity-norm Lipschitz constant.
LipschitzEstimate lipschitz_inf_product(const Mlp& net);

/// Product of largest singular values via power iteration (tolerance 1e-9,
/// at most 1e4 iterations per layer); bounds the L2 Lipschitz constant.
LipschitzEstimate lipschitz_spectral_product(const Mlp& net);

/// LipSDP with one multiplier per hidden neuron: minimizes rho subject to the
/// coupling PSD constraint and returns sqrt(rho). Valid L2 upper bound for
/// networks whose hidden activations are slope-restricted in [0, 1] (relu).
/// Falls back to spectral_product (flagged) on solver nonconvergence.
LipschitzEstimate lipschitz_sdp(const Mlp& net);

/// Empirical lower bound: max over sampled pairs (including tight
/// finite-difference pairs) of ||f(x)-f(y)|| / ||x-y||.
LipschitzEstimate sampled_lower(const Mlp& net, int samples = 100000,
                                std::uint64_t seed = 0,
                                double radius = 3.0);

LipschitzEstimate lipschitz_estimate(const Mlp& net, LipMethod method,
                                     std::uint64_t seed = 0);

/// Multiplies the final (linear) layer's weights and bias by
/// c = min(1, floor(1000 * L_target / estimate) / 1000) so the re-estimated
/// bound lands below L_target with a small margin; outputs scale exactly by c.
struct ScaleResult {
  Mlp net;
  double c = 1.0;
  LipschitzEstimate before, after;
};
ScaleResult scale_final_layer(const Mlp& net, double L_target,
                              LipMethod estimator = LipMethod::kSdp);

}  // namespace cfl
