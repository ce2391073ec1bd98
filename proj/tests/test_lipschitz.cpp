#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>
#include <random>

#include "certiflight/lipschitz.hpp"

using namespace cfl;

namespace {

Mlp random_relu_net(std::mt19937_64* rng, int depth, int width, int in_dim,
                    int out_dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mlp net;
  int prev = in_dim;
  for (int l = 0; l < depth; ++l) {
    const int rows = (l == depth - 1) ? out_dim : width;
    MlpLayer layer;
    layer.W = MatrixXd::NullaryExpr(
        rows, prev, [&]() { return gauss(*rng) / std::sqrt(double(prev)); });
    layer.b = VectorXd::NullaryExpr(rows, [&]() { return 0.1 * gauss(*rng); });
    layer.act = (l == depth - 1) ? Activation::kNone : Activation::kRelu;
    net.layers.push_back(layer);
    prev = rows;
  }
  return net;
}

}  // namespace

TEST_CASE("spectral product matches an SVD oracle") {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 20; ++k) {
    const Mlp net = random_relu_net(&rng, 3, 16, 8, 4);
    double prod = 1.0;
    for (const MlpLayer& l : net.layers) {
      const Eigen::JacobiSVD<MatrixXd> svd(l.W);
      prod *= svd.singularValues()(0);
    }
    CHECK(lipschitz_spectral_product(net).value ==
          doctest::Approx(prod).epsilon(1e-7));
  }
}

TEST_CASE("estimator sandwich: sampled <= sdp <= spectral product") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> depth_d(1, 5), width_d(4, 64);
  for (int k = 0; k < 25; ++k) {  // the acceptance gate runs the full 100
    const Mlp net =
        random_relu_net(&rng, depth_d(rng), width_d(rng), 6, 3);
    const double lower = sampled_lower(net, 2000, k).value;
    const double sdp = lipschitz_sdp(net).value;
    const double upper = lipschitz_spectral_product(net).value;
    CHECK(lower <= sdp + 1e-6);
    CHECK(sdp <= upper + 1e-6);
  }
}

TEST_CASE("single linear layer: sdp equals the spectral norm") {
  std::mt19937_64 rng(47);
  for (int k = 0; k < 10; ++k) {
    const Mlp net = random_relu_net(&rng, 1, 0, 7, 5);
    const double sdp = lipschitz_sdp(net).value;
    const double spec = lipschitz_spectral_product(net).value;
    CHECK(std::abs(sdp - spec) < 1e-6 * std::max(1.0, spec));
  }
}

TEST_CASE("inf-norm product bounds sampled inf-norm slopes") {
  std::mt19937_64 rng(53);
  const Mlp net = random_relu_net(&rng, 3, 24, 6, 4);
  const double bound = lipschitz_inf_product(net).value;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    VectorXd x = VectorXd::NullaryExpr(6, [&]() { return gauss(rng); });
    VectorXd y = x + 1e-4 * VectorXd::NullaryExpr(6, [&]() { return gauss(rng); });
    const double num =
        (forward(net, x) - forward(net, y)).lpNorm<Eigen::Infinity>();
    const double den = (x - y).lpNorm<Eigen::Infinity>();
    CHECK(num <= bound * den * (1.0 + 1e-9));
  }
}

TEST_CASE("final-layer scaling: exact output scaling and the 3.1519 scenario") {
  std::mt19937_64 rng(59);
  Mlp net = random_relu_net(&rng, 4, 32, 12, 4);

  // Force the sdp estimate to exactly 3.1519 by scaling the last layer.
  const double est0 = lipschitz_sdp(net).value;
  net.layers.back().W *= 3.1519 / est0;
  net.layers.back().b *= 3.1519 / est0;
  REQUIRE(lipschitz_sdp(net).value == doctest::Approx(3.1519).epsilon(1e-9));

  const ScaleResult res = scale_final_layer(net, 1.2613);
  CHECK(res.c == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(res.after.value < 1.2613);
  CHECK(res.after.value == doctest::Approx(0.4 * 3.1519).epsilon(1e-9));

  // Outputs scale exactly by c.
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const VectorXd x = VectorXd::NullaryExpr(12, [&]() { return gauss(rng); });
    const VectorXd a = forward(net, x);
    const VectorXd b = forward(res.net, x);
    CHECK((b - res.c * a).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  // Already-compliant networks are left untouched (c = 1).
  const ScaleResult noop = scale_final_layer(res.net, 10.0);
  CHECK(noop.c == 1.0);
}

TEST_CASE("model file round trip and format errors") {
  std::mt19937_64 rng(61);
  const Mlp net = random_relu_net(&rng, 3, 16, 12, 4);
  const std::string text = serialize_mlp(net);
  CHECK(text.rfind("mlpv1 3", 0) == 0);

  const Mlp back = deserialize_mlp(text);
  REQUIRE(back.layers.size() == net.layers.size());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    CHECK((back.layers[l].W - net.layers[l].W).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.layers[l].b - net.layers[l].b).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(back.layers[l].act == net.layers[l].act);
  }

  CHECK_THROWS_AS(deserialize_mlp("mlpv2 3\n"), MlpFormatError);
  CHECK_THROWS_AS(deserialize_mlp("garbage"), MlpFormatError);
  // Truncated payload.
  CHECK_THROWS_AS(deserialize_mlp(text.substr(0, text.size() / 2)),
                  MlpFormatError);
  CHECK_THROWS_AS(load_mlp("no_such_model_file.net"), MlpFormatError);
}

TEST_CASE("method names round trip") {
  CHECK(lip_method_from_string("sdp") == LipMethod::kSdp);
  CHECK(lip_method_from_string(to_string(LipMethod::kSampledLower)) ==
        LipMethod::kSampledLower);
  CHECK_THROWS(lip_method_from_string("bogus"));
}
