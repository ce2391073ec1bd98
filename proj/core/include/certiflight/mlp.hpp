#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace cfl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kNone, kRelu };

struct MlpLayer {
  MatrixXd W;
  VectorXd b;
  Activation act = Activation::kNone;
};

struct MlpFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Plain feedforward network. The last layer is expected to be linear
/// (Activation::kNone) wherever Lipschitz scaling is applied.
struct Mlp {
  std::vector<MlpLayer> layers;

  int input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols());
  }
  int output_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows());
  }
  void validate() const;  // dimension chaining; throws std::invalid_argument
};

VectorXd forward(const Mlp& net, const VectorXd& x);

/// Batched evaluation: one input per column.
MatrixXd forward(const Mlp& net, const MatrixXd& X);

/// Text model format, version header "mlpv1 <n_layers>"; per layer a line
/// "rows cols <relu|none>", then row-major weights, then the bias.
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

std::string serialize_mlp(const Mlp& net);
Mlp deserialize_mlp(const std::string& text);

}  // namespace cfl
