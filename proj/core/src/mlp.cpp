#include "certiflight/mlp.hpp"

#include <fstream>
#include <sstream>

namespace cfl {

void Mlp::validate() const {
  if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const MlpLayer& l = layers[i];
    if (l.W.rows() == 0 || l.W.cols() == 0)
      throw std::invalid_argument("Mlp: empty weight matrix");
    if (l.b.size() != l.W.rows())
      throw std::invalid_argument("Mlp: bias/weight row mismatch");
    if (i > 0 && layers[i - 1].W.rows() != l.W.cols())
      throw std::invalid_argument("Mlp: layer dimension chain broken");
  }
}

VectorXd forward(const Mlp& net, const VectorXd& x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");
  VectorXd h = x;
  for (const MlpLayer& l : net.layers) {
    h = (l.W * h + l.b).eval();
    if (l.act == Activation::kRelu) h = h.cwiseMax(0.0);
  }
  return h;
}

MatrixXd forward(const Mlp& net, const MatrixXd& X) {
  if (X.rows() != net.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");
  MatrixXd H = X;
  for (const MlpLayer& l : net.layers) {
    H = ((l.W * H).colwise() + l.b).eval();
    if (l.act == Activation::kRelu) H = H.cwiseMax(0.0);
  }
  return H;
}

std::string serialize_mlp(const Mlp& net) {
  net.validate();
  std::ostringstream os;
  os.precision(17);
  os << "mlpv1 " << net.layers.size() << '\n';
  for (const MlpLayer& l : net.layers) {
    os << l.W.rows() << ' ' << l.W.cols() << ' '
       << (l.act == Activation::kRelu ? "relu" : "none") << '\n';
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.W.cols(); ++j)
        os << (j ? " " : "") << l.W(i, j);
      os << '\n';
    }
    for (Eigen::Index i = 0; i < l.b.size(); ++i)
      os << (i ? " " : "") << l.b(i);
    os << '\n';
  }
  return os.str();
}

Mlp deserialize_mlp(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int n_layers = 0;
  if (!(is >> magic))
    throw MlpFormatError("model file: empty or unreadable header");
  if (magic.rfind("mlpv", 0) == 0 && magic != "mlpv1")
    throw MlpFormatError("model file: unsupported version '" + magic + "'");
  if (magic != "mlpv1")
    throw MlpFormatError("model file: bad magic '" + magic + "'");
  if (!(is >> n_layers) || n_layers <= 0)
    throw MlpFormatError("model file: bad layer count");

  Mlp net;
  for (int k = 0; k < n_layers; ++k) {
    int rows = 0, cols = 0;
    std::string act;
    if (!(is >> rows >> cols >> act) || rows <= 0 || cols <= 0)
      throw MlpFormatError("model file: bad layer header at layer " +
                           std::to_string(k));
    MlpLayer l;
    if (act == "relu")
      l.act = Activation::kRelu;
    else if (act == "none")
      l.act = Activation::kNone;
    else
      throw MlpFormatError("model file: unknown activation '" + act + "'");
    l.W.resize(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (!(is >> l.W(i, j)))
          throw MlpFormatError("model file: truncated weights at layer " +
                               std::to_string(k));
    l.b.resize(rows);
    for (int i = 0; i < rows; ++i)
      if (!(is >> l.b(i)))
        throw MlpFormatError("model file: truncated bias at layer " +
                             std::to_string(k));
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

void save_mlp(const Mlp& net, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open model file: " + path);
  os << serialize_mlp(net);
  if (!os) throw std::runtime_error("failed writing model file: " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MlpFormatError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_mlp(ss.str());
}

}  // namespace cfl
