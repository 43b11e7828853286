#pragma once

// Fully connected ReLU networks R^d -> R with the affine convention
// z = W a - b used throughout (hidden layers apply max(0, .), the last layer
// is affine only). Parameters live in one flat buffer, layer by layer, each
// layer storing its weights row-major (n_l x n_{l-1}) followed by its biases.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lsnn/errors.hpp"

namespace lsnn {

/// Layer widths n_0 = d, n_1, ..., n_L = 1.
struct Architecture {
  std::vector<int> dims;

  /// Parses "2-20-20-1" (also accepts "2--20--20--1").
  static Architecture parse(std::string_view text) {
    Architecture a;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == '-') {
        ++i;
        continue;
      }
      int value = 0;
      bool any = false;
      while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
        value = value * 10 + (text[i] - '0');
        any = true;
        ++i;
        if (value > 1'000'000) throw ValidationError("architecture width too large");
      }
      if (!any) throw ValidationError("malformed architecture '" + std::string(text) + "'");
      a.dims.push_back(value);
    }
    a.validate();
    return a;
  }

  std::string str(std::string_view sep = "-") const {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += sep;
      s += std::to_string(dims[i]);
    }
    return s;
  }

  void validate() const {
    if (dims.size() < 2) throw ValidationError("architecture needs at least input and output widths");
    for (int n : dims)
      if (n < 1) throw ValidationError("architecture widths must be positive");
    if (dims.back() != 1) throw ValidationError("output width must be 1");
  }

  int input_dim() const { return dims.front(); }
  /// Number of affine layers L.
  int depth() const { return static_cast<int>(dims.size()) - 1; }
  int hidden_layers() const { return depth() - 1; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline std::size_t param_count(const Architecture& arch) {
  std::size_t total = 0;
  for (std::size_t l = 1; l < arch.dims.size(); ++l) {
    const auto in = static_cast<std::size_t>(arch.dims[l - 1]);
    const auto out = static_cast<std::size_t>(arch.dims[l]);
    total += in * out + out;
  }
  return total;
}

/// Offset of layer l's (1-based) weight block inside the flat buffer.
inline std::size_t layer_offset(const Architecture& arch, int l) {
  std::size_t off = 0;
  for (int k = 1; k < l; ++k) {
    const auto in = static_cast<std::size_t>(arch.dims[k - 1]);
    const auto out = static_cast<std::size_t>(arch.dims[k]);
    off += in * out + out;
  }
  return off;
}

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutRowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// NetworkParams: architecture plus flat parameter storage.
struct Network {
  Architecture arch;
  std::vector<double> params;

  Network() = default;
  explicit Network(Architecture a) : arch(std::move(a)), params(param_count(arch), 0.0) {}
  Network(Architecture a, std::vector<double> p) : arch(std::move(a)), params(std::move(p)) {
    arch.validate();
    if (params.size() != param_count(arch))
      throw ValidationError("parameter count does not match architecture " + arch.str());
  }

  int input_dim() const { return arch.input_dim(); }

  RowMajorMap weights(int l) const {
    const auto off = layer_offset(arch, l);
    return {params.data() + off, arch.dims[l], arch.dims[l - 1]};
  }
  Eigen::Map<const Eigen::VectorXd> biases(int l) const {
    const auto off = layer_offset(arch, l) +
                     static_cast<std::size_t>(arch.dims[l]) * static_cast<std::size_t>(arch.dims[l - 1]);
    return {params.data() + off, arch.dims[l]};
  }
  MutRowMajorMap weights(int l) {
    const auto off = layer_offset(arch, l);
    return {params.data() + off, arch.dims[l], arch.dims[l - 1]};
  }
  Eigen::Map<Eigen::VectorXd> biases(int l) {
    const auto off = layer_offset(arch, l) +
                     static_cast<std::size_t>(arch.dims[l]) * static_cast<std::size_t>(arch.dims[l - 1]);
    return {params.data() + off, arch.dims[l]};
  }

  bool all_finite() const {
    for (double p : params)
      if (!std::isfinite(p)) return false;
    return true;
  }
};

/// Per-hidden-layer pre- and post-activation values of one evaluation.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
  double output = 0.0;
};

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

/// Evaluates the network at one point with plain loops in a fixed order.
inline ForwardTrace forward_trace(const Network& net, std::span<const double> x) {
  const auto& dims = net.arch.dims;
  if (x.size() != static_cast<std::size_t>(dims.front()))
    throw ValidationError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                          std::to_string(dims.front()));
  ForwardTrace tr;
  std::vector<double> a(x.begin(), x.end());
  const int L = net.arch.depth();
  for (int l = 1; l <= L; ++l) {
    const auto W = net.weights(l);
    const auto b = net.biases(l);
    std::vector<double> z(static_cast<std::size_t>(dims[l]));
    for (int i = 0; i < dims[l]; ++i) {
      double s = 0.0;
      for (int j = 0; j < dims[l - 1]; ++j) s += W(i, j) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = s - b(i);
    }
    if (l == L) {
      tr.output = z[0];
      break;
    }
    std::vector<double> post(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) post[i] = relu(z[i]);
    tr.pre.push_back(z);
    tr.post.push_back(post);
    a = std::move(post);
  }
  return tr;
}

inline double forward(const Network& net, std::span<const double> x) { return forward_trace(net, x).output; }

/// Batched evaluation over the columns of a d x N matrix. Keeps the
/// activations of the last forward call so that backward() can accumulate
/// parameter gradients for arbitrary output cotangents.
class BatchEvaluator {
 public:
  const Eigen::RowVectorXd& forward(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    const auto& dims = net.arch.dims;
    if (X.rows() != dims.front()) throw ValidationError("batch point dimension mismatch");
    const int L = net.arch.depth();
    pre_.resize(static_cast<std::size_t>(L));
    post_.resize(static_cast<std::size_t>(L));
    input_ = X;
    for (int l = 1; l <= L; ++l) {
      const Eigen::MatrixXd& a = (l == 1) ? input_ : post_[static_cast<std::size_t>(l - 2)];
      auto& z = pre_[static_cast<std::size_t>(l - 1)];
      z.noalias() = net.weights(l) * a;
      z.colwise() -= net.biases(l);
      if (l < L) post_[static_cast<std::size_t>(l - 1)] = z.cwiseMax(0.0);
    }
    output_ = pre_.back().row(0);
    return output_;
  }

  const Eigen::RowVectorXd& output() const { return output_; }
  /// Pre-activation matrix (n_l x N) of layer l (1-based) from the last forward.
  const Eigen::MatrixXd& pre_activation(int l) const { return pre_[static_cast<std::size_t>(l - 1)]; }

  /// grad += sum_k cot_k * d output_k / d params. The ReLU derivative at 0 is 0.
  void backward(const Network& net, const Eigen::Ref<const Eigen::RowVectorXd>& cot, std::span<double> grad) {
    const auto& dims = net.arch.dims;
    const int L = net.arch.depth();
    if (cot.size() != output_.size()) throw ValidationError("cotangent count does not match batch size");
    if (grad.size() != net.params.size()) throw ValidationError("gradient buffer has wrong length");
    Eigen::MatrixXd delta = cot;  // 1 x N
    for (int l = L; l >= 1; --l) {
      const Eigen::MatrixXd& a = (l == 1) ? input_ : post_[static_cast<std::size_t>(l - 2)];
      const auto off = layer_offset(net.arch, l);
      MutRowMajorMap gW(grad.data() + off, dims[l], dims[l - 1]);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + static_cast<std::size_t>(dims[l] * dims[l - 1]), dims[l]);
      gW.noalias() += delta * a.transpose();
      gb -= delta.rowwise().sum();
      if (l == 1) break;
      Eigen::MatrixXd back = net.weights(l).transpose() * delta;
      const auto& z = pre_[static_cast<std::size_t>(l - 2)];
      delta = (z.array() > 0.0).select(back, 0.0);
    }
  }

 private:
  Eigen::MatrixXd input_;
  std::vector<Eigen::MatrixXd> pre_;
  std::vector<Eigen::MatrixXd> post_;
  Eigen::RowVectorXd output_;
};

/// Sum over k of cot_k * d forward(net, x_k) / d params.
inline std::vector<double> grad_params(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& points,
                                       std::span<const double> cotangents) {
  if (static_cast<std::size_t>(points.cols()) != cotangents.size())
    throw ValidationError("points and cotangents differ in length");
  std::vector<double> grad(net.params.size(), 0.0);
  if (cotangents.empty()) return grad;
  BatchEvaluator ev;
  ev.forward(net, points);
  const Eigen::Map<const Eigen::RowVectorXd> cot(cotangents.data(), static_cast<Eigen::Index>(cotangents.size()));
  ev.backward(net, cot, grad);
  return grad;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw; does not
/// depend on the standard library's distribution implementation.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Weights uniform on +-sqrt(6 / (fan_in + fan_out)), biases uniform on [-1, 1].
inline Network init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Network net(arch);
  std::mt19937_64 rng(seed);
  for (int l = 1; l <= arch.depth(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(arch.dims[l - 1] + arch.dims[l]));
    auto W = net.weights(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = bound * (2.0 * unit_uniform(rng) - 1.0);
    auto b = net.biases(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 2.0 * unit_uniform(rng) - 1.0;
  }
  return net;
}

}  // namespace lsnn
