#pragma once

// Fixed-width tile evaluation of ReLU networks. A tile holds kTile points;
// activations are stored unit-major (n_l x kTile, contiguous along points) so
// that the inner loops vectorize over points. All reductions use explicit
// lane accumulators summed in a fixed order, so results do not depend on the
// compiler's willingness to reassociate floating-point sums.

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <vector>

#include "lsnn/nn_core.hpp"

namespace lsnn {

template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

inline constexpr int kTile = 64;

namespace kernel {

constexpr int kLanes = 8;
constexpr int kChunk = 32;  // columns handled per register block
constexpr int kVecs = kChunk / kLanes;

// Eight doubles; GCC and Clang lower this to whatever SIMD width exists.
typedef double Vec __attribute__((vector_size(64), aligned(8)));

inline Vec load(const double* p) { return *reinterpret_cast<const Vec*>(p); }
inline void store(double* p, Vec v) { *reinterpret_cast<Vec*>(p) = v; }
inline Vec splat(double x) { return Vec{} + x; }
inline double lane_sum(Vec v) { return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7])); }

enum class Store { kPlain, kRelu, kMask };

/// Z[i, :] = op(sum_j W[i, j] A[j, :] - b[i]) for R consecutive rows starting
/// at i0, V vectors of columns at a time. kRelu clamps at zero; kMask zeroes
/// entries where M (same shape as Z) is not positive.
template <Store op, int R, int V>
inline void affine_rows(const double* W, const double* b, int nin, const double* A, double* Z, const double* M,
                        int i0) {
  constexpr int width = V * kLanes;
  static_assert(kTile % width == 0);
  for (int c = 0; c < kTile; c += width) {
    Vec acc[R][V];
    for (int r = 0; r < R; ++r)
      for (int v = 0; v < V; ++v) acc[r][v] = Vec{};
    for (int j = 0; j < nin; ++j) {
      const double* a = A + static_cast<std::size_t>(j) * kTile + c;
      Vec av[V];
      for (int v = 0; v < V; ++v) av[v] = load(a + v * kLanes);
      for (int r = 0; r < R; ++r) {
        const Vec w = splat(W[static_cast<std::size_t>(i0 + r) * nin + j]);
        for (int v = 0; v < V; ++v) acc[r][v] += w * av[v];
      }
    }
    for (int r = 0; r < R; ++r) {
      const Vec bias = splat(b ? b[i0 + r] : 0.0);
      const std::size_t row = static_cast<std::size_t>(i0 + r) * kTile + c;
      for (int v = 0; v < V; ++v) {
        Vec z = acc[r][v] - bias;
        if constexpr (op == Store::kRelu) z = z > 0.0 ? z : Vec{};
        if constexpr (op == Store::kMask) z = load(M + row + v * kLanes) > 0.0 ? z : Vec{};
        store(Z + row + v * kLanes, z);
      }
    }
  }
}

/// Z = op(W A - b) with W nout x nin row-major (b may be null).
template <Store op>
inline void affine(const double* W, const double* b, int nout, int nin, const double* A, double* Z,
                   const double* M = nullptr) {
  int i = 0;
  for (; i + 4 <= nout; i += 4) affine_rows<op, 4, 4>(W, b, nin, A, Z, M, i);
  for (; i < nout; ++i) affine_rows<op, 1, 8>(W, b, nin, A, Z, M, i);
}

/// GL[i, j] += D[i, :] * A[j, :] lane-wise over the tile for an RI x RJ block
/// at (i0, j0); GL holds kLanes partial sums per entry of G (nout x nin).
template <int RI, int RJ>
inline void outer_block(const double* D, const double* A, double* GL, int nin, int i0, int j0) {
  Vec acc[RI][RJ];
  auto slot = [&](int r, int s) { return GL + (static_cast<std::size_t>(i0 + r) * nin + (j0 + s)) * kLanes; };
  for (int r = 0; r < RI; ++r)
    for (int s = 0; s < RJ; ++s) acc[r][s] = load(slot(r, s));
  for (int t = 0; t < kTile; t += kLanes) {
    Vec dv[RI], av[RJ];
    for (int r = 0; r < RI; ++r) dv[r] = load(D + static_cast<std::size_t>(i0 + r) * kTile + t);
    for (int s = 0; s < RJ; ++s) av[s] = load(A + static_cast<std::size_t>(j0 + s) * kTile + t);
    for (int r = 0; r < RI; ++r)
      for (int s = 0; s < RJ; ++s) acc[r][s] += dv[r] * av[s];
  }
  for (int r = 0; r < RI; ++r)
    for (int s = 0; s < RJ; ++s) store(slot(r, s), acc[r][s]);
}

inline void outer(const double* D, const double* A, double* GL, int nout, int nin) {
  int i = 0;
  for (; i + 4 <= nout; i += 4) {
    int j = 0;
    for (; j + 4 <= nin; j += 4) outer_block<4, 4>(D, A, GL, nin, i, j);
    for (; j < nin; ++j) outer_block<4, 1>(D, A, GL, nin, i, j);
  }
  for (; i < nout; ++i) {
    int j = 0;
    for (; j + 4 <= nin; j += 4) outer_block<1, 4>(D, A, GL, nin, i, j);
    for (; j < nin; ++j) outer_block<1, 1>(D, A, GL, nin, i, j);
  }
}

/// GL[i] -= D[i, :] lane-wise (biases enter as w.x - b).
inline void bias_grad(const double* D, double* GL, int nout) {
  for (int i = 0; i < nout; ++i) {
    Vec acc = load(GL + static_cast<std::size_t>(i) * kLanes);
    const double* d = D + static_cast<std::size_t>(i) * kTile;
    for (int t = 0; t < kTile; t += kLanes) acc -= load(d + t);
    store(GL + static_cast<std::size_t>(i) * kLanes, acc);
  }
}

}  // namespace kernel

/// Forward/backward over one tile of kTile points. Construct once per
/// network state (it caches transposed weights), reuse for many tiles.
/// backward() accumulates into lane-wide partial sums; flush() reduces them
/// into a gradient vector and clears them.
class TileEvaluator {
 public:
  TileEvaluator() = default;
  explicit TileEvaluator(const Network& net) { bind(net); }

  void bind(const Network& net) {
    net_ = &net;
    const auto& dims = net.arch.dims;
    const int L = net.arch.depth();
    act_.resize(static_cast<std::size_t>(L));
    wt_.resize(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) {
      act_[static_cast<std::size_t>(l - 1)].assign(static_cast<std::size_t>(dims[l]) * kTile, 0.0);
      auto& wt = wt_[static_cast<std::size_t>(l - 1)];
      wt.resize(static_cast<std::size_t>(dims[l]) * dims[l - 1]);
      const double* W = net.params.data() + layer_offset(net.arch, l);
      for (int i = 0; i < dims[l]; ++i)
        for (int j = 0; j < dims[l - 1]; ++j)
          wt[static_cast<std::size_t>(j) * dims[l] + i] = W[static_cast<std::size_t>(i) * dims[l - 1] + j];
    }
    int widest = 1;
    for (int n : dims) widest = std::max(widest, n);
    delta_[0].assign(static_cast<std::size_t>(widest) * kTile, 0.0);
    delta_[1].assign(static_cast<std::size_t>(widest) * kTile, 0.0);
    lanes_.assign(net.params.size() * kernel::kLanes, 0.0);
  }

  /// X is d x kTile, point-contiguous. Returns the kTile outputs.
  const double* forward(const double* X) {
    const auto& net = *net_;
    const auto& dims = net.arch.dims;
    const int L = net.arch.depth();
    input_ = X;
    for (int l = 1; l <= L; ++l) {
      const double* W = net.params.data() + layer_offset(net.arch, l);
      const double* b = W + static_cast<std::size_t>(dims[l]) * dims[l - 1];
      const double* a = l == 1 ? X : act_[static_cast<std::size_t>(l - 2)].data();
      double* z = act_[static_cast<std::size_t>(l - 1)].data();
      if (l < L)
        kernel::affine<kernel::Store::kRelu>(W, b, dims[l], dims[l - 1], a, z);
      else
        kernel::affine<kernel::Store::kPlain>(W, b, dims[l], dims[l - 1], a, z);
    }
    return act_.back().data();
  }

  /// Accumulates sum_t cot[t] d out[t] / d params for the last forward tile.
  void backward(const double* cot) {
    const auto& net = *net_;
    const auto& dims = net.arch.dims;
    const int L = net.arch.depth();
    double* delta = delta_[0].data();
    double* next = delta_[1].data();
    std::copy(cot, cot + kTile, delta);
    for (int l = L; l >= 1; --l) {
      double* gW = lanes_.data() + layer_offset(net.arch, l) * kernel::kLanes;
      double* gb = gW + static_cast<std::size_t>(dims[l]) * dims[l - 1] * kernel::kLanes;
      const double* a = l == 1 ? input_ : act_[static_cast<std::size_t>(l - 2)].data();
      kernel::outer(delta, a, gW, dims[l], dims[l - 1]);
      kernel::bias_grad(delta, gb, dims[l]);
      if (l == 1) break;
      // ReLU outputs are positive exactly where the pre-activation is.
      kernel::affine<kernel::Store::kMask>(wt_[static_cast<std::size_t>(l - 1)].data(), nullptr, dims[l - 1],
                                           dims[l], delta, next, a);
      std::swap(delta, next);
    }
  }

  /// grad[k] += accumulated partials of parameter k; resets the accumulator.
  void flush(double* grad) {
    const std::size_t n = lanes_.size() / kernel::kLanes;
    for (std::size_t k = 0; k < n; ++k) {
      grad[k] += kernel::lane_sum(kernel::load(lanes_.data() + k * kernel::kLanes));
      kernel::store(lanes_.data() + k * kernel::kLanes, kernel::Vec{});
    }
  }

 private:
  const Network* net_ = nullptr;
  const double* input_ = nullptr;
  std::vector<AlignedVector> act_, wt_;
  AlignedVector delta_[2], lanes_;
};

}  // namespace lsnn
