#pragma once

// Discrete least-squares functional
//   L_T(v) = sum_interior h^d (D_rho v + gamma v - f)^2
//          + sum_inflow  h^(d-1) |beta.n| (v - g)^2
// where D_rho v(x) = |beta| (v(x) - v(x - rho beta/|beta|)) / rho.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <tbb/enumerable_thread_specific.h>

#include "lsnn/errors.hpp"
#include "lsnn/nn_core.hpp"
#include "lsnn/parallel.hpp"
#include "lsnn/problem_bank.hpp"
#include "lsnn/tile_kernels.hpp"

namespace lsnn {

/// Interior collocation nodes and weighted inflow face midpoints.
struct QuadratureMesh {
  int dim = 2;
  double h = 0.0;
  /// Nodes sit at (i + 1/2) h when true, at i h (strict interior) otherwise.
  bool cell_centered = false;
  Eigen::MatrixXd interior;  // dim x N, lexicographic with x slowest
  double interior_weight = 0.0;
  std::vector<InflowPoint> inflow;
  Eigen::VectorXd inflow_weight;
  int problem_id = 0;

  std::size_t interior_count() const { return static_cast<std::size_t>(interior.cols()); }
  Point interior_point(std::size_t k) const {
    Point p{};
    for (int d = 0; d < dim; ++d) p[static_cast<std::size_t>(d)] = interior(d, static_cast<Eigen::Index>(k));
    return p;
  }
};

struct FdRule {
  double rho = 0.0;
};

struct LossBreakdown {
  double interior = 0.0;
  double boundary = 0.0;
  double total = 0.0;
};

namespace detail {

inline QuadratureMesh make_mesh(const ProblemSpec& spec, double h, bool cell_centered) {
  const int n = cells_per_side(h);
  QuadratureMesh m;
  m.dim = spec.dim;
  m.h = h;
  m.cell_centered = cell_centered;
  m.problem_id = spec.id;
  const int first = cell_centered ? 0 : 1;
  const int count = cell_centered ? n : n - 1;
  const double shift = cell_centered ? 0.5 : 0.0;
  const Eigen::Index total = spec.dim == 2 ? Eigen::Index{count} * count : Eigen::Index{count} * count * count;
  m.interior.resize(spec.dim, total);
  Eigen::Index col = 0;
  if (spec.dim == 2) {
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < count; ++j) {
        m.interior(0, col) = (first + i + shift) * h;
        m.interior(1, col) = (first + j + shift) * h;
        ++col;
      }
  } else {
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < count; ++j)
        for (int k = 0; k < count; ++k) {
          m.interior(0, col) = (first + i + shift) * h;
          m.interior(1, col) = (first + j + shift) * h;
          m.interior(2, col) = (first + k + shift) * h;
          ++col;
        }
  }
  m.interior_weight = std::pow(h, spec.dim);
  m.inflow = inflow_points(spec, h);
  m.inflow_weight.resize(static_cast<Eigen::Index>(m.inflow.size()));
  const double face = std::pow(h, spec.dim - 1);
  for (std::size_t k = 0; k < m.inflow.size(); ++k)
    m.inflow_weight(static_cast<Eigen::Index>(k)) = face * m.inflow[k].weight_factor;
  return m;
}

}  // namespace detail

/// Training mesh: strict-interior grid nodes i*h, 1 <= i <= 1/h - 1.
inline QuadratureMesh build_mesh(const ProblemSpec& spec, double h) { return detail::make_mesh(spec, h, false); }

/// Cell-centred mesh (nodes offset by h/2), used as an independent evaluation mesh.
inline QuadratureMesh build_eval_mesh(const ProblemSpec& spec, double h) { return detail::make_mesh(spec, h, true); }

/// |beta| (v(x) - v(x - rho beta/|beta|)) / rho.
template <class Field>
double directional_derivative_fd(const Field& v, const Point& x, const Point& beta, double rho, int dim) {
  if (!(rho > 0.0)) throw ValidationError("finite-difference step must be positive");
  const double nb = norm(beta, dim);
  if (!(nb > 0.0)) throw ValidationError("zero advection vector");
  Point back = x;
  for (int k = 0; k < dim; ++k) back[static_cast<std::size_t>(k)] -= rho * beta[static_cast<std::size_t>(k)] / nb;
  return nb * (v(x) - v(back)) / rho;
}

/// Precomputed per-point data of the discrete functional for one
/// (problem, mesh, rule) triple, cut into fixed blocks.
class DiscreteProblem {
 public:
  static constexpr std::size_t kBlock = 512;
  static constexpr std::size_t kHalf = kTile / 2;
  static_assert(kBlock % kTile == 0);

  DiscreteProblem(const ProblemSpec& spec, const QuadratureMesh& mesh, FdRule rule)
      : dim_(spec.dim), rho_(rule.rho), weight_(mesh.interior_weight) {
    if (mesh.dim != spec.dim || (mesh.problem_id != 0 && spec.id != 0 && mesh.problem_id != spec.id))
      throw ValidationError("mesh was not built for this problem");
    if (!(rule.rho > 0.0) || !(rule.rho < mesh.h)) throw ValidationError("need 0 < rho < h");
    const std::size_t n = mesh.interior_count();
    speed_.resize(static_cast<Eigen::Index>(n));
    gamma_.resize(static_cast<Eigen::Index>(n));
    f_.resize(static_cast<Eigen::Index>(n));
    back_.resize(dim_, static_cast<Eigen::Index>(n));
    interior_ = mesh.interior;
    for (std::size_t k = 0; k < n; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      const Point x = mesh.interior_point(k);
      const Point b = spec.beta(x);
      const double nb = norm(b, dim_);
      if (!(nb > 0.0)) throw ValidationError("zero advection at an interior node");
      speed_(c) = nb;
      gamma_(c) = spec.gamma(x);
      f_(c) = spec.f(x);
      for (int d = 0; d < dim_; ++d) back_(d, c) = x[static_cast<std::size_t>(d)] - rho_ * b[static_cast<std::size_t>(d)] / nb;
    }
    const std::size_t nb = mesh.inflow.size();
    inflow_.resize(dim_, static_cast<Eigen::Index>(nb));
    g_.resize(static_cast<Eigen::Index>(nb));
    inflow_weight_ = mesh.inflow_weight;
    for (std::size_t k = 0; k < nb; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      for (int d = 0; d < dim_; ++d) inflow_(d, c) = mesh.inflow[k].location[static_cast<std::size_t>(d)];
      g_(c) = spec.g(mesh.inflow[k].location);
    }
    // Block b < interior_blocks_ covers interior nodes [b*kBlock, ...); the
    // remaining blocks cover inflow points. An interior tile holds kHalf
    // nodes followed by their backward stencil points.
    interior_blocks_ = (n + kBlock - 1) / kBlock;
    boundary_blocks_ = (nb + kBlock - 1) / kBlock;
    interior_tiles_.resize((n + kHalf - 1) / kHalf);
    for (std::size_t t = 0; t < interior_tiles_.size(); ++t) {
      auto& tile = interior_tiles_[t];
      tile.assign(static_cast<std::size_t>(dim_) * kTile, 0.0);
      for (std::size_t k = 0; k < kHalf; ++k) {
        const auto c = static_cast<Eigen::Index>(std::min(t * kHalf + k, n - 1));
        for (int d = 0; d < dim_; ++d) {
          tile[static_cast<std::size_t>(d) * kTile + k] = interior_(d, c);
          tile[static_cast<std::size_t>(d) * kTile + kHalf + k] = back_(d, c);
        }
      }
    }
    boundary_tiles_.resize((nb + kTile - 1) / kTile);
    for (std::size_t t = 0; t < boundary_tiles_.size(); ++t) {
      auto& tile = boundary_tiles_[t];
      tile.assign(static_cast<std::size_t>(dim_) * kTile, 0.0);
      for (std::size_t k = 0; k < static_cast<std::size_t>(kTile); ++k) {
        const auto c = static_cast<Eigen::Index>(std::min(t * kTile + k, nb - 1));
        for (int d = 0; d < dim_; ++d) tile[static_cast<std::size_t>(d) * kTile + k] = inflow_(d, c);
      }
    }
  }

  int dim() const { return dim_; }
  double rho() const { return rho_; }
  std::size_t interior_count() const { return static_cast<std::size_t>(interior_.cols()); }
  std::size_t inflow_count() const { return static_cast<std::size_t>(inflow_.cols()); }
  std::size_t block_count() const { return interior_blocks_ + boundary_blocks_; }
  const Eigen::MatrixXd& interior_points() const { return interior_; }
  const Eigen::MatrixXd& backward_points() const { return back_; }
  const Eigen::MatrixXd& inflow_points() const { return inflow_; }

  /// Loss of the network; homogeneous drops f and g (the functional at data 0).
  LossBreakdown loss(const Network& net, bool homogeneous = false) const {
    return run(net, homogeneous, nullptr);
  }

  /// Loss and its exact parameter gradient (written to grad).
  LossBreakdown loss_and_gradient(const Network& net, std::span<double> grad) const {
    if (grad.size() != net.params.size()) throw ValidationError("gradient buffer has wrong length");
    return run(net, false, &grad);
  }

  /// Loss of an arbitrary field evaluated point by point in the same order
  /// and with the same reduction tree as the network path.
  template <class Field>
  LossBreakdown loss_of(const Field& v, bool homogeneous = false) const {
    std::vector<double> interior_part(interior_blocks_, 0.0), boundary_part(boundary_blocks_, 0.0);
    std::vector<double> terms;
    for (std::size_t b = 0; b < interior_blocks_; ++b) {
      const auto [lo, len] = interior_range(b);
      terms.assign(static_cast<std::size_t>(len), 0.0);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index c = lo + k;
        const double vx = v(column_point(interior_, c));
        const double vb = v(column_point(back_, c));
        const double r = residual(c, vx, vb, homogeneous);
        terms[static_cast<std::size_t>(k)] = weight_ * r * r;
      }
      interior_part[b] = pairwise_sum(terms);
    }
    for (std::size_t b = 0; b < boundary_blocks_; ++b) {
      const auto [lo, len] = boundary_range(b);
      terms.assign(static_cast<std::size_t>(len), 0.0);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index c = lo + k;
        const double r = v(column_point(inflow_, c)) - (homogeneous ? 0.0 : g_(c));
        terms[static_cast<std::size_t>(k)] = inflow_weight_(c) * r * r;
      }
      boundary_part[b] = pairwise_sum(terms);
    }
    return combine(interior_part, boundary_part);
  }

  /// Network values at interior nodes, their backward stencil points and the
  /// inflow points, computed with the same blocks as the loss.
  struct Values {
    Eigen::VectorXd interior, backward, inflow;
  };
  Values network_values(const Network& net) const {
    Values out;
    out.interior.resize(interior_.cols());
    out.backward.resize(interior_.cols());
    out.inflow.resize(inflow_.cols());
    tbb::enumerable_thread_specific<TileEvaluator> workspace([&] { return TileEvaluator(net); });
    for_each_block(block_count(), [&](std::size_t b) {
      auto& ev = workspace.local();
      if (b < interior_blocks_) {
        const auto [lo, len] = interior_range(b);
        for (Eigen::Index t0 = lo; t0 < lo + len; t0 += kHalf) {
          const double* o = ev.forward(interior_tiles_[static_cast<std::size_t>(t0) / kHalf].data());
          const Eigen::Index m = std::min<Eigen::Index>(kHalf, lo + len - t0);
          for (Eigen::Index k = 0; k < m; ++k) {
            out.interior(t0 + k) = o[k];
            out.backward(t0 + k) = o[kHalf + k];
          }
        }
      } else {
        const auto [lo, len] = boundary_range(b - interior_blocks_);
        for (Eigen::Index t0 = lo; t0 < lo + len; t0 += kTile) {
          const double* o = ev.forward(boundary_tiles_[static_cast<std::size_t>(t0) / kTile].data());
          const Eigen::Index m = std::min<Eigen::Index>(kTile, lo + len - t0);
          for (Eigen::Index k = 0; k < m; ++k) out.inflow(t0 + k) = o[k];
        }
      }
    });
    return out;
  }

  /// D_rho v + gamma v - f at interior node c given v there and at its stencil point.
  double residual(Eigen::Index c, double v_here, double v_back, bool homogeneous = false) const {
    const double deriv = speed_(c) * (v_here - v_back) / rho_;
    return deriv + gamma_(c) * v_here - (homogeneous ? 0.0 : f_(c));
  }
  double speed(Eigen::Index c) const { return speed_(c); }
  double interior_weight() const { return weight_; }

 private:
  struct Range {
    Eigen::Index lo;
    Eigen::Index len;
  };
  Range interior_range(std::size_t b) const {
    const auto lo = static_cast<Eigen::Index>(b * kBlock);
    return {lo, std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlock), interior_.cols() - lo)};
  }
  Range boundary_range(std::size_t b) const {
    const auto lo = static_cast<Eigen::Index>(b * kBlock);
    return {lo, std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlock), inflow_.cols() - lo)};
  }
  Point column_point(const Eigen::MatrixXd& m, Eigen::Index c) const {
    Point p{};
    for (int d = 0; d < dim_; ++d) p[static_cast<std::size_t>(d)] = m(d, c);
    return p;
  }
  static LossBreakdown combine(const std::vector<double>& interior_part, const std::vector<double>& boundary_part) {
    LossBreakdown lb;
    lb.interior = pairwise_sum(interior_part);
    lb.boundary = pairwise_sum(boundary_part);
    lb.total = lb.interior + lb.boundary;
    return lb;
  }

  LossBreakdown run(const Network& net, bool homogeneous, std::span<double>* grad) const {
    if (net.input_dim() != dim_) throw ValidationError("network input dimension does not match the problem");
    const std::size_t nblocks = block_count();
    std::vector<double> interior_part(interior_blocks_, 0.0), boundary_part(boundary_blocks_, 0.0);
    std::vector<std::vector<double>> grads;
    if (grad) grads.assign(nblocks, std::vector<double>(net.params.size(), 0.0));
    tbb::enumerable_thread_specific<TileEvaluator> workspace([&] { return TileEvaluator(net); });
    for_each_block(nblocks, [&](std::size_t b) {
      auto& ev = workspace.local();
      std::vector<double> terms;
      alignas(64) double cot[kTile];
      double* g = grad ? grads[b].data() : nullptr;
      if (b < interior_blocks_) {
        const auto [lo, len] = interior_range(b);
        terms.resize(static_cast<std::size_t>(len));
        for (Eigen::Index t0 = lo; t0 < lo + len; t0 += kHalf) {
          const double* o = ev.forward(interior_tiles_[static_cast<std::size_t>(t0) / kHalf].data());
          const Eigen::Index m = std::min<Eigen::Index>(kHalf, lo + len - t0);
          std::fill(cot, cot + kTile, 0.0);
          for (Eigen::Index k = 0; k < m; ++k) {
            const Eigen::Index c = t0 + k;
            const double r = residual(c, o[k], o[kHalf + k], homogeneous);
            terms[static_cast<std::size_t>(c - lo)] = weight_ * r * r;
            const double s = 2.0 * weight_ * r;
            const double q = speed_(c) / rho_;
            cot[k] = s * (q + gamma_(c));
            cot[kHalf + k] = -s * q;
          }
          if (g) ev.backward(cot);
        }
        interior_part[b] = pairwise_sum(terms);
        if (g) ev.flush(g);
      } else {
        const std::size_t bb = b - interior_blocks_;
        const auto [lo, len] = boundary_range(bb);
        terms.resize(static_cast<std::size_t>(len));
        for (Eigen::Index t0 = lo; t0 < lo + len; t0 += kTile) {
          const double* o = ev.forward(boundary_tiles_[static_cast<std::size_t>(t0) / kTile].data());
          const Eigen::Index m = std::min<Eigen::Index>(kTile, lo + len - t0);
          std::fill(cot, cot + kTile, 0.0);
          for (Eigen::Index k = 0; k < m; ++k) {
            const Eigen::Index c = t0 + k;
            const double r = o[k] - (homogeneous ? 0.0 : g_(c));
            terms[static_cast<std::size_t>(c - lo)] = inflow_weight_(c) * r * r;
            cot[k] = 2.0 * inflow_weight_(c) * r;
          }
          if (g) ev.backward(cot);
        }
        boundary_part[bb] = pairwise_sum(terms);
        if (g) ev.flush(g);
      }
    });
    if (grad) {
      pairwise_merge(grads);
      std::copy(grads[0].begin(), grads[0].end(), grad->begin());
    }
    return combine(interior_part, boundary_part);
  }

  int dim_;
  double rho_;
  double weight_;
  Eigen::MatrixXd interior_, back_, inflow_;
  Eigen::VectorXd speed_, gamma_, f_, g_, inflow_weight_;
  std::size_t interior_blocks_ = 0, boundary_blocks_ = 0;
  std::vector<AlignedVector> interior_tiles_, boundary_tiles_;
};

/// Discrete functional of any field v : Point -> double.
template <class Field>
LossBreakdown discrete_loss(const Field& v, const ProblemSpec& spec, const QuadratureMesh& mesh, FdRule rule,
                            bool homogeneous = false) {
  return DiscreteProblem(spec, mesh, rule).loss_of(v, homogeneous);
}

inline LossBreakdown discrete_loss(const Network& net, const ProblemSpec& spec, const QuadratureMesh& mesh,
                                   FdRule rule, bool homogeneous = false) {
  return DiscreteProblem(spec, mesh, rule).loss(net, homogeneous);
}

inline std::vector<double> loss_gradient(const Network& net, const ProblemSpec& spec, const QuadratureMesh& mesh,
                                         FdRule rule) {
  std::vector<double> grad(net.params.size(), 0.0);
  DiscreteProblem(spec, mesh, rule).loss_and_gradient(net, grad);
  return grad;
}

}  // namespace lsnn
