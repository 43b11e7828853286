#pragma once

// Advection-reaction problems  u_beta + gamma u = f  in (0,1)^d,  u = g on
// the inflow boundary, and the six benchmark instances with closed-form
// discontinuous solutions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "lsnn/errors.hpp"

namespace lsnn {

/// A point of R^d stored in three slots; unused trailing slots are zero.
using Point = std::array<double, 3>;

using ScalarMap = std::function<double(const Point&)>;
using VectorMap = std::function<Point(const Point&)>;

inline double dot(const Point& a, const Point& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += a[static_cast<std::size_t>(k)] * b[static_cast<std::size_t>(k)];
  return s;
}

inline double norm(const Point& a, int dim) { return std::sqrt(dot(a, a, dim)); }

struct InflowPoint {
  Point location{};
  Point normal{};        // unit outward normal
  double weight_factor;  // |beta . n| at location
};

/// Which side of the discontinuity a point lies on.
enum class InterfaceSide { kFirst, kSecond, kNear };

/// ProblemSpec: the data of one advection-reaction problem on (0,1)^dim.
struct ProblemSpec {
  int id = 0;
  int dim = 2;
  std::string name;
  VectorMap beta;
  ScalarMap gamma;
  ScalarMap f;
  ScalarMap g;
  ScalarMap exact;
  /// Index of the smooth piece of the closed-form solution containing x.
  std::function<int(const Point&)> region;
  /// Distance to the set where the exact solution jumps.
  ScalarMap interface_distance;
  /// Distance to any boundary between pieces (jumps and kinks of beta).
  ScalarMap piece_distance;
  /// Side of the jump a piece belongs to (indexed by region()).
  std::vector<InterfaceSide> region_side;
  /// Upper bound of |beta| * |second derivative of u along beta/|beta||
  /// over every piece; the backward quotient of the exact solution
  /// is within rho * curvature_bound / 2 of u_beta.
  double curvature_bound = 0.0;
  /// Location of the jump in the inflow data.
  Point inflow_jump{};

  /// Exact directional derivative u_beta = f - gamma u (off the interface).
  double exact_beta_derivative(const Point& x) const { return f(x) - gamma(x) * exact(x); }

  /// Classifies x with interface tolerance tau.
  InterfaceSide side(const Point& x, double tau) const {
    if (interface_distance(x) <= tau) return InterfaceSide::kNear;
    return region_side.at(static_cast<std::size_t>(region(x)));
  }
};

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  double t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy);
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

/// Distance from (px, py) to the arc {(t, t^2 + c) : t in [lo, hi]}.
inline double parabola_distance(double px, double py, double c, double lo, double hi) {
  auto dist2 = [&](double t) {
    const double dx = t - px, dy = t * t + c - py;
    return dx * dx + dy * dy;
  };
  constexpr int kSamples = 64;
  double best_t = lo, best = dist2(lo);
  for (int i = 1; i <= kSamples; ++i) {
    const double t = lo + (hi - lo) * i / kSamples;
    const double d = dist2(t);
    if (d < best) best = d, best_t = t;
  }
  // Newton on the stationarity condition, kept inside the bracket.
  const double step = (hi - lo) / kSamples;
  const double a = std::max(lo, best_t - step), b = std::min(hi, best_t + step);
  double t = best_t;
  for (int it = 0; it < 30; ++it) {
    const double q = t * t + c - py;
    const double grad = (t - px) + 2.0 * t * q;
    const double hess = 1.0 + 2.0 * q + 4.0 * t * t;
    if (hess <= 0.0) break;
    const double next = std::clamp(t - grad / hess, a, b);
    if (std::abs(next - t) < 1e-15) break;
    t = next;
  }
  return std::sqrt(std::min(best, dist2(t)));
}

inline ScalarMap constant(double v) {
  return [v](const Point&) { return v; };
}

}  // namespace detail

/// Benchmark problems 1..6.
inline ProblemSpec make_benchmark(int id) {
  using detail::constant;
  ProblemSpec p;
  p.id = id;
  p.gamma = constant(1.0);
  const double sqrt2 = std::numbers::sqrt2;
  switch (id) {
    case 1:
    case 2:
    case 3: {
      p.dim = 2;
      p.beta = [](const Point&) { return Point{0.0, 1.0, 0.0}; };
      p.f = constant(1.0);
      p.region = [](const Point& x) { return x[0] < 0.5 ? 0 : 1; };
      p.interface_distance = [](const Point& x) { return std::abs(x[0] - 0.5); };
      p.piece_distance = p.interface_distance;
      p.region_side = {InterfaceSide::kFirst, InterfaceSide::kSecond};
      p.inflow_jump = {0.5, 0.0, 0.0};
      if (id == 1) {
        p.name = "constant advection, constant inflow jump";
        p.g = [](const Point& x) { return x[0] < 0.5 ? 1.0 : 2.0; };
        p.exact = [](const Point& x) { return x[0] < 0.5 ? 1.0 : 1.0 + std::exp(-x[1]); };
        p.curvature_bound = 1.0;
      } else if (id == 2) {
        p.name = "piecewise smooth solution";
        p.g = [](const Point& x) { return x[0] < 0.5 ? 0.0 : 2.0; };
        p.exact = [](const Point& x) {
          return x[0] < 0.5 ? 1.0 - std::exp(-x[1]) : 1.0 + std::exp(-x[1]);
        };
        p.curvature_bound = 1.0;
      } else {
        p.name = "piecewise smooth inflow";
        p.g = [](const Point& x) {
          return x[0] < 0.5 ? 1.0 - std::sin(2.0 * std::numbers::pi * x[0]) : 2.5 - x[0];
        };
        p.exact = [](const Point& x) {
          return x[0] < 0.5 ? 1.0 - std::sin(2.0 * std::numbers::pi * x[0]) * std::exp(-x[1])
                            : 1.0 + (1.5 - x[0]) * std::exp(-x[1]);
        };
        p.curvature_bound = 1.5;
      }
      break;
    }
    case 4: {
      p.dim = 2;
      p.name = "piecewise constant advection";
      const double r = sqrt2 - 1.0;  // sqrt(2) - 1
      // Upsilon_1 = {y >= x}; points on y = x use the Upsilon_1 field.
      p.beta = [r](const Point& x) {
        return x[1] >= x[0] ? Point{-1.0, r, 0.0} : Point{1.0 - std::numbers::sqrt2, 1.0, 0.0};
      };
      p.f = constant(0.0);
      // Closed pieces tried in the order 11, 12, 21, 22; first match wins.
      p.region = [r](const Point& x) {
        if (x[1] >= x[0]) return x[1] <= (1.0 - std::numbers::sqrt2) * x[0] + 1.0 ? 0 : 1;
        return x[1] <= (1.0 - x[0]) / r ? 2 : 3;
      };
      p.region_side = {InterfaceSide::kFirst, InterfaceSide::kSecond, InterfaceSide::kFirst,
                       InterfaceSide::kSecond};
      const double q = 1.0 / sqrt2;  // where both interface segments meet y = x
      p.interface_distance = [q](const Point& x) {
        return std::min(detail::segment_distance(x[0], x[1], 0.0, 1.0, q, q),
                        detail::segment_distance(x[0], x[1], q, q, 1.0, 0.0));
      };
      auto jump = p.interface_distance;
      p.piece_distance = [jump](const Point& x) {
        return std::min(jump(x), std::abs(x[1] - x[0]) / std::numbers::sqrt2);
      };
      p.exact = [r, region = p.region](const Point& x) {
        switch (region(x)) {
          case 0: return (x[1] + r * x[0]) * std::exp(std::numbers::sqrt2 * x[0] + x[1]);
          case 1: return (x[1] + r * x[0] + 10.0) * std::exp(std::numbers::sqrt2 * x[0] + x[1]);
          case 2: return (x[0] + r * x[1]) * std::exp(x[0] / r);
          default: return (x[0] + r * x[1] + 10.0) * std::exp(x[0] / r);
        }
      };
      p.g = [r](const Point& x) {
        // {(x, 0)} first, the remaining inflow edge {(1, y)} second.
        if (x[1] <= 0.0) return x[0] * std::exp(x[0] / r);
        return (11.0 + r * x[1]) * std::exp(1.0 / r);
      };
      // |beta| |d^2 u / d betahat^2| = |u| / |beta| on every piece.
      p.curvature_bound = 130.0;
      p.inflow_jump = {1.0, 0.0, 0.0};
      break;
    }
    case 5: {
      p.dim = 2;
      p.name = "variable advection, curved interface";
      p.beta = [](const Point& x) { return Point{1.0, 2.0 * x[0], 0.0}; };
      p.f = constant(0.0);
      p.region = [](const Point& x) { return x[1] < x[0] * x[0] + 0.2 ? 0 : 1; };
      p.region_side = {InterfaceSide::kFirst, InterfaceSide::kSecond};
      p.interface_distance = [](const Point& x) { return detail::parabola_distance(x[0], x[1], 0.2, 0.0, 1.0); };
      p.piece_distance = p.interface_distance;
      p.exact = [](const Point& x) {
        const double base = x[1] - x[0] * x[0];
        return (x[1] < x[0] * x[0] + 0.2 ? base : base + 2.0) * std::exp(-x[0]);
      };
      p.g = [](const Point& x) {
        if (x[0] <= 0.0 && x[1] >= 0.2) return x[1] + 2.0;
        return (x[1] - x[0] * x[0]) * std::exp(-x[0]);
      };
      p.curvature_bound = 16.0;
      p.inflow_jump = {0.0, 0.2, 0.0};
      break;
    }
    case 6: {
      p.dim = 3;
      p.name = "three-dimensional constant advection";
      p.beta = [](const Point&) { return Point{1.0, 0.0, 0.0}; };
      p.f = constant(1.0);
      p.region = [](const Point& x) { return x[1] < 0.5 ? 0 : 1; };
      p.region_side = {InterfaceSide::kFirst, InterfaceSide::kSecond};
      p.interface_distance = [](const Point& x) { return std::abs(x[1] - 0.5); };
      p.piece_distance = p.interface_distance;
      p.g = [](const Point& x) { return x[1] < 0.5 ? 1.0 - 4.0 * x[1] : 5.0 - 4.0 * x[1]; };
      p.exact = [](const Point& x) {
        return x[1] < 0.5 ? 1.0 - 4.0 * x[1] * std::exp(-x[0]) : 1.0 + (4.0 - 4.0 * x[1]) * std::exp(-x[0]);
      };
      p.curvature_bound = 4.0;
      p.inflow_jump = {0.0, 0.5, 0.5};
      break;
    }
    default:
      throw ValidationError("unknown benchmark id " + std::to_string(id) + " (expected 1..6)");
  }
  return p;
}

/// Returns n = 1/h, rejecting mesh sizes whose reciprocal is not an integer.
inline int cells_per_side(double h) {
  if (!(h > 0.0) || h > 1.0) throw ValidationError("mesh size must lie in (0, 1]");
  const double inv = 1.0 / h;
  const double n = std::round(inv);
  if (std::abs(inv - n) > 1e-9 * n) throw ValidationError("1/h must be an integer, got h=" + std::to_string(h));
  return static_cast<int>(n);
}

/// Midpoints of the uniform faces of size h^(dim-1) on every boundary facet,
/// kept where beta . n < 0 at the midpoint.
inline std::vector<InflowPoint> inflow_points(const ProblemSpec& spec, double h) {
  const int n = cells_per_side(h);
  const int dim = spec.dim;
  std::vector<InflowPoint> out;
  const int faces = dim == 2 ? n : n * n;
  for (int axis = 0; axis < dim; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Point normal{};
      normal[static_cast<std::size_t>(axis)] = side == 0 ? -1.0 : 1.0;
      for (int c = 0; c < faces; ++c) {
        Point x{};
        x[static_cast<std::size_t>(axis)] = static_cast<double>(side);
        // Remaining axes in increasing order, first one fastest varying last.
        int rem = c;
        int slot_index[2] = {0, 0};
        if (dim == 2) {
          slot_index[0] = rem;
        } else {
          slot_index[0] = rem / n;
          slot_index[1] = rem % n;
        }
        int used = 0;
        for (int k = 0; k < dim; ++k) {
          if (k == axis) continue;
          x[static_cast<std::size_t>(k)] = (slot_index[used] + 0.5) * h;
          ++used;
        }
        const double bn = dot(spec.beta(x), normal, dim);
        if (bn < 0.0) out.push_back({x, normal, -bn});
      }
    }
  }
  return out;
}

/// |D_rho u(x) + gamma u(x) - f(x)| for the exact solution, where D_rho is
/// the backward difference quotient along beta scaled by |beta|.
inline double residual_check(const ProblemSpec& spec, const Point& x, double rho) {
  const Point b = spec.beta(x);
  const double nb = norm(b, spec.dim);
  if (!(nb > 0.0)) throw ValidationError("zero advection at residual point");
  Point back = x;
  for (int k = 0; k < spec.dim; ++k) back[static_cast<std::size_t>(k)] -= rho * b[static_cast<std::size_t>(k)] / nb;
  if (spec.region(x) != spec.region(back) || spec.piece_distance(x) <= rho)
    throw ValidationError("difference stencil straddles a piece boundary");
  const double d = nb * (spec.exact(x) - spec.exact(back)) / rho;
  return std::abs(d + spec.gamma(x) * spec.exact(x) - spec.f(x));
}

}  // namespace lsnn
