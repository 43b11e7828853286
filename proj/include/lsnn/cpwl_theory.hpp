#pragma once

// Two-layer ReLU approximants of a step with a non-constant jump on a
// horizontal strip (0,1) x (y0, y0 + eps1), split at the vertical interface
// x = x0, and quadrature checks of their closed-form error norms.
//
//   p0(x)  = (sigma(x - x0 + eps2) - sigma(x - x0 - eps2)) / (2 eps2)
//   p1(x)  = -c sigma(w1.x + x0) + c sigma(w2.x + x0),
//            w1 = (-1, -eps2), w2 = (-1, eps2), c = d / (2 eps2)
//   b(x)   = d (y - y0) left of x0, 0 right of it
//   chi0   = 1 left of x0, 0 right of it

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/nn_core.hpp"

namespace lsnn {

struct CpwlParams {
  double x0 = 0.5;
  double eps1 = 1.0;
  double eps2 = 0.1;
  double d = 1.0;
  double B = 1.0;
  /// Jump height multiplying p0 when strips are tiled; 1 for a single strip.
  double jump = 1.0;
  /// Bottom of the strip.
  double y0 = 0.0;

  void validate() const {
    if (!(x0 > 0.0 && x0 < 1.0)) throw ValidationError("x0 must lie in (0, 1)");
    if (!(eps1 >= 0.0 && eps1 <= 1.0)) throw ValidationError("eps1 must lie in [0, 1]");
    if (!(eps2 > 0.0)) throw ValidationError("eps2 must be positive");
    if (!(eps2 < std::min(x0, 1.0 - x0))) throw ValidationError("eps2 must be smaller than min(x0, 1 - x0)");
    if (!(B >= 0.0)) throw ValidationError("B must be non-negative");
  }
  double c() const { return d / (2.0 * eps2); }
};

/// Literal p0: tends to 1 for x > x0 + eps2 and to 0 for x < x0 - eps2.
inline double eval_p0(double x, double /*y*/, const CpwlParams& p) {
  return (relu(x - p.x0 + p.eps2) - relu(x - p.x0 - p.eps2)) / (2.0 * p.eps2);
}

/// p0 reflected about x0, i.e. oriented like chi0 (1 on the left).
inline double eval_p0_mirrored(double x, double /*y*/, const CpwlParams& p) {
  return (relu(p.x0 - x + p.eps2) - relu(p.x0 - x - p.eps2)) / (2.0 * p.eps2);
}

inline double eval_chi0(double x, double /*y*/, const CpwlParams& p) { return x < p.x0 ? 1.0 : 0.0; }

namespace detail {
// Pre-activations of p1 in the same operation order as p1_network.
inline double p1_z1(double x, double y, const CpwlParams& p) { return (-x - p.eps2 * y) + (p.x0 + p.eps2 * p.y0); }
inline double p1_z2(double x, double y, const CpwlParams& p) { return (-x + p.eps2 * y) + (p.x0 - p.eps2 * p.y0); }
}  // namespace detail

inline double eval_p1(double x, double y, const CpwlParams& p) {
  const double c = p.c();
  return -c * relu(detail::p1_z1(x, y, p)) + c * relu(detail::p1_z2(x, y, p));
}

inline double eval_b(double x, double y, const CpwlParams& p) { return x < p.x0 ? p.d * (y - p.y0) : 0.0; }

/// d/dbeta of p1 for beta = (0, v2), taken piecewise (0 on the kinks).
inline double p1_beta_derivative(double x, double y, const CpwlParams& p, double v2) {
  const double c = p.c();
  double r = 0.0;
  if (detail::p1_z1(x, y, p) > 0.0) r += -c * (-p.eps2 * v2);
  if (detail::p1_z2(x, y, p) > 0.0) r += c * (p.eps2 * v2);
  return r;
}

inline double b_beta_derivative(double x, double /*y*/, const CpwlParams& p, double v2) {
  return x < p.x0 ? p.d * v2 : 0.0;
}

/// p0 (literal or mirrored) as a 2-2-1 ReLU network.
inline Network p0_network(const CpwlParams& p, bool mirrored = false) {
  Network net(Architecture{{2, 2, 1}});
  auto W1 = net.weights(1);
  auto b1 = net.biases(1);
  const double s = mirrored ? -1.0 : 1.0;
  // sigma(s x - (s x0 - eps2)) and sigma(s x - (s x0 + eps2))
  W1 << s, 0.0, s, 0.0;
  b1 << s * p.x0 - p.eps2, s * p.x0 + p.eps2;
  net.weights(2) << 1.0 / (2.0 * p.eps2), -1.0 / (2.0 * p.eps2);
  net.biases(2) << 0.0;
  return net;
}

/// p1 as a 2-2-1 ReLU network (strip bottom y0 folded into the biases).
inline Network p1_network(const CpwlParams& p) {
  Network net(Architecture{{2, 2, 1}});
  net.weights(1) << -1.0, -p.eps2, -1.0, p.eps2;
  net.biases(1) << -(p.x0 + p.eps2 * p.y0), -(p.x0 - p.eps2 * p.y0);
  net.weights(2) << -p.c(), p.c();
  net.biases(2) << 0.0;
  return net;
}

/// Composite midpoint rule over (0,1) x (y0, y0 + eps1): quad_n rows in y;
/// in each row [0,1] is cut at the kink abscissae and every smooth piece gets
/// quad_n cells of its own, so the transition band is resolved at any eps2.
template <class F>
double strip_integral(const F& integrand, const CpwlParams& p, int quad_n) {
  if (quad_n < 1) throw ValidationError("quad_n must be positive");
  if (p.eps1 == 0.0) return 0.0;
  const double hy = p.eps1 / quad_n;
  std::vector<double> breaks;
  std::vector<double> row_terms(static_cast<std::size_t>(quad_n));
  for (int r = 0; r < quad_n; ++r) {
    const double y = p.y0 + (r + 0.5) * hy;
    const double yy = y - p.y0;
    breaks = {0.0, p.x0 - p.eps2 * yy, p.x0, p.x0 + p.eps2 * yy, p.x0 - p.eps2, p.x0 + p.eps2, 1.0};
    std::sort(breaks.begin(), breaks.end());
    double row = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double a = breaks[k], b = breaks[k + 1];
      if (!(b > a)) continue;
      const double hx = (b - a) / quad_n;
      double piece = 0.0;
      for (int i = 0; i < quad_n; ++i) piece += integrand(a + (i + 0.5) * hx, y);
      row += piece * hx;
    }
    row_terms[static_cast<std::size_t>(r)] = row * hy;
  }
  double total = 0.0;
  for (double t : row_terms) total += t;
  return total;
}

struct NormCheck {
  double numeric = 0.0;
  double closed_form = 0.0;
};

/// ||b - p1||^2 on the strip: quadrature vs d^2 eps1^4 eps2 / 24.
inline NormCheck norm_b_minus_p1_sq(const CpwlParams& p, int quad_n) {
  p.validate();
  NormCheck r;
  r.numeric = strip_integral(
      [&](double x, double y) {
        const double e = eval_b(x, y, p) - eval_p1(x, y, p);
        return e * e;
      },
      p, quad_n);
  r.closed_form = p.d * p.d * std::pow(p.eps1, 4) * p.eps2 / 24.0;
  return r;
}

/// ||chi0 - p0|| on the strip, p0 oriented like chi0: quadrature vs sqrt(eps1 eps2 / 6).
inline NormCheck norm_chi0_minus_p0(const CpwlParams& p, int quad_n) {
  p.validate();
  NormCheck r;
  r.numeric = std::sqrt(strip_integral(
      [&](double x, double y) {
        const double e = eval_chi0(x, y, p) - eval_p0_mirrored(x, y, p);
        return e * e;
      },
      p, quad_n));
  r.closed_form = std::sqrt(p.eps1 * p.eps2 / 6.0);
  return r;
}

struct LemmaCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// |||b - p1|||_beta for beta = (0, v2) against
/// sqrt(eps1^3/24 + B^2/4) |d| sqrt(eps1 eps2).
inline LemmaCheck verify_lemma_bound(const CpwlParams& p, int quad_n, double v2) {
  p.validate();
  if (std::abs(v2) > p.B) throw ValidationError("|v2| must not exceed B");
  const double l2 = norm_b_minus_p1_sq(p, quad_n).numeric;
  const double deriv = strip_integral(
      [&](double x, double y) {
        const double e = b_beta_derivative(x, y, p, v2) - p1_beta_derivative(x, y, p, v2);
        return e * e;
      },
      p, quad_n);
  LemmaCheck r;
  r.lhs = std::sqrt(l2 + deriv);
  r.rhs = std::sqrt(std::pow(p.eps1, 3) / 24.0 + p.B * p.B / 4.0) * std::abs(p.d) * std::sqrt(p.eps1 * p.eps2);
  r.holds = r.lhs <= r.rhs * (1.0 + 1e-6);
  return r;
}

/// p(x) = jump_j p0_j(x) + p1_j(x) on the strip (0,1) x (j/m, (j+1)/m).
class TiledApproximant {
 public:
  TiledApproximant(std::vector<CpwlParams> strips, int m) : strips_(std::move(strips)), m_(m) {
    if (m < 1 || strips_.size() != static_cast<std::size_t>(m))
      throw ValidationError("need exactly m strip parameter sets");
    for (std::size_t j = 0; j < strips_.size(); ++j) {
      auto& s = strips_[j];
      if (s.x0 != strips_[0].x0 || s.eps2 != strips_[0].eps2)
        throw ValidationError("tiled strips must share x0 and eps2");
      s.y0 = static_cast<double>(j) / m;
      s.eps1 = 1.0 / m;
      s.validate();
    }
  }

  int strip_of(double y) const { return std::clamp(static_cast<int>(std::floor(y * m_)), 0, m_ - 1); }
  const CpwlParams& strip(int j) const { return strips_[static_cast<std::size_t>(j)]; }
  int strips() const { return m_; }

  double operator()(double x, double y) const {
    const auto& s = strip(strip_of(y));
    return s.jump * eval_p0_mirrored(x, y, s) + eval_p1(x, y, s);
  }
  double beta_derivative(double x, double y, double v2) const {
    return p1_beta_derivative(x, y, strip(strip_of(y)), v2);
  }

 private:
  std::vector<CpwlParams> strips_;
  int m_;
};

inline TiledApproximant tile_p(std::vector<CpwlParams> p_list, int m) { return TiledApproximant(std::move(p_list), m); }

/// Strip parameters approximating chi = a(y) left of x0 (0 right of it):
/// jump_j = a(j/m), d_j = m (a((j+1)/m) - a(j/m)).
inline std::vector<CpwlParams> strips_for_jump(const std::function<double(double)>& a, double x0, double eps2,
                                               double B, int m) {
  std::vector<CpwlParams> out;
  for (int j = 0; j < m; ++j) {
    CpwlParams s;
    s.x0 = x0;
    s.eps2 = eps2;
    s.B = B;
    s.eps1 = 1.0 / m;
    s.y0 = static_cast<double>(j) / m;
    s.jump = a(s.y0);
    s.d = (a(s.y0 + s.eps1) - a(s.y0)) * m;
    out.push_back(s);
  }
  return out;
}

/// |||chi - p|||_beta over (0,1)^2 for beta = (0, v2), summed strip by strip.
/// chi and chi_beta are evaluated on the left of x0 only (both vanish right of it).
inline double tiled_graph_distance(const std::function<double(double, double)>& chi,
                                   const std::function<double(double, double)>& chi_beta,
                                   const TiledApproximant& p, double v2, int quad_n) {
  double total = 0.0;
  for (int j = 0; j < p.strips(); ++j) {
    const auto& s = p.strip(j);
    total += strip_integral(
        [&](double x, double y) {
          const bool left = x < s.x0;
          const double e = (left ? chi(x, y) : 0.0) - (s.jump * eval_p0_mirrored(x, y, s) + eval_p1(x, y, s));
          const double eb = (left ? chi_beta(x, y) : 0.0) - p1_beta_derivative(x, y, s, v2);
          return e * e + eb * eb;
        },
        s, quad_n);
  }
  return std::sqrt(total);
}

}  // namespace lsnn
