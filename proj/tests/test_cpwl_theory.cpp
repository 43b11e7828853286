#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsnn/cpwl_theory.hpp"
#include "lsnn/nn_core.hpp"

using namespace lsnn;

namespace {

CpwlParams params(double eps1, double eps2, double d) {
  CpwlParams p;
  p.eps1 = eps1;
  p.eps2 = eps2;
  p.d = d;
  return p;
}

// Plain midpoint rule on an n x n grid, no kink alignment. Independent of
// strip_integral; converges at first order for the kinked integrands here.
template <class F>
double naive_integral(const F& f, double y0, double eps1, int n) {
  long double s = 0;
  const double hx = 1.0 / n, hy = eps1 / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += f((i + 0.5) * hx, y0 + (j + 0.5) * hy);
  return static_cast<double>(s) * hx * hy;
}

double forward2(const Network& net, double x, double y) {
  const double pt[2] = {x, y};
  return forward(net, pt);
}

}  // namespace

TEST(EvalP0, Examples) {
  const auto p = params(1, 0.1, 1);
  EXPECT_NEAR(eval_p0(0.5, 0.3, p), 0.5, 1e-15);
  EXPECT_NEAR(eval_p0(0.6, 0.3, p), 1.0, 1e-15);
  EXPECT_NEAR(eval_p0(0.9, 0.3, p), 1.0, 1e-15);
  EXPECT_NEAR(eval_p0(0.4, 0.3, p), 0.0, 1e-15);
  EXPECT_EQ(eval_p0(0.1, 0.3, p), 0.0);
  EXPECT_NEAR(eval_p0(0.55, 0.3, p), 0.75, 1e-15);
}

TEST(EvalP0, MirroredMatchesChi0Orientation) {
  const auto p = params(1, 0.1, 1);
  EXPECT_NEAR(eval_p0_mirrored(0.2, 0.0, p), 1.0, 1e-15);
  EXPECT_EQ(eval_p0_mirrored(0.8, 0.0, p), 0.0);
  EXPECT_NEAR(eval_p0_mirrored(0.45, 0.0, p), 0.75, 1e-15);
  for (double x : {0.1, 0.42, 0.5, 0.58, 0.9}) EXPECT_NEAR(eval_p0_mirrored(x, 0, p), eval_p0(1.0 - x, 0, p), 1e-15);
}

TEST(EvalP1, Examples) {
  const auto p = params(1, 0.1, 1);
  EXPECT_EQ(eval_p1(0.5, 0.0, p), 0.0);
  EXPECT_NEAR(eval_p1(0.5, 0.5, p), 0.25, 1e-15);
}

TEST(EvalP1, FarLeftEqualsB) {
  const auto p = params(1, 0.1, 1.7);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const double y = unit_uniform(rng);
    const double x = (p.x0 - p.eps2 * y) * unit_uniform(rng);
    EXPECT_NEAR(eval_p1(x, y, p), p.d * y, 1e-13);
    EXPECT_NEAR(eval_p1(x, y, p), eval_b(x, y, p), 1e-13);
  }
}

TEST(EvalB, Examples) {
  auto p = params(1, 0.1, 1);
  EXPECT_EQ(eval_b(0.25, 0.0, p), 0.0);
  p.d = 2;
  EXPECT_NEAR(eval_b(0.1, 0.3, p), 0.6, 1e-15);
  EXPECT_EQ(eval_b(0.9, 0.3, p), 0.0);
}

TEST(NormBMinusP1, ZeroSlope) {
  const auto r = norm_b_minus_p1_sq(params(1, 0.1, 0), 512);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.closed_form, 0.0);
}

TEST(NormBMinusP1, Examples) {
  const auto a = norm_b_minus_p1_sq(params(1, 0.1, 1), 512);
  EXPECT_NEAR(a.closed_form, 1.0 / 240, 1e-18);
  EXPECT_NEAR(a.numeric, a.closed_form, 1e-3 * a.closed_form);
  const auto b = norm_b_minus_p1_sq(params(0.5, 0.05, 2), 512);
  EXPECT_NEAR(b.closed_form, 5.2083333333333333e-4, 1e-15);
  EXPECT_NEAR(b.numeric, b.closed_form, 1e-3 * b.closed_form);
}

TEST(NormBMinusP1, AgreesWithNaiveQuadrature) {
  const auto p = params(1, 0.1, 1);
  const double naive = naive_integral(
      [&](double x, double y) {
        const double e = eval_b(x, y, p) - eval_p1(x, y, p);
        return e * e;
      },
      0.0, 1.0, 2048);
  EXPECT_NEAR(norm_b_minus_p1_sq(p, 512).numeric, naive, 2e-3 * naive);
}

TEST(NormBMinusP1, ConvergesAtLeastFirstOrder) {
  const auto p = params(0.7, 0.07, 1.3);
  double prev = INFINITY;
  for (int n : {64, 128, 256, 512}) {
    const auto r = norm_b_minus_p1_sq(p, n);
    const double err = std::abs(r.numeric - r.closed_form);
    if (std::isfinite(prev) && prev > 1e-15 * r.closed_form) {
      EXPECT_LE(err, 0.55 * prev) << n;
    }
    prev = err;
  }
}

TEST(NormChi0MinusP0, Example) {
  const auto r = norm_chi0_minus_p0(params(1, 0.1, 1), 1024);
  EXPECT_NEAR(r.closed_form, 0.129099, 1e-6);
  EXPECT_NEAR(r.numeric, r.closed_form, 1e-2 * r.closed_form);
}

TEST(NormChi0MinusP0, QuarterEps2HalvesNorm) {
  const auto a = norm_chi0_minus_p0(params(1, 0.1, 1), 1024);
  const auto b = norm_chi0_minus_p0(params(1, 0.025, 1), 1024);
  EXPECT_NEAR(b.closed_form / a.closed_form, 0.5, 1e-12);
  EXPECT_NEAR(b.numeric / a.numeric, 0.5, 0.005);
}

TEST(NormChi0MinusP0, ZeroStrip) {
  const auto r = norm_chi0_minus_p0(params(0, 0.1, 1), 1024);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.closed_form, 0.0);
}

TEST(NormChi0MinusP0, AgreesWithNaiveQuadrature) {
  const auto p = params(1, 0.1, 1);
  const double naive = std::sqrt(naive_integral(
      [&](double x, double y) {
        const double e = eval_chi0(x, y, p) - eval_p0_mirrored(x, y, p);
        return e * e;
      },
      0.0, 1.0, 2048));
  EXPECT_NEAR(norm_chi0_minus_p0(p, 1024).numeric, naive, 1e-3 * naive);
}

TEST(CpwlParams, Validation) {
  auto p = params(1, 0.5, 1);
  EXPECT_THROW(p.validate(), ValidationError);
  p = params(1, 0.1, 1);
  p.x0 = 0.05;
  EXPECT_THROW(p.validate(), ValidationError);
  p = params(1.5, 0.1, 1);
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_THROW(norm_b_minus_p1_sq(params(1, 0.6, 1), 64), ValidationError);
}

TEST(LemmaBound, ZeroSlope) {
  const auto r = verify_lemma_bound(params(1, 0.1, 0), 512, 1.0);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(LemmaBound, Example) {
  const auto r = verify_lemma_bound(params(1, 0.1, 1), 512, 1.0);
  EXPECT_TRUE(r.holds);
  EXPECT_GT(r.lhs, 0.0);
  RecordProperty("lhs", std::to_string(r.lhs));
}

TEST(LemmaBound, Sweep) {
  for (double e1 : {0.25, 0.5, 1.0})
    for (double e2 : {0.025, 0.05, 0.1})
      for (double d : {-2.0, 0.5, 3.0})
        for (double v2 : {1.0, 0.3}) {
          auto p = params(e1, e2, d);
          p.B = 1.0;
          const auto r = verify_lemma_bound(p, 512, v2);
          EXPECT_TRUE(r.holds) << e1 << " " << e2 << " " << d << " " << v2 << ": " << r.lhs << " > " << r.rhs;
        }
}

TEST(LemmaBound, ScalesLikeSqrtEps2) {
  std::vector<double> scaled;
  for (double e2 : {0.1, 0.05, 0.025}) scaled.push_back(verify_lemma_bound(params(1, e2, 1), 512, 1.0).lhs / std::sqrt(e2));
  for (double s : scaled) EXPECT_NEAR(s, scaled[0], 0.1 * scaled[0]);
}

TEST(LemmaBound, RejectsSpeedAboveB) {
  EXPECT_THROW(verify_lemma_bound(params(1, 0.1, 1), 64, 2.0), ValidationError);
}

TEST(NetworkRealization, MatchesFormulas) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    CpwlParams p;
    p.x0 = 0.3 + 0.4 * unit_uniform(rng);
    p.eps2 = 0.01 + 0.2 * unit_uniform(rng);
    p.d = 4 * unit_uniform(rng) - 2;
    p.y0 = 0.5 * unit_uniform(rng);
    const auto n0 = p0_network(p), n0m = p0_network(p, true), n1 = p1_network(p);
    for (int k = 0; k < 10000; ++k) {
      const double x = unit_uniform(rng), y = unit_uniform(rng);
      ASSERT_NEAR(forward2(n0, x, y), eval_p0(x, y, p), 1e-14);
      ASSERT_NEAR(forward2(n0m, x, y), eval_p0_mirrored(x, y, p), 1e-14);
      ASSERT_NEAR(forward2(n1, x, y), eval_p1(x, y, p), 1e-14);
    }
  }
}

TEST(TileP, SingleStrip) {
  auto p = params(1, 0.1, 0.8);
  p.jump = 1.0;
  const auto t = tile_p({p}, 1);
  for (double x : {0.1, 0.45, 0.5, 0.53, 0.9})
    for (double y : {0.1, 0.7}) EXPECT_EQ(t(x, y), eval_p0_mirrored(x, y, p) + eval_p1(x, y, p));
}

TEST(TileP, StripCountMismatch) {
  EXPECT_THROW(tile_p({params(1, 0.1, 1)}, 2), ValidationError);
  auto a = params(1, 0.1, 1), b = params(1, 0.05, 1);
  EXPECT_THROW(tile_p({a, b}, 2), ValidationError);
}

TEST(TileP, P0PartContinuousAcrossStrips) {
  auto p = params(1, 0.1, 0.0);
  const auto t = tile_p({p, p}, 2);
  for (double x : {0.1, 0.45, 0.5, 0.55, 0.9}) EXPECT_EQ(t(x, 0.5 - 1e-12), t(x, 0.5 + 1e-12));
}

TEST(TileP, ContinuousInsideStrips) {
  const auto t = tile_p(strips_for_jump([](double y) { return -std::exp(-y); }, 0.5, 0.05, 1.0, 4), 4);
  std::mt19937_64 rng(17);
  // Lipschitz constant of each piece is at most jump/(2 eps2) + c (1 + eps2) < 30.
  for (int k = 0; k < 5000; ++k) {
    const double x = unit_uniform(rng);
    const int j = static_cast<int>(4 * unit_uniform(rng));
    const double y = (j + 0.01 + 0.98 * unit_uniform(rng)) / 4;
    EXPECT_LE(std::abs(t(x, y) - t(x + 1e-9, y + 1e-9)), 30 * 2e-9);
  }
}

TEST(TileP, GraphDistanceFollowsSqrtEps2Law) {
  // chi is the jump part of benchmark 1: -e^{-y} left of x = 1/2.
  auto a = [](double y) { return -std::exp(-y); };
  auto chi = [&](double, double y) { return a(y); };
  auto chi_beta = [](double, double y) { return std::exp(-y); };
  std::vector<double> dist;
  for (double e2 : {0.04, 0.02, 0.01, 0.005}) {
    const auto t = tile_p(strips_for_jump(a, 0.5, e2, 1.0, 4), 4);
    dist.push_back(tiled_graph_distance(chi, chi_beta, t, 1.0, 512));
  }
  for (std::size_t k = 1; k < dist.size(); ++k) EXPECT_LT(dist[k], dist[k - 1]);
  // D^2 = A + C eps2, with A the eps2-independent slope-interpolation error;
  // successive differences of D^2 halve with eps2.
  for (std::size_t k = 2; k < dist.size(); ++k) {
    const double r = (dist[k - 2] * dist[k - 2] - dist[k - 1] * dist[k - 1]) /
                     (dist[k - 1] * dist[k - 1] - dist[k] * dist[k]);
    EXPECT_NEAR(r, 2.0, 0.05) << k;
  }
}
