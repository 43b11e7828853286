#pragma once

// Relative L2 error, relative graph-norm error and the LS-functional ratio.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/ls_functional.hpp"
#include "lsnn/nn_core.hpp"
#include "lsnn/parallel.hpp"
#include "lsnn/problem_bank.hpp"

namespace lsnn {

struct ErrorReport {
  double rel_l2 = 0.0;
  double rel_graph = 0.0;
  double ls_ratio = 0.0;
  Architecture arch;
  std::size_t params = 0;
  int problem_id = 0;
};

/// Field values needed by the metrics: v at interior nodes and at their
/// backward stencil points.
struct SampledField {
  Eigen::VectorXd interior;
  Eigen::VectorXd backward;
};

namespace detail {

template <class Field>
SampledField sample_field(const Field& v, const DiscreteProblem& dp) {
  SampledField s;
  const auto& X = dp.interior_points();
  const auto& B = dp.backward_points();
  s.interior.resize(X.cols());
  s.backward.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    Point x{}, b{};
    for (int d = 0; d < dp.dim(); ++d) {
      x[static_cast<std::size_t>(d)] = X(d, c);
      b[static_cast<std::size_t>(d)] = B(d, c);
    }
    s.interior(c) = v(x);
    s.backward(c) = v(b);
  }
  return s;
}

inline SampledField sample_network(const Network& net, const DiscreteProblem& dp) {
  auto vals = dp.network_values(net);
  return {std::move(vals.interior), std::move(vals.backward)};
}

/// Sums a per-node quantity in blocks of DiscreteProblem::kBlock, pairwise.
template <class Term>
double blocked_sum(Eigen::Index n, Term term) {
  const auto block = static_cast<Eigen::Index>(DiscreteProblem::kBlock);
  std::vector<double> partial;
  std::vector<double> terms;
  for (Eigen::Index lo = 0; lo < n; lo += block) {
    const Eigen::Index len = std::min(block, n - lo);
    terms.resize(static_cast<std::size_t>(len));
    for (Eigen::Index k = 0; k < len; ++k) terms[static_cast<std::size_t>(k)] = term(lo + k);
    partial.push_back(pairwise_sum(terms));
  }
  return pairwise_sum(partial);
}

/// True when the difference stencil of node c may cross the jump: its
/// endpoints lie in pieces on different sides, or either one is within tau
/// of the interface.
inline bool stencil_straddles(const ProblemSpec& spec, const DiscreteProblem& dp, Eigen::Index c, double tau) {
  Point x{}, b{};
  for (int d = 0; d < dp.dim(); ++d) {
    x[static_cast<std::size_t>(d)] = dp.interior_points()(d, c);
    b[static_cast<std::size_t>(d)] = dp.backward_points()(d, c);
  }
  const auto sx = spec.side(x, tau);
  const auto sb = spec.side(b, tau);
  return sx == InterfaceSide::kNear || sb == InterfaceSide::kNear || sx != sb;
}

}  // namespace detail

/// Exact solution and its backward quotient at the nodes of a discrete problem.
struct ExactSamples {
  SampledField u;
  std::vector<char> excluded;  // stencil straddles the interface
  double tau = 0.0;
};

inline ExactSamples sample_exact(const ProblemSpec& spec, const DiscreteProblem& dp) {
  ExactSamples e;
  e.u = detail::sample_field(spec.exact, dp);
  e.tau = 2.0 * dp.rho();
  e.excluded.resize(dp.interior_count());
  for (std::size_t k = 0; k < dp.interior_count(); ++k)
    e.excluded[k] = detail::stencil_straddles(spec, dp, static_cast<Eigen::Index>(k), e.tau) ? 1 : 0;
  return e;
}

/// ||u - v|| / ||u|| over all interior nodes.
inline double relative_l2(const SampledField& v, const ExactSamples& ex, double weight) {
  const auto n = ex.u.interior.size();
  const double num = detail::blocked_sum(n, [&](Eigen::Index c) {
    const double e = ex.u.interior(c) - v.interior(c);
    return weight * e * e;
  });
  const double den = detail::blocked_sum(n, [&](Eigen::Index c) { return weight * ex.u.interior(c) * ex.u.interior(c); });
  if (!(den > 0.0)) throw ValidationError("relative L2 error undefined: exact solution vanishes on the mesh");
  return std::sqrt(num) / std::sqrt(den);
}

/// |||u - v||| / |||u||| with both directional derivatives taken by the
/// backward quotient; stencils straddling the interface are skipped in both sums.
inline double relative_graph_norm(const SampledField& v, const ExactSamples& ex, const DiscreteProblem& dp) {
  const auto n = ex.u.interior.size();
  const double w = dp.interior_weight();
  const double rho = dp.rho();
  const double num = detail::blocked_sum(n, [&](Eigen::Index c) {
    if (ex.excluded[static_cast<std::size_t>(c)]) return 0.0;
    const double e = ex.u.interior(c) - v.interior(c);
    const double eb = dp.speed(c) * ((ex.u.interior(c) - v.interior(c)) - (ex.u.backward(c) - v.backward(c))) / rho;
    return w * (e * e + eb * eb);
  });
  const double den = detail::blocked_sum(n, [&](Eigen::Index c) {
    if (ex.excluded[static_cast<std::size_t>(c)]) return 0.0;
    const double u = ex.u.interior(c);
    const double ub = dp.speed(c) * (ex.u.interior(c) - ex.u.backward(c)) / rho;
    return w * (u * u + ub * ub);
  });
  if (!(den > 0.0)) throw ValidationError("relative graph-norm error undefined: zero denominator");
  return std::sqrt(num) / std::sqrt(den);
}

/// sqrt(L_T(v; f, g)) / sqrt(L_T(v; 0, 0)).
inline double ls_ratio(const LossBreakdown& with_data, const LossBreakdown& homogeneous) {
  if (!(homogeneous.total > 0.0)) throw ValidationError("LS ratio undefined: L_T(v; 0) = 0");
  return std::sqrt(with_data.total) / std::sqrt(homogeneous.total);
}

// Convenience entry points over callables.

template <class Field>
double relative_l2(const Field& v, const ProblemSpec& spec, const QuadratureMesh& mesh, FdRule rule) {
  DiscreteProblem dp(spec, mesh, rule);
  return relative_l2(detail::sample_field(v, dp), sample_exact(spec, dp), dp.interior_weight());
}

template <class Field>
double relative_graph_norm(const Field& v, const ProblemSpec& spec, const QuadratureMesh& mesh, FdRule rule) {
  DiscreteProblem dp(spec, mesh, rule);
  return relative_graph_norm(detail::sample_field(v, dp), sample_exact(spec, dp), dp);
}

template <class Field>
double ls_ratio(const Field& v, const ProblemSpec& spec, const QuadratureMesh& mesh, FdRule rule) {
  DiscreteProblem dp(spec, mesh, rule);
  return ls_ratio(dp.loss_of(v, false), dp.loss_of(v, true));
}

/// All three table columns for a network. ls_ratio is NaN when the
/// homogeneous functional vanishes (e.g. the zero network).
inline ErrorReport evaluate_network(const Network& net, const ProblemSpec& spec, const QuadratureMesh& mesh,
                                    FdRule rule) {
  DiscreteProblem dp(spec, mesh, rule);
  const auto v = detail::sample_network(net, dp);
  const auto ex = sample_exact(spec, dp);
  ErrorReport r;
  r.rel_l2 = relative_l2(v, ex, dp.interior_weight());
  r.rel_graph = relative_graph_norm(v, ex, dp);
  const auto hom = dp.loss(net, true);
  r.ls_ratio = hom.total > 0.0 ? ls_ratio(dp.loss(net, false), hom) : std::numeric_limits<double>::quiet_NaN();
  r.arch = net.arch;
  r.params = param_count(net.arch);
  r.problem_id = spec.id;
  return r;
}

}  // namespace lsnn
