#pragma once

// Full-batch Adam on the discrete least-squares functional, the step-halving
// learning-rate schedule, and multi-start pretraining.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/ls_functional.hpp"
#include "lsnn/nn_core.hpp"

namespace lsnn {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct TrainConfig {
  long iters = 50000;
  double lr0 = 0.004;
  long halve_every = 50000;
  int pretrain_restarts = 10;
  long pretrain_iters = 5000;
  std::uint64_t seed = 0;
  /// History sampling period (iterations).
  long log_every = 100;
  /// A loss above this (or non-finite) counts as divergence.
  double divergence_threshold = 1e12;

  void validate() const {
    if (iters < 0 || pretrain_iters < 0) throw ValidationError("iteration counts must be non-negative");
    if (!(lr0 > 0.0)) throw ValidationError("learning rate must be positive");
    if (halve_every <= 0) throw ValidationError("halve_every must be positive");
    if (pretrain_restarts <= 0) throw ValidationError("need at least one pretraining restart");
    if (log_every <= 0) throw ValidationError("log_every must be positive");
  }
};

/// lr0 * 2^-floor(iter / halve_every).
inline double lr_schedule(const TrainConfig& cfg, long iter) {
  if (iter < 0) throw ValidationError("iteration must be non-negative");
  return std::ldexp(cfg.lr0, -static_cast<int>(iter / cfg.halve_every));
}

/// One Adam update in place. Rejects non-finite gradients.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, double lr) {
  if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw ValidationError("adam_step: length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw DivergenceError("adam_step: non-finite gradient component " + std::to_string(i));
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

struct HistoryRow {
  long iter = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

/// Outcome of one pretraining restart.
struct RestartRecord {
  std::uint64_t seed = 0;
  double final_loss = 0.0;  // +inf when the restart diverged
};

struct TrainResult {
  Network net;
  AdamState adam;
  std::vector<HistoryRow> history;
  std::vector<RestartRecord> restarts;
  LossBreakdown final_loss;
};

/// Thrown when main training diverges; carries the last finite iterate.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, Network last_good, AdamState adam, long iteration)
      : DivergenceError(what), last_good_(std::move(last_good)), adam_(std::move(adam)), iteration_(iteration) {}
  const Network& last_good() const { return last_good_; }
  const AdamState& adam() const { return adam_; }
  long iteration() const { return iteration_; }

 private:
  Network last_good_;
  AdamState adam_;
  long iteration_;
};

using Initializer = std::function<Network(const Architecture&, std::uint64_t)>;

struct TrainCallbacks {
  /// Called on every logged history row.
  std::function<void(const HistoryRow&)> on_log;
  /// Replaces init_params for pretraining restarts (test hook).
  Initializer init;
};

namespace detail {

inline bool diverged(const LossBreakdown& lb, double threshold) {
  return !std::isfinite(lb.total) || lb.total > threshold;
}

/// Runs `iters` Adam steps. Returns the loss at the final parameters, or
/// nullopt on divergence; params and state are then rolled back to the last
/// iterate whose loss was acceptable and *failed_at names the iteration whose
/// loss (or update) was not.
inline std::optional<LossBreakdown> adam_loop(const DiscreteProblem& problem, Network& net, AdamState& st,
                                              const TrainConfig& cfg, long iters,
                                              std::vector<HistoryRow>* history,
                                              const std::function<void(const HistoryRow&)>* on_log,
                                              long* failed_at = nullptr) {
  std::vector<double> grad(net.params.size(), 0.0);
  std::vector<double> prev_params;
  AdamState prev_state;
  bool have_prev = false;
  auto fail = [&](long it) -> std::optional<LossBreakdown> {
    if (have_prev) {
      net.params = prev_params;
      st = prev_state;
    }
    if (failed_at) *failed_at = it;
    return std::nullopt;
  };
  for (long it = 0; it < iters; ++it) {
    const LossBreakdown lb = problem.loss_and_gradient(net, grad);
    if (diverged(lb, cfg.divergence_threshold)) return fail(it);
    const double lr = lr_schedule(cfg, it);
    if (history && it % cfg.log_every == 0) {
      history->push_back({it, lr, lb});
      if (on_log && *on_log) (*on_log)(history->back());
    }
    for (double g : grad)
      if (!std::isfinite(g)) return fail(it);
    // This iterate's loss is acceptable; it is the fallback from here on.
    prev_params = net.params;
    prev_state = st;
    have_prev = true;
    adam_step(net.params, grad, st, lr);
    if (!net.all_finite()) return fail(it + 1);
  }
  const LossBreakdown last = problem.loss(net);
  if (diverged(last, cfg.divergence_threshold)) return fail(iters);
  if (history) {
    history->push_back({iters, iters > 0 ? lr_schedule(cfg, iters) : cfg.lr0, last});
    if (on_log && *on_log) (*on_log)(history->back());
  }
  return last;
}

}  // namespace detail

/// Trains cfg.pretrain_restarts networks from seeds seed+0, seed+1, ... for
/// cfg.pretrain_iters steps each and keeps the one with the smallest final
/// loss (lowest seed offset on ties). Diverged restarts score +inf.
inline Network pretrain_select(const Architecture& arch, const DiscreteProblem& problem, const TrainConfig& cfg,
                               std::vector<RestartRecord>* records = nullptr, const Initializer& init = {}) {
  cfg.validate();
  std::optional<Network> best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.pretrain_restarts; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    Network net = init ? init(arch, seed) : init_params(arch, seed);
    if (!(net.arch == arch)) throw ValidationError("initializer returned a different architecture");
    AdamState st(net.params.size());
    double score = std::numeric_limits<double>::infinity();
    if (net.all_finite()) {
      if (auto lb = detail::adam_loop(problem, net, st, cfg, cfg.pretrain_iters, nullptr, nullptr)) score = lb->total;
    }
    if (records) records->push_back({seed, score});
    if (score < best_loss) {
      best_loss = score;
      best = std::move(net);
    }
  }
  if (!best) throw DivergenceError("every pretraining restart diverged");
  return *best;
}

/// Pretraining selection followed by cfg.iters full-batch Adam steps with the
/// schedule restarted at iteration 0.
inline TrainResult train(const Architecture& arch, const DiscreteProblem& problem, const TrainConfig& cfg,
                         const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  TrainResult res;
  res.net = pretrain_select(arch, problem, cfg, &res.restarts, callbacks.init);
  res.adam = AdamState(res.net.params.size());
  long at = 0;
  auto lb = detail::adam_loop(problem, res.net, res.adam, cfg, cfg.iters, &res.history, &callbacks.on_log, &at);
  if (!lb) throw TrainingDiverged("training diverged at iteration " + std::to_string(at), res.net, res.adam, at);
  res.final_loss = *lb;
  return res;
}

}  // namespace lsnn
