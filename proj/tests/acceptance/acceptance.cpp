// Acceptance checks. `lsnn_acceptance <n> [--work DIR] [--strict]` runs
// criterion n and prints one PASS/FAIL line, also appended to
// DIR/summary.txt. The exit status is 0 whatever the verdict (a failed
// criterion is a result, not a crash) unless --strict is given; unexpected
// errors exit 2.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "lsnn/commands.hpp"

using namespace lsnn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work = "acceptance_work";

double rho_for(int id, double h) { return id == 5 ? h / 15 : h / 4; }

/// Full-protocol run of a benchmark into g_work/name, reused when a finished
/// checkpoint with the same flags is already there.
Checkpoint trained(const RunConfig& cfg, double* seconds = nullptr) {
  const auto ck_path = cfg.out_dir / "checkpoint.lsnn";
  if (fs::exists(ck_path)) {
    auto ck = load_checkpoint(ck_path);
    if (ck.arch == cfg.arch && ck.seed == cfg.seed && ck.iteration == static_cast<std::uint64_t>(cfg.iters) &&
        ck.problem == cfg.problem_id && ck.h == cfg.h && ck.rho_divisor == cfg.rho_divisor) {
      std::cerr << "reusing " << ck_path << "\n";
      // Wall time of the run that produced it; unknown counts as over budget.
      if (seconds) {
        *seconds = NAN;
        std::ifstream is(cfg.out_dir / "train_seconds.txt");
        is >> *seconds;
      }
      return ck;
    }
  }
  fs::remove_all(cfg.out_dir);
  const auto t0 = Clock::now();
  const int rc = cmd_run(cfg, std::cerr, std::cerr);
  const double t = seconds_since(t0);
  if (seconds) *seconds = t;
  if (rc != kExitOk) throw Error("run into " + cfg.out_dir.string() + " exited with " + std::to_string(rc));
  std::ofstream(cfg.out_dir / "train_seconds.txt") << t << "\n";
  return load_checkpoint(ck_path);
}

RunConfig protocol(int id, const std::string& name) {
  auto c = run_defaults(id);
  c.out_dir = g_work / name;
  c.progress_every = 10000;
  return c;
}

ErrorReport report_of(const Checkpoint& ck) {
  const auto spec = make_benchmark(*ck.problem);
  return evaluate_network(network_of(ck), spec, build_mesh(spec, *ck.h), FdRule{*ck.h / *ck.rho_divisor});
}

// Informational only: the cell-centred mesh has no nodes on an axis-aligned interface.
double offset_rel_l2(const Checkpoint& ck) {
  const auto spec = make_benchmark(*ck.problem);
  const double h = 1.0 / 128;
  return evaluate_network(network_of(ck), spec, build_eval_mesh(spec, h), FdRule{h / *ck.rho_divisor}).rel_l2;
}

// 1 ---------------------------------------------------------------------------

Verdict parameter_counts() {
  const auto t0 = Clock::now();
  const std::pair<const char*, std::size_t> table[] = {
      {"2-20-20-1", 501}, {"2-40-40-1", 1801}, {"2-450-1", 1801}, {"2-60-60-1", 3901}, {"3-30-30-1", 1081}};
  bool ok = true;
  std::string d;
  for (const auto& [arch, want] : table) {
    const auto got = param_count(Architecture::parse(arch));
    ok = ok && got == want;
    d += std::string(arch) + "=" + std::to_string(got) + " ";
  }
  const double t = seconds_since(t0);
  return {ok && t < 1.0, d + fmt("(%.3f s)", t)};
}

// 2 ---------------------------------------------------------------------------

Verdict gradient_check() {
  const auto t0 = Clock::now();
  const double step = 1e-4, tol = 1e-5, kink = 1e-3;
  std::mt19937_64 rng(2024);
  const int hs[] = {4, 5, 8, 10, 16, 20};
  std::size_t compared = 0, excluded = 0, bad = 0;
  double worst = 0.0;
  for (int fixture = 0; fixture < 100; ++fixture) {
    const int id = 1 + static_cast<int>(rng() % 5);
    const double h = 1.0 / hs[rng() % 6];
    const auto spec = make_benchmark(id);
    const auto mesh = build_mesh(spec, h);
    const FdRule rule{rho_for(id, h)};
    const DiscreteProblem dp(spec, mesh, rule);
    Network net = init_params(Architecture::parse("2-3-3-1"), rng());

    // Hidden units with a pre-activation within `kink` of zero at some
    // evaluation point; their parameters and everything upstream are skipped.
    std::vector<int> near_layer;  // layers holding a near-kink unit
    std::vector<std::vector<bool>> near(3);
    auto add_points = [&](const Eigen::MatrixXd& pts) {
      for (Eigen::Index c = 0; c < pts.cols(); ++c) {
        const double p[2] = {pts(0, c), pts(1, c)};
        const auto tr = forward_trace(net, std::span<const double>(p, 2));
        for (std::size_t l = 0; l < tr.pre.size(); ++l) {
          near[l + 1].resize(tr.pre[l].size());
          for (std::size_t i = 0; i < tr.pre[l].size(); ++i)
            if (std::abs(tr.pre[l][i]) <= kink) near[l + 1][i] = true;
        }
      }
    };
    add_points(dp.interior_points());
    add_points(dp.backward_points());
    add_points(dp.inflow_points());
    int deepest_near = 0;
    for (int l = 1; l <= 2; ++l)
      for (bool b : near[static_cast<std::size_t>(l)])
        if (b) deepest_near = l;

    const auto g = loss_gradient(net, spec, mesh, rule);
    for (int l = 1; l <= net.arch.hidden_layers() + 1; ++l) {
      const auto off = layer_offset(net.arch, l);
      const int rows = net.arch.dims[l], cols = net.arch.dims[l - 1];
      for (int k = 0; k < rows * (cols + 1); ++k) {
        const bool is_bias = k >= rows * cols;
        const int unit = is_bias ? k - rows * cols : k / cols;
        const bool own_near = l <= 2 && near[static_cast<std::size_t>(l)][static_cast<std::size_t>(unit)];
        if (own_near || l < deepest_near) {
          ++excluded;
          continue;
        }
        const std::size_t idx = off + static_cast<std::size_t>(k);
        const double keep = net.params[idx];
        net.params[idx] = keep + step;
        const double lp = discrete_loss(net, spec, mesh, rule).total;
        net.params[idx] = keep - step;
        const double lm = discrete_loss(net, spec, mesh, rule).total;
        net.params[idx] = keep;
        const double fd = (lp - lm) / (2 * step);
        const double err = std::abs(fd - g[idx]);
        const double rel = g[idx] == 0.0 ? (fd == 0.0 ? 0.0 : INFINITY) : err / std::abs(g[idx]);
        worst = std::max(worst, rel);
        if (!(rel <= tol)) {
          ++bad;
          std::cerr << fmt("  fixture %d (problem %d, h=%g) param %zu: grad %.12e fd %.12e rel %.2e\n", fixture, id, h,
                           idx, g[idx], fd, rel);
        }
        ++compared;
      }
    }
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 60.0, fmt("%zu components compared, %zu kink-adjacent skipped, %zu above 1e-5, worst "
                                    "relative error %.2e (%.1f s)",
                                    compared, excluded, bad, worst, t)};
}

// 3 ---------------------------------------------------------------------------

Verdict strip_identities() {
  const auto t0 = Clock::now();
  double worst_b = 0.0, worst_chi = 0.0;
  int lemma_fail = 0;
  for (double e1 : {1.0, 0.5, 0.25})
    for (double e2 : {0.1, 0.05, 0.025})
      for (double d : {-1.0, 0.5, 2.0}) {
        CpwlParams p;
        p.x0 = 0.5;
        p.eps1 = e1;
        p.eps2 = e2;
        p.d = d;
        p.B = 1.0;
        const auto nb = norm_b_minus_p1_sq(p, 512);
        const double want_b = d * d * std::pow(e1, 4) * e2 / 24;
        worst_b = std::max(worst_b, std::abs(nb.numeric - want_b) / want_b);
        const auto nc = norm_chi0_minus_p0(p, 1024);
        const double want_c = std::sqrt(e1 * e2 / 6);
        worst_chi = std::max(worst_chi, std::abs(nc.numeric - want_c) / want_c);
        if (!verify_lemma_bound(p, 512, p.B).holds) ++lemma_fail;
      }
  const double t = seconds_since(t0);
  return {worst_b <= 1e-3 && worst_chi <= 1e-2 && lemma_fail == 0 && t < 60.0,
          fmt("||b-p1||^2 worst rel %.2e (<=1e-3), ||chi0-p0|| worst rel %.2e (<=1e-2), lemma failures %d/27 (%.1f s)",
              worst_b, worst_chi, lemma_fail, t)};
}

// 4 ---------------------------------------------------------------------------

Verdict exact_residuals() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string d;
  for (int id = 1; id <= 6; ++id) {
    const auto spec = make_benchmark(id);
    const double rho = rho_for(id, 0.01);
    std::mt19937_64 rng(static_cast<std::uint64_t>(100 + id));
    double worst = 0.0;
    for (int n = 0; n < 1000;) {
      Point x{};
      for (int k = 0; k < spec.dim; ++k) x[static_cast<std::size_t>(k)] = unit_uniform(rng);
      if (spec.piece_distance(x) < 2.0 * rho) continue;
      worst = std::max(worst, residual_check(spec, x, rho));
      ++n;
    }
    const double bound = 5.0 * rho * spec.curvature_bound;
    ok = ok && worst <= bound;
    d += fmt("P%d %.2e/%.2e ", id, worst, bound);
  }
  const double t = seconds_since(t0);
  return {ok && t < 60.0, d + fmt("(%.1f s)", t)};
}

// 5 ---------------------------------------------------------------------------

Verdict benchmark_one() {
  double secs = NAN;
  const auto ck = trained(protocol(1, "p1"), &secs);
  const auto r = report_of(ck);
  const bool ok = r.rel_l2 <= 0.08 && r.rel_graph <= 0.02 && r.ls_ratio <= 0.02;
  return {ok, fmt("rel_l2 %.6f (<=0.08), rel_graph %.6f (<=0.02), ls_ratio %.6f (<=0.02); training %.0f s", r.rel_l2,
                  r.rel_graph, r.ls_ratio, secs)};
}

// 6 ---------------------------------------------------------------------------

Verdict benchmark_six() {
  auto cfg = protocol(6, "p6");
  cfg.h = 0.02;
  double secs = NAN;
  const auto ck = trained(cfg, &secs);
  const auto r = report_of(ck);
  const bool ok = r.rel_l2 <= 0.05 && secs <= 3600.0;
  return {ok, fmt("rel_l2 %.6f (<=0.05), rel_graph %.6f, ls_ratio %.6f; runtime %.0f s (<=3600); "
                  "rel_l2 on offset h=1/128 mesh %.6f (not judged)",
                  r.rel_l2, r.rel_graph, r.ls_ratio, secs, offset_rel_l2(ck))};
}

// 7 ---------------------------------------------------------------------------

Verdict depth_separation() {
  auto deep = protocol(4, "p4_deep");
  deep.iters = 100000;
  auto shallow = deep;
  shallow.arch = Architecture::parse("2-450-1");
  shallow.out_dir = g_work / "p4_shallow";
  double t_deep = NAN, t_shallow = NAN;
  const auto rd = report_of(trained(deep, &t_deep));
  const auto rs = report_of(trained(shallow, &t_shallow));
  const double total = t_deep + t_shallow;
  const bool ok = rd.params == rs.params && rd.rel_l2 <= 0.5 * rs.rel_l2 && total <= 3600.0;
  return {ok, fmt("2-40-40-1 rel_l2 %.6f vs 2-450-1 rel_l2 %.6f (ratio %.3f, need <=0.5), params %zu/%zu; runtime "
                  "%.0f + %.0f s (<=3600)",
                  rd.rel_l2, rs.rel_l2, rd.rel_l2 / rs.rel_l2, rd.params, rs.params, t_deep, t_shallow)};
}

// 8 ---------------------------------------------------------------------------

/// Total variation along y = 0.5 sampled at n + 1 equispaced points.
template <class F>
double line_variation(const F& f, int dim, int n) {
  double tv = 0.0, prev = 0.0;
  for (int i = 0; i <= n; ++i) {
    Point p{};
    p[0] = static_cast<double>(i) / n;
    p[1] = 0.5;
    if (dim == 3) p[2] = 0.5;
    const double v = f(p);
    if (i > 0) tv += std::abs(v - prev);
    prev = v;
  }
  return tv;
}

Verdict no_gibbs() {
  std::vector<Checkpoint> cks;
  for (int id : {1, 2}) cks.push_back(trained(protocol(id, "p" + std::to_string(id))));
  const auto t0 = Clock::now();
  bool ok = true;
  std::string d;
  for (const auto& ck : cks) {
    const auto spec = make_benchmark(*ck.problem);
    const auto net = network_of(ck);
    const int n = 20000;
    const double tv_u = line_variation(spec.exact, spec.dim, n);
    const double tv_v = line_variation(
        [&](const Point& p) { return forward(net, std::span<const double>(p.data(), 2)); }, spec.dim, n);
    const double dev = (tv_v - tv_u) / tv_u;
    ok = ok && std::abs(dev) <= 0.02;
    d += fmt("P%d TV(v) %.5f vs TV(u) %.5f (%+.2f%%) ", *ck.problem, tv_v, tv_u, 100 * dev);
  }
  const double t = seconds_since(t0);
  return {ok && t < 60.0, d + fmt("(%.2f s post-training)", t)};
}

// 9 ---------------------------------------------------------------------------

Verdict cpwl_cross_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(909);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    CpwlParams p;
    p.x0 = 0.2 + 0.6 * unit_uniform(rng);
    p.eps2 = 0.01 + 0.1 * unit_uniform(rng) * std::min(p.x0, 1 - p.x0);
    p.d = -3 + 6 * unit_uniform(rng);
    p.y0 = unit_uniform(rng) * 0.5;
    const auto n0 = p0_network(p), n0m = p0_network(p, true), n1 = p1_network(p);
    for (int k = 0; k < 10000; ++k) {
      const double xy[2] = {unit_uniform(rng), unit_uniform(rng)};
      const std::span<const double> s(xy, 2);
      worst = std::max(worst, std::abs(forward(n0, s) - eval_p0(xy[0], xy[1], p)));
      worst = std::max(worst, std::abs(forward(n0m, s) - eval_p0_mirrored(xy[0], xy[1], p)));
      worst = std::max(worst, std::abs(forward(n1, s) - eval_p1(xy[0], xy[1], p)));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-14 && t < 10.0, fmt("max |net - formula| %.2e over 5 x 10^4 points (%.2f s)", worst, t)};
}

// 10 --------------------------------------------------------------------------

Verdict determinism() {
  std::string first;
  bool same = true;
  std::string d;
  double t1 = NAN, total = 0.0;
  for (int threads : {1, 2, 8}) {
    auto cfg = protocol(1, "det_t" + std::to_string(threads));
    cfg.threads = threads;
    cfg.progress_every = 0;
    fs::remove_all(cfg.out_dir);
    const auto t0 = Clock::now();
    if (cmd_run(cfg, std::cerr, std::cerr) != kExitOk) throw Error("determinism run failed");
    const double t = seconds_since(t0);
    if (threads == 1) t1 = t;
    total += t;
    const auto csv = detail::read_file(cfg.out_dir / "metrics.csv");
    if (first.empty())
      first = csv;
    else
      same = same && csv == first;
    d += fmt("%d thr %.0f s; ", threads, t);
  }
  return {same, d + fmt("metrics.csv %s; total %.0f s vs 3x single-thread %.0f s", same ? "identical" : "DIFFER",
                        total, 3 * t1)};
}

}  // namespace

int main(int argc, char** argv) {
  int which = 0;
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc)
      g_work = argv[++i];
    else if (a == "--strict")
      strict = true;
    else
      which = std::atoi(a.c_str());
  }
  const std::function<Verdict()> checks[] = {parameter_counts, gradient_check,   strip_identities, exact_residuals,
                                             benchmark_one,    benchmark_six,    depth_separation,    no_gibbs,
                                             cpwl_cross_check, determinism};
  if (which < 1 || which > 10) {
    std::cerr << "usage: lsnn_acceptance <1..10> [--work DIR] [--strict]\n";
    return 2;
  }
  try {
    fs::create_directories(g_work);
    const auto v = checks[which - 1]();
    const std::string line = "criterion " + std::to_string(which) + ": " + (v.pass ? "PASS" : "FAIL") + "  " + v.detail;
    std::cout << line << std::endl;
    std::ofstream(g_work / "summary.txt", std::ios::app) << line << "\n";
    return strict && !v.pass ? 1 : 0;
  } catch (const std::exception& e) {
    std::cout << "criterion " << which << ": FAIL  error: " << e.what() << std::endl;
    return 2;
  }
}
