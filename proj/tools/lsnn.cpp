#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lsnn/commands.hpp"

namespace {

template <class T>
std::optional<T> given(const CLI::Option* opt, const T& value) {
  return opt->count() ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least-squares ReLU network solver for linear advection-reaction problems"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (default: LSNN_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  // run
  auto* run = app.add_subcommand("run", "Pretrain and train on a benchmark, write checkpoint and CSVs");
  int problem = 1;
  std::string arch, out_dir;
  double h = 0.01, rho_div = 4.0, eval_h = 0.0;
  long iters = 0, halve = 0, restarts = 0, pre_iters = 0, log_every = 0, progress = 0;
  std::uint64_t seed = 0;
  run->add_option("--problem", problem, "Benchmark id 1..6")->required()->check(CLI::Range(1, 6));
  auto* o_arch = run->add_option("--arch", arch, "Layer widths, e.g. 2-20-20-1");
  auto* o_h = run->add_option("--h", h, "Mesh size (1/h integral)");
  auto* o_rho = run->add_option("--rho-divisor", rho_div, "rho = h / divisor (4; 15 for problem 5)");
  auto* o_iters = run->add_option("--iters", iters, "Main training iterations");
  auto* o_halve = run->add_option("--halve-every", halve, "Learning-rate halving period");
  run->add_option("--seed", seed, "Base seed (restarts use seed+0..restarts-1)");
  auto* o_out = run->add_option("--out", out_dir, "Output directory (default runs/p<problem>)");
  auto* o_eval = run->add_option("--eval-h", eval_h, "Also report on a cell-centred mesh of this size");
  auto* o_restarts = run->add_option("--pretrain-restarts", restarts, "Pretraining restarts (10)");
  auto* o_pre = run->add_option("--pretrain-iters", pre_iters, "Iterations per restart (5000)");
  auto* o_log = run->add_option("--log-every", log_every, "History sampling period (100)");
  run->add_option("--progress", progress, "Print progress every N iterations");

  // eval
  auto* eval = app.add_subcommand("eval", "Recompute the error report of a checkpoint");
  std::string ck_path;
  double eh = 0.0;
  eval->add_option("checkpoint", ck_path, "Checkpoint file")->required();
  auto* o_eh = eval->add_option("--eval-h", eh, "Mesh size; a different h than training uses a cell-centred mesh");

  // hyperplanes
  auto* hyp = app.add_subcommand("hyperplanes", "Write first- and second-layer breaking lines to polylines.csv");
  std::string hyp_ck, hyp_out;
  int grid_n = 400;
  double slice = 0.505;
  hyp->add_option("checkpoint", hyp_ck, "Checkpoint file")->required();
  hyp->add_option("--grid", grid_n, "Sampling cells per side for second-layer tracing")->check(CLI::Range(16, 1 << 14));
  auto* o_slice = hyp->add_option("--slice-z", slice, "Plane z = c for 3-D networks (for example 0.505)");
  auto* o_hout = hyp->add_option("--out", hyp_out, "Output CSV (default: next to the checkpoint)");

  // verify-theory
  auto* vt = app.add_subcommand("verify-theory", "Check the strip approximation bound over a parameter sweep");
  lsnn::TheorySweep sweep;
  std::string vt_csv;
  double v2 = 0.0;
  vt->add_option("--eps1", sweep.eps1, "Strip heights")->expected(1, -1);
  vt->add_option("--eps2", sweep.eps2, "Transition half-widths")->expected(1, -1);
  vt->add_option("--d", sweep.d, "Slopes of the jump")->expected(1, -1);
  vt->add_option("--x0", sweep.x0, "Interface abscissa");
  vt->add_option("--B", sweep.B, "Bound on |beta|");
  auto* o_v2 = vt->add_option("--v2", v2, "beta = (0, v2); defaults to B");
  vt->add_option("--quad-n", sweep.quad_n, "Quadrature cells per side")->check(CLI::PositiveNumber);
  auto* o_vcsv = vt->add_option("--csv", vt_csv, "Write the table as CSV");

  // report
  auto* rep = app.add_subcommand("report", "Merge metrics.csv files into per-problem tables");
  std::string rep_dir;
  rep->add_option("dir", rep_dir, "Directory searched recursively for metrics.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lsnn::kExitValidation;
  }

  const int workers = threads > 0 ? threads : lsnn::default_thread_count();

  if (*run) {
    return lsnn::guarded(std::cerr, [&] {
      auto cfg = lsnn::run_defaults(problem);
      if (o_arch->count()) cfg.arch = lsnn::Architecture::parse(arch);
      if (o_h->count()) cfg.h = h;
      if (o_rho->count()) cfg.rho_divisor = rho_div;
      if (o_iters->count()) cfg.iters = iters;
      if (o_halve->count()) cfg.halve_every = halve;
      if (o_out->count()) cfg.out_dir = out_dir;
      cfg.eval_h = given(o_eval, eval_h);
      if (o_restarts->count()) cfg.pretrain_restarts = static_cast<int>(restarts);
      if (o_pre->count()) cfg.pretrain_iters = pre_iters;
      if (o_log->count()) cfg.log_every = log_every;
      cfg.seed = seed;
      cfg.threads = workers;
      cfg.progress_every = progress;
      return lsnn::cmd_run(cfg);
    });
  }
  lsnn::ThreadLimit pool(workers);
  if (*eval) return pool.run([&] { return lsnn::cmd_eval(ck_path, given(o_eh, eh)); });
  if (*hyp) {
    std::optional<std::filesystem::path> out;
    if (o_hout->count()) out = hyp_out;
    return lsnn::cmd_hyperplanes(hyp_ck, grid_n, given(o_slice, slice), out);
  }
  if (*vt) {
    if (o_v2->count()) sweep.v2 = v2;
    if (o_vcsv->count()) sweep.csv_path = vt_csv;
    return lsnn::cmd_verify_theory(sweep);
  }
  if (*rep) return lsnn::cmd_report(rep_dir);
  return lsnn::kExitValidation;
}
