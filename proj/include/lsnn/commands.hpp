#pragma once

// Experiment commands behind the lsnn executable. Each returns a process
// exit status: 0 ok, 1 a verified bound failed, 2 validation error,
// 3 divergence, 4 I/O or corrupt checkpoint.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lsnn/cpwl_theory.hpp"
#include "lsnn/errors.hpp"
#include "lsnn/hyperplanes.hpp"
#include "lsnn/ls_functional.hpp"
#include "lsnn/metrics.hpp"
#include "lsnn/nn_core.hpp"
#include "lsnn/optimizer.hpp"
#include "lsnn/parallel.hpp"
#include "lsnn/persistence.hpp"
#include "lsnn/problem_bank.hpp"

namespace lsnn {

enum ExitCode : int { kExitOk = 0, kExitBoundFailed = 1, kExitValidation = 2, kExitDivergence = 3, kExitIo = 4 };

struct RunConfig {
  int problem_id = 1;
  Architecture arch{{2, 20, 20, 1}};
  double h = 0.01;
  double rho_divisor = 4.0;
  long iters = 50000;
  long halve_every = 50000;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/p1";
  std::optional<double> eval_h;
  int pretrain_restarts = 10;
  long pretrain_iters = 5000;
  long log_every = 100;
  /// Worker cap; 0 means default_thread_count().
  int threads = 0;
  /// Progress lines on the diagnostic stream every this many iterations (0: off).
  long progress_every = 0;

  double rho() const { return h / rho_divisor; }

  void validate() const {
    if (problem_id < 1 || problem_id > 6) throw ValidationError("problem must be 1..6");
    arch.validate();
    const int dim = problem_id == 6 ? 3 : 2;
    if (arch.input_dim() != dim)
      throw ValidationError("problem " + std::to_string(problem_id) + " needs input width " + std::to_string(dim));
    cells_per_side(h);
    if (!(rho_divisor > 1.0)) throw ValidationError("rho_divisor must exceed 1 so that rho < h");
    if (eval_h) cells_per_side(*eval_h);
    if (threads < 0) throw ValidationError("threads must be non-negative");
    train_config().validate();
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.iters = iters;
    tc.halve_every = halve_every;
    tc.seed = seed;
    tc.pretrain_restarts = pretrain_restarts;
    tc.pretrain_iters = pretrain_iters;
    tc.log_every = log_every;
    return tc;
  }
};

/// The default protocol of each benchmark: architecture, iterations, rho
/// divisor and halving period.
inline RunConfig run_defaults(int problem_id) {
  RunConfig c;
  c.problem_id = problem_id;
  c.out_dir = "runs/p" + std::to_string(problem_id);
  switch (problem_id) {
    case 1:
    case 2:
      break;
    case 3:
      c.arch = Architecture{{2, 40, 40, 1}};
      c.iters = 100000;
      break;
    case 4:
      c.arch = Architecture{{2, 40, 40, 1}};
      c.iters = 300000;
      c.halve_every = 100000;
      break;
    case 5:
      c.arch = Architecture{{2, 60, 60, 1}};
      c.iters = 300000;
      c.rho_divisor = 15.0;
      break;
    case 6:
      c.arch = Architecture{{3, 30, 30, 1}};
      c.iters = 100000;
      break;
    default:
      throw ValidationError("problem must be 1..6");
  }
  return c;
}

inline std::string mesh_tag(bool training, double h) {
  return std::string(training ? "train" : "eval") + ":h=" + format_short(h);
}

inline std::string table_row(const ErrorReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(16) << r.arch.str("--") << std::right << std::fixed << std::setprecision(6)
     << std::setw(12) << r.rel_l2 << std::setw(12) << r.rel_graph << std::setw(12) << r.ls_ratio << std::setw(10)
     << r.params;
  return os.str();
}

inline std::string table_header() {
  std::ostringstream os;
  os << std::left << std::setw(16) << "structure" << std::right << std::setw(12) << "rel_l2" << std::setw(12)
     << "rel_graph" << std::setw(12) << "ls_ratio" << std::setw(10) << "params";
  return os.str();
}

/// Runs body and maps the error hierarchy to exit codes.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

namespace detail {

inline int run_in_pool(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto spec = make_benchmark(cfg.problem_id);
  const auto mesh = build_mesh(spec, cfg.h);
  const FdRule rule{cfg.rho()};
  const DiscreteProblem dp(spec, mesh, rule);
  const auto tc = cfg.train_config();

  TrainCallbacks cb;
  const auto started = std::chrono::steady_clock::now();
  if (cfg.progress_every > 0)
    cb.on_log = [&](const HistoryRow& row) {
      if (row.iter % cfg.progress_every != 0) return;
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      err << "iter " << row.iter << "  loss " << format_real(row.loss.total, 6) << "  (" << std::fixed
          << std::setprecision(0) << secs << " s)" << std::defaultfloat << "\n";
    };

  Checkpoint ck;
  ck.arch = cfg.arch;
  ck.seed = cfg.seed;
  ck.problem = cfg.problem_id;
  ck.h = cfg.h;
  ck.rho_divisor = cfg.rho_divisor;
  TrainResult res;
  try {
    res = train(cfg.arch, dp, tc, cb);
  } catch (const TrainingDiverged& e) {
    ck.iteration = static_cast<std::uint64_t>(std::max(0L, e.iteration() - 1));
    ck.params = e.last_good().params;
    ck.adam_m = e.adam().m;
    ck.adam_v = e.adam().v;
    ck.loss = dp.loss(e.last_good());
    try {
      save_checkpoint(ck, cfg.out_dir / "checkpoint.diverged.lsnn");
    } catch (const Error&) {
      // The divergence is the error worth reporting.
    }
    throw;
  }
  ck.iteration = static_cast<std::uint64_t>(cfg.iters);
  ck.params = res.net.params;
  ck.adam_m = res.adam.m;
  ck.adam_v = res.adam.v;
  ck.loss = res.final_loss;
  save_checkpoint(ck, cfg.out_dir / "checkpoint.lsnn");
  write_history_csv(cfg.out_dir / "history.csv", res.history);

  std::string rows;
  const auto report = evaluate_network(res.net, spec, mesh, rule);
  rows += metrics_row(report, mesh_tag(true, cfg.h));
  out << "problem " << cfg.problem_id << "\n" << table_header() << "\n" << table_row(report) << "\n";
  if (cfg.eval_h && *cfg.eval_h != cfg.h) {
    const auto emesh = build_eval_mesh(spec, *cfg.eval_h);
    const auto er = evaluate_network(res.net, spec, emesh, FdRule{*cfg.eval_h / cfg.rho_divisor});
    rows += metrics_row(er, mesh_tag(false, *cfg.eval_h));
    out << table_row(er) << "   [" << mesh_tag(false, *cfg.eval_h) << "]\n";
  }
  append_csv(cfg.out_dir / "metrics.csv", kMetricsHeader, rows);
  return kExitOk;
}

}  // namespace detail

inline int cmd_run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    cfg.validate();
    ThreadLimit pool(cfg.threads > 0 ? cfg.threads : default_thread_count());
    return pool.run([&] { return detail::run_in_pool(cfg, out, err); });
  });
}

/// Recomputes the error report of a checkpoint. Without eval_h (or with the
/// training h) the training mesh is used; otherwise a cell-centred mesh.
inline int cmd_eval(const std::filesystem::path& checkpoint_path, std::optional<double> eval_h,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto ck = load_checkpoint(checkpoint_path);
    if (!ck.problem || !ck.h || !ck.rho_divisor)
      throw ValidationError("checkpoint lacks problem/h/rho_divisor metadata needed for evaluation");
    const auto spec = make_benchmark(*ck.problem);
    const auto net = network_of(ck);
    if (net.input_dim() != spec.dim) throw ValidationError("checkpoint network does not match its problem");
    const bool training = !eval_h || *eval_h == *ck.h;
    const double h = training ? *ck.h : *eval_h;
    const auto mesh = training ? build_mesh(spec, h) : build_eval_mesh(spec, h);
    const auto report = evaluate_network(net, spec, mesh, FdRule{h / *ck.rho_divisor});
    const auto tag = mesh_tag(training, h);
    out << "problem " << *ck.problem << "  [" << tag << "]\n" << table_header() << "\n" << table_row(report) << "\n";
    if (std::isnan(report.ls_ratio)) err << "warning: ls_ratio undefined (L(v; 0) = 0)\n";
    append_csv(checkpoint_path.parent_path() / "metrics.csv", kMetricsHeader, metrics_row(report, tag));
    return kExitOk;
  });
}

/// Writes first- and second-layer breaking lines of a checkpoint's network.
inline int cmd_hyperplanes(const std::filesystem::path& checkpoint_path, int grid_n, std::optional<double> slice_z,
                           std::optional<std::filesystem::path> out_path = std::nullopt,
                           std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto ck = load_checkpoint(checkpoint_path);
    const auto net = network_of(ck);
    if (net.input_dim() == 3 && !slice_z)
      throw ValidationError("3-D network: pass a slice plane (for example z = 0.505)");
    if (slice_z && net.input_dim() != 3) throw ValidationError("a slice plane only applies to 3-D networks");
    std::vector<Polyline> lines = first_layer_lines(net, slice_z).lines;
    std::size_t second = 0;
    if (net.arch.hidden_layers() >= 2) {
      auto more = second_layer_polylines(net, grid_n, slice_z);
      second = more.size();
      lines.insert(lines.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    }
    const auto path = out_path.value_or(checkpoint_path.parent_path() / "polylines.csv");
    write_polylines_csv(path, lines);
    out << lines.size() - second << " first-layer lines, " << second << " second-layer chains -> " << path.string()
        << "\n";
    return kExitOk;
  });
}

struct TheorySweep {
  std::vector<double> eps1{1.0, 0.5, 0.25};
  std::vector<double> eps2{0.1, 0.05, 0.025};
  std::vector<double> d{-1.0, 0.5, 2.0};
  double x0 = 0.5;
  double B = 1.0;
  /// beta = (0, v2); defaults to B.
  std::optional<double> v2;
  int quad_n = 512;
  std::optional<std::filesystem::path> csv_path;
};

inline int cmd_verify_theory(const TheorySweep& sweep, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    if (sweep.eps1.empty() || sweep.eps2.empty() || sweep.d.empty()) throw ValidationError("empty sweep");
    const double v2 = sweep.v2.value_or(sweep.B);
    std::vector<std::tuple<CpwlParams, LemmaCheck>> rows;
    for (double e1 : sweep.eps1)
      for (double e2 : sweep.eps2)
        for (double d : sweep.d) {
          CpwlParams p;
          p.x0 = sweep.x0;
          p.eps1 = e1;
          p.eps2 = e2;
          p.d = d;
          p.B = sweep.B;
          p.validate();
          rows.emplace_back(p, verify_lemma_bound(p, sweep.quad_n, v2));
        }
    std::string csv = "eps1,eps2,d,B,lhs,rhs,holds\n";
    out << std::setw(8) << "eps1" << std::setw(8) << "eps2" << std::setw(8) << "d" << std::setw(6) << "B"
        << std::setw(14) << "lhs" << std::setw(14) << "rhs" << "  holds\n";
    bool all = true;
    for (const auto& [p, r] : rows) {
      all = all && r.holds;
      out << std::setw(8) << p.eps1 << std::setw(8) << p.eps2 << std::setw(8) << p.d << std::setw(6) << p.B
          << std::scientific << std::setprecision(5) << std::setw(14) << r.lhs << std::setw(14) << r.rhs
          << std::defaultfloat << "  " << (r.holds ? "yes" : "NO") << "\n";
      csv += format_short(p.eps1) + "," + format_short(p.eps2) + "," + format_short(p.d) + "," + format_short(p.B) +
             "," + format_real(r.lhs) + "," + format_real(r.rhs) + "," + (r.holds ? "1" : "0") + "\n";
    }
    if (sweep.csv_path) detail::write_atomic(*sweep.csv_path, csv);
    out << (all ? "all bounds hold" : "some bounds FAIL") << "\n";
    return all ? kExitOk : kExitBoundFailed;
  });
}

struct MetricsRecord {
  int problem = 0;
  std::string arch;
  double rel_l2 = 0.0, rel_graph = 0.0, ls_ratio = 0.0;
  std::size_t params = 0;
  std::string mesh;
};

/// Parses a metrics.csv file, checking the header names the required columns.
inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ValidationError(path.string() + ": empty metrics file");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"problem", "arch", "rel_l2", "rel_graph", "ls_ratio", "params"})
    if (!col.count(need)) throw ValidationError(path.string() + ": schema error, missing column '" + need + "'");
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw ValidationError(path.string() + ": row has wrong number of fields");
    MetricsRecord r;
    r.problem = static_cast<int>(parse_unsigned(f[col["problem"]]));
    r.arch = Architecture::parse(f[col["arch"]]).str();
    r.rel_l2 = parse_real(f[col["rel_l2"]]);
    r.rel_graph = parse_real(f[col["rel_graph"]]);
    r.ls_ratio = parse_real(f[col["ls_ratio"]]);
    r.params = parse_unsigned(f[col["params"]]);
    if (col.count("mesh")) r.mesh = f[col["mesh"]];
    out.push_back(std::move(r));
  }
  return out;
}

/// Merges every metrics.csv below dir into one table per problem. Files are
/// read in path order; a later row for the same (problem, arch, mesh)
/// replaces an earlier one with a warning.
inline int cmd_report(const std::filesystem::path& dir, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no metrics.csv files under " + dir.string());
    using Key = std::tuple<int, std::string, std::string>;
    std::map<Key, MetricsRecord> merged;
    std::vector<Key> order;
    for (const auto& f : files)
      for (auto& r : read_metrics_csv(f)) {
        Key k{r.problem, r.arch, r.mesh};
        if (merged.count(k))
          err << "warning: duplicate row for problem " << r.problem << ", " << r.arch
              << (r.mesh.empty() ? "" : ", " + r.mesh) << "; keeping the one from " << f.string() << "\n";
        else
          order.push_back(k);
        merged[k] = std::move(r);
      }
    std::stable_sort(order.begin(), order.end(),
                     [](const Key& a, const Key& b) { return std::get<0>(a) < std::get<0>(b); });
    std::ostringstream os;
    int current = 0;
    for (const auto& k : order) {
      const auto& r = merged.at(k);
      if (r.problem != current) {
        if (current) os << "\n";
        current = r.problem;
        os << "Table " << current << ": relative errors of problem " << current << "\n"
           << std::left << std::setw(16) << "structure" << std::right << std::setw(14) << "|u-v|/|u|" << std::setw(20)
           << "|||u-v|||/|||u|||" << std::setw(20) << "L(v,f)^.5/L(v,0)^.5" << std::setw(12) << "parameters"
           << "  mesh\n";
      }
      os << std::left << std::setw(16) << Architecture::parse(r.arch).str("--") << std::right << std::fixed
         << std::setprecision(6) << std::setw(14) << r.rel_l2 << std::setw(20) << r.rel_graph << std::setw(20)
         << r.ls_ratio << std::setw(12) << r.params << "  " << r.mesh << "\n"
         << std::defaultfloat;
    }
    out << os.str();
    detail::write_atomic(dir / "report.txt", os.str());
    return kExitOk;
  });
}

}  // namespace lsnn
