#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "modelprox/problems.hpp"
#include "modelprox/serialize.hpp"
#include "modelprox/solver.hpp"

namespace modelprox {

enum class Suite { Polytope, Qip };

inline std::string family_name(QipModelFamily f) {
  switch (f) {
    case QipModelFamily::M1: return "M1";
    case QipModelFamily::M2: return "M2";
    case QipModelFamily::M3: return "M3";
    case QipModelFamily::AdditiveComposite: return "AC";
  }
  return "?";
}

inline std::string metric_label(MetricKind m) {
  switch (m) {
    case MetricKind::PsdHessian: return "MQN";
    case MetricKind::BbIdentity: return "MG";
    case MetricKind::FixedIdentity: return "MG-ID";
  }
  return "?";
}

struct BenchSpec {
  Suite suite = Suite::Qip;
  std::vector<QipModelFamily> families = {QipModelFamily::M1, QipModelFamily::M2,
                                          QipModelFamily::M3};
  std::vector<MetricKind> metrics = {MetricKind::PsdHessian, MetricKind::BbIdentity};
  std::vector<double> lambdas = {1e-2, 1e-3, 1e-4};  // qip sweep parameter
  std::vector<double> ps = {2.0, 3.0, 3.5, 4.0};     // polytope sweep parameter
  int runs = 10;
  std::uint64_t base_seed = 1;  // run r uses seed base_seed + r
  int n = 20;
  int m = 200;
  int qip_rank = 1;
  double qip_noise_sd = 0.0;
  double polytope_c = 2.0;
  SolverConfig config;
  std::optional<Gamma0Policy> gamma0_override;  // else per-family defaults
  std::filesystem::path artifact_dir;           // empty: skip artifacts
  TimingPolicy timing = TimingPolicy::Zeroed;
  int threads = 0;  // 0: MODELPROX_THREADS, else hardware
};

struct RunOutcome {
  double param = 0.0;
  std::string algorithm;
  std::uint64_t seed = 0;
  bool converged = false;
  std::string failure_kind;  // "", "max_outer", "inner_failure", "diverged", "subsolver"
  int k = 0;
  long j = 0;
  double f_v = 0.0;
  double d_f = 0.0;
  int r = 0;
  double wall_s = 0.0;
  SolveResult result;
};

struct AggRow {
  double param = 0.0;
  std::string algorithm;
  double mean_k = 0.0;
  double mean_j = 0.0;
  double mean_cpu_s = 0.0;
  double mean_f = 0.0;
  double mean_df = 0.0;
  double mean_r = 0.0;
  int failures = 0;
};

struct BenchResult {
  std::vector<AggRow> rows;
  std::vector<RunOutcome> outcomes;  // deterministic task order
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MODELPROX_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace detail {

struct BenchTask {
  double param = 0.0;
  MetricKind metric = MetricKind::PsdHessian;
  std::optional<QipModelFamily> family;  // engaged for qip
  std::uint64_t seed = 0;
};

inline std::string task_algorithm(const BenchTask& t) {
  std::string label = metric_label(t.metric);
  if (t.family) label += "-" + family_name(*t.family);
  return label;
}

inline RunOutcome execute_task(const BenchSpec& spec, const BenchTask& task) {
  RunOutcome out;
  out.param = task.param;
  out.algorithm = task_algorithm(task);
  out.seed = task.seed;

  SolverConfig cfg = spec.config;
  cfg.metric = task.metric;
  ProblemFunctions prob;
  Eigen::VectorXd x0;
  if (spec.suite == Suite::Qip) {
    auto inst = std::make_shared<QipInstance>(
        gen_qip(spec.n, spec.m, task.param, task.seed, spec.qip_rank, spec.qip_noise_sd));
    prob = make_qip_problem(inst, *task.family);
    cfg.gamma0 = spec.gamma0_override ? *spec.gamma0_override : default_gamma0_qip(*task.family);
    x0 = Eigen::VectorXd::Constant(spec.n, 0.1);
  } else {
    auto inst = std::make_shared<PolytopeInstance>(
        gen_polytope(spec.n, spec.m, task.param, spec.polytope_c, task.seed));
    prob = make_polytope_problem(inst);
    cfg.gamma0 =
        spec.gamma0_override ? *spec.gamma0_override : default_gamma0_polytope(cfg.gamma_min);
    x0 = Eigen::VectorXd::Ones(spec.n);
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    out.result = run(prob, cfg, x0);
    out.converged = out.result.reason == TerminationReason::ToleranceMet;
    if (!out.converged)
      out.failure_kind =
          out.result.reason == TerminationReason::MaxOuter ? "max_outer" : "inner_failure";
  } catch (const SolveDiverged& e) {
    out.result = e.partial;
    out.failure_kind = "diverged";
  } catch (const SubsolverFailure& e) {
    out.result = e.partial;
    out.failure_kind = "subsolver";
  }
  out.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.k = out.result.outer_iterations;
  out.j = out.result.total_inner_trials;
  out.f_v = out.result.f_final;
  out.d_f = out.result.trace.empty() ? 0.0 : out.result.trace.back().model_error;
  out.r = out.result.x_final.size() > 0 ? nonzero_count(out.result.x_final, 1e-6) : 0;
  return out;
}

inline std::string artifact_name(const BenchSpec& spec, const RunOutcome& out) {
  const std::string suite = spec.suite == Suite::Qip ? "qip" : "polytope";
  return suite + "_" + out.algorithm + "_" + fmt_double(out.param) + "_" +
         std::to_string(out.seed) + ".json";
}

inline void write_run_artifact(const BenchSpec& spec, const RunOutcome& out) {
  nlohmann::json j;
  j["suite"] = spec.suite == Suite::Qip ? "qip" : "polytope";
  j["algorithm"] = out.algorithm;
  j["param"] = out.param;
  j["seed"] = out.seed;
  j["n"] = spec.n;
  j["m"] = spec.m;
  j["converged"] = out.converged;
  j["failure_kind"] = out.failure_kind;
  j["nonzero_count"] = out.r;
  j["result"] = result_to_json(out.result, spec.timing);
  atomic_write_file(spec.artifact_dir / artifact_name(spec, out), j.dump(1) + "\n");
}

}  // namespace detail

// Executes the sweep; per-run seeds derive as base_seed + run index, runs may
// execute in parallel, aggregation happens afterwards in task order. A run
// that diverges or fails is recorded and never aborts the sweep.
inline BenchResult run_bench(const BenchSpec& spec) {
  if (spec.runs < 1) throw InvalidInputError("bench: runs >= 1 required");
  spec.config.validate();

  std::vector<detail::BenchTask> tasks;
  const auto& params = spec.suite == Suite::Qip ? spec.lambdas : spec.ps;
  for (const double param : params) {
    for (const MetricKind metric : spec.metrics) {
      if (spec.suite == Suite::Qip) {
        for (const QipModelFamily fam : spec.families)
          for (int r = 0; r < spec.runs; ++r)
            tasks.push_back({param, metric, fam, spec.base_seed + static_cast<std::uint64_t>(r)});
      } else {
        for (int r = 0; r < spec.runs; ++r)
          tasks.push_back(
              {param, metric, std::nullopt, spec.base_seed + static_cast<std::uint64_t>(r)});
      }
    }
  }

  BenchResult res;
  res.outcomes.resize(tasks.size());
  const int nthreads = std::min<int>(resolve_threads(spec.threads),
                                     static_cast<int>(tasks.size()));
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      res.outcomes[i] = detail::execute_task(spec, tasks[i]);
      if (!spec.artifact_dir.empty()) detail::write_run_artifact(spec, res.outcomes[i]);
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // aggregate per (param, algorithm) cell in first-appearance order
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < res.outcomes.size(); ++i) {
    const auto& o = res.outcomes[i];
    AggRow* row = nullptr;
    for (auto& r : res.rows)
      if (r.param == o.param && r.algorithm == o.algorithm) {
        row = &r;
        break;
      }
    if (!row) {
      res.rows.push_back(AggRow{o.param, o.algorithm, 0, 0, 0, 0, 0, 0, 0});
      row = &res.rows.back();
    }
    if (o.converged) {
      row->mean_k += o.k;
      row->mean_j += o.j;
      row->mean_cpu_s += o.wall_s;
      row->mean_f += o.f_v;
      row->mean_df += o.d_f;
      row->mean_r += o.r;
    } else {
      ++row->failures;
    }
  }
  for (auto& r : res.rows) {
    const int conv = spec.runs - r.failures;
    if (r.failures > 0 || conv == 0) {
      // Table semantics: any failed run renders the cell's means as dashes
      r.mean_k = r.mean_j = r.mean_cpu_s = r.mean_f = r.mean_df = r.mean_r = nan;
    } else {
      r.mean_k /= conv;
      r.mean_j /= conv;
      r.mean_cpu_s = spec.timing == TimingPolicy::Real ? r.mean_cpu_s / conv : 0.0;
      r.mean_f /= conv;
      r.mean_df /= conv;
      r.mean_r /= conv;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline std::string report_csv_header() { return "param,algorithm,k,j,cpu_s,f_v,d_f,r,failures"; }

inline std::string report_cell(double v) { return std::isnan(v) ? "-" : fmt_double(v); }

inline std::string report_to_csv(const std::vector<AggRow>& rows) {
  std::string out = report_csv_header() + "\n";
  for (const auto& r : rows) {
    out += fmt_double(r.param) + ',' + r.algorithm + ',' + report_cell(r.mean_k) + ',' +
           report_cell(r.mean_j) + ',' + report_cell(r.mean_cpu_s) + ',' +
           report_cell(r.mean_f) + ',' + report_cell(r.mean_df) + ',' + report_cell(r.mean_r) +
           ',' + std::to_string(r.failures) + '\n';
  }
  return out;
}

inline std::vector<AggRow> report_from_csv(const std::string& csv) {
  std::vector<AggRow> rows;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != report_csv_header())
    throw InvalidInputError("report csv: bad header");
  const auto cell = [](const std::string& s) {
    return s == "-" ? std::numeric_limits<double>::quiet_NaN() : parse_double(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ls, tok, ',')) toks.push_back(tok);
    if (toks.size() != 9) throw InvalidInputError("report csv: bad row");
    AggRow r;
    r.param = parse_double(toks[0]);
    r.algorithm = toks[1];
    r.mean_k = cell(toks[2]);
    r.mean_j = cell(toks[3]);
    r.mean_cpu_s = cell(toks[4]);
    r.mean_f = cell(toks[5]);
    r.mean_df = cell(toks[6]);
    r.mean_r = cell(toks[7]);
    r.failures = std::stoi(toks[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Markdown table grouped by the sweep parameter.
inline std::string report_to_markdown(const std::vector<AggRow>& rows) {
  std::string out = "| param | algorithm | k | j | cpu_s | f_v | d_f | r | failures |\n";
  out += "|------:|-----------|--:|--:|------:|----:|----:|--:|---------:|\n";
  double last_param = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    const bool new_group = std::isnan(last_param) || r.param != last_param;
    out += "| " + (new_group ? fmt_double(r.param) : std::string()) + " | " + r.algorithm +
           " | " + report_cell(r.mean_k) + " | " + report_cell(r.mean_j) + " | " +
           report_cell(r.mean_cpu_s) + " | " + report_cell(r.mean_f) + " | " +
           report_cell(r.mean_df) + " | " + report_cell(r.mean_r) + " | " +
           std::to_string(r.failures) + " |\n";
    last_param = r.param;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence plot: one polyline per labeled trace of f_k against k,
// log-scale vertical axis, plain-text SVG.
// ---------------------------------------------------------------------------

struct PlotTrace {
  std::string label;
  std::vector<double> f;  // f_0, f_1, ...
};

inline std::string convergence_plot_svg(const std::vector<PlotTrace>& traces) {
  if (traces.empty()) throw InvalidInputError("plot: need at least one trace");
  const double width = 860, height = 520;
  const double left = 70, right = width - 200, top = 20, bottom = height - 45;

  size_t max_k = 1;
  double fmin = std::numeric_limits<double>::infinity(), fmax = 0;
  for (const auto& t : traces) {
    max_k = std::max(max_k, t.f.size() > 1 ? t.f.size() - 1 : size_t{1});
    for (double v : t.f) {
      if (v > 0) fmin = std::min(fmin, v);
      fmax = std::max(fmax, v);
    }
  }
  if (!std::isfinite(fmin)) fmin = 1e-16;
  const double floor_v = fmin * 0.5;
  if (fmax <= floor_v) fmax = floor_v * 10;
  const double ylo = std::log10(floor_v), yhi = std::log10(fmax);

  const auto xpix = [&](double k) { return left + (right - left) * (k / double(max_k)); };
  const auto ypix = [&](double v) {
    const double lv = std::log10(std::max(v, floor_v));
    return bottom - (bottom - top) * ((lv - ylo) / std::max(yhi - ylo, 1e-12));
  };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
                    "\" height=\"" + num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(right) +
         "\" y2=\"" + num(bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) +
         "\" y2=\"" + num(bottom) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double k = max_k * t / 4.0;
    svg += "<text x=\"" + num(xpix(k)) + "\" y=\"" + num(bottom + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + fmt_double(std::round(k)) +
           "</text>\n";
    const double lv = ylo + (yhi - ylo) * t / 4.0;
    svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(ypix(std::pow(10.0, lv)) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">1e" + fmt_double(std::round(lv)) +
           "</text>\n";
  }
  svg += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(height - 10) +
         "\" font-size=\"12\" text-anchor=\"middle\">iteration k</text>\n";
  svg += "<text x=\"16\" y=\"" + num((top + bottom) / 2) +
         "\" font-size=\"12\" transform=\"rotate(-90 16 " + num((top + bottom) / 2) +
         ")\" text-anchor=\"middle\">objective</text>\n";

  for (size_t ti = 0; ti < traces.size(); ++ti) {
    const char* color = palette[ti % 8];
    std::string pts;
    for (size_t k = 0; k < traces[ti].f.size(); ++k)
      pts += num(xpix(double(k))) + "," + num(ypix(traces[ti].f[k])) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = top + 16 + 18 * double(ti);
    svg += "<line x1=\"" + num(right + 14) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(right + 44) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + num(right + 50) + "\" y=\"" + num(ly) + "\" font-size=\"11\">" +
           traces[ti].label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void emit_convergence_plot(const std::vector<PlotTrace>& traces,
                                  const std::filesystem::path& path) {
  atomic_write_file(path, convergence_plot_svg(traces));
}

// Measured wall times for a whole bench, kept out of the deterministic CSVs.
inline nlohmann::json bench_timing_sidecar(const BenchResult& res) {
  nlohmann::json j;
  nlohmann::json runs = nlohmann::json::array();
  double total = 0;
  for (const auto& o : res.outcomes) {
    nlohmann::json rj;
    rj["algorithm"] = o.algorithm;
    rj["param"] = o.param;
    rj["seed"] = o.seed;
    rj["wall_s"] = o.wall_s;
    total += o.wall_s;
    runs.push_back(std::move(rj));
  }
  j["wall_s_total"] = total;
  j["runs"] = std::move(runs);
  return j;
}

}  // namespace modelprox
