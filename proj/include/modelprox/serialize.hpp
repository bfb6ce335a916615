#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "modelprox/problems.hpp"
#include "modelprox/solver.hpp"

namespace modelprox {

// Shortest round-trip decimal representation; locale-independent.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw InvalidInputError("parse_double: bad number '" + s + "'");
  return v;
}

// temp-file-then-rename so readers never observe partial files
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Instance JSON: {type, n, m, p?, c?, lambda?, seed, a?|A?, b, x_truth?},
// matrices row-major.
// ---------------------------------------------------------------------------

inline nlohmann::json instance_to_json(const PolytopeInstance& inst) {
  nlohmann::json j;
  j["type"] = "polytope";
  j["n"] = inst.n();
  j["m"] = inst.m();
  j["p"] = inst.p;
  j["c"] = inst.c;
  j["seed"] = inst.seed;
  std::vector<double> a;
  a.reserve(static_cast<size_t>(inst.m()) * inst.n());
  for (int i = 0; i < inst.m(); ++i)
    for (int jx = 0; jx < inst.n(); ++jx) a.push_back(inst.a(i, jx));
  j["a"] = std::move(a);
  j["b"] = std::vector<double>(inst.b.data(), inst.b.data() + inst.b.size());
  return j;
}

inline nlohmann::json instance_to_json(const QipInstance& inst) {
  nlohmann::json j;
  j["type"] = "qip";
  j["n"] = inst.n();
  j["m"] = inst.m();
  j["lambda"] = inst.lambda;
  j["seed"] = inst.seed;
  nlohmann::json mats = nlohmann::json::array();
  for (const auto& a : inst.a_ops) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(a.rows()) * a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index jx = 0; jx < a.cols(); ++jx) flat.push_back(a(i, jx));
    mats.push_back(std::move(flat));
  }
  j["A"] = std::move(mats);
  j["b"] = std::vector<double>(inst.b.data(), inst.b.data() + inst.b.size());
  if (inst.x_truth)
    j["x_truth"] =
        std::vector<double>(inst.x_truth->data(), inst.x_truth->data() + inst.x_truth->size());
  return j;
}

inline PolytopeInstance polytope_from_json(const nlohmann::json& j) {
  PolytopeInstance inst;
  const int n = j.at("n").get<int>(), m = j.at("m").get<int>();
  inst.p = j.at("p").get<double>();
  inst.c = j.at("c").get<double>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  const auto a = j.at("a").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  if (static_cast<int>(a.size()) != m * n || static_cast<int>(b.size()) != m)
    throw InvalidInputError("polytope json: dimension mismatch");
  inst.a.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int jx = 0; jx < n; ++jx) inst.a(i, jx) = a[static_cast<size_t>(i) * n + jx];
  inst.b = Eigen::Map<const Eigen::VectorXd>(b.data(), m);
  return inst;
}

inline QipInstance qip_from_json(const nlohmann::json& j) {
  QipInstance inst;
  const int n = j.at("n").get<int>(), m = j.at("m").get<int>();
  inst.lambda = j.at("lambda").get<double>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  const auto& mats = j.at("A");
  if (static_cast<int>(mats.size()) != m) throw InvalidInputError("qip json: wrong #matrices");
  inst.a_ops.reserve(m);
  for (const auto& mj : mats) {
    const auto flat = mj.get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != n * n)
      throw InvalidInputError("qip json: matrix size mismatch");
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int jx = 0; jx < n; ++jx) a(i, jx) = flat[static_cast<size_t>(i) * n + jx];
    inst.a_ops.push_back(std::move(a));
  }
  const auto b = j.at("b").get<std::vector<double>>();
  if (static_cast<int>(b.size()) != m) throw InvalidInputError("qip json: b size mismatch");
  inst.b = Eigen::Map<const Eigen::VectorXd>(b.data(), m);
  if (j.contains("x_truth")) {
    const auto xt = j.at("x_truth").get<std::vector<double>>();
    inst.x_truth = Eigen::Map<const Eigen::VectorXd>(xt.data(), xt.size());
  }
  return inst;
}

using AnyInstance = std::variant<PolytopeInstance, QipInstance>;

inline AnyInstance instance_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "polytope") return polytope_from_json(j);
  if (type == "qip") return qip_from_json(j);
  throw InvalidInputError("instance json: unknown type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Trace CSV and result JSON. Timing fields are zeroed in the deterministic
// artifacts by default; measured values go to a metadata sidecar.
// ---------------------------------------------------------------------------

enum class TimingPolicy { Zeroed, Real };

inline std::string trace_csv_header() {
  return "k,i_k,gamma_k,f,model_error,step_norm,step_norm_H,wall_ms";
}

inline std::string trace_to_csv(const std::vector<TraceRecord>& trace,
                                TimingPolicy timing = TimingPolicy::Zeroed) {
  std::string out = trace_csv_header() + "\n";
  for (const auto& r : trace) {
    out += std::to_string(r.k) + ',' + std::to_string(r.i_k) + ',' + fmt_double(r.gamma) + ',' +
           fmt_double(r.f) + ',' + fmt_double(r.model_error) + ',' + fmt_double(r.step_norm) +
           ',' + fmt_double(r.step_norm_H) + ',' +
           fmt_double(timing == TimingPolicy::Real ? r.wall_ms : 0.0) + '\n';
  }
  return out;
}

inline std::vector<TraceRecord> trace_from_csv(const std::string& csv) {
  std::vector<TraceRecord> out;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != trace_csv_header())
    throw InvalidInputError("trace csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ls, tok, ',')) toks.push_back(tok);
    if (toks.size() != 8) throw InvalidInputError("trace csv: bad row");
    TraceRecord r;
    r.k = std::stoi(toks[0]);
    r.i_k = std::stoi(toks[1]);
    r.gamma = parse_double(toks[2]);
    r.f = parse_double(toks[3]);
    r.model_error = parse_double(toks[4]);
    r.step_norm = parse_double(toks[5]);
    r.step_norm_H = parse_double(toks[6]);
    r.wall_ms = parse_double(toks[7]);
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json result_to_json(const SolveResult& res,
                                     TimingPolicy timing = TimingPolicy::Zeroed) {
  nlohmann::json j;
  j["f_final"] = res.f_final;
  j["outer_iterations"] = res.outer_iterations;
  j["total_inner_trials"] = res.total_inner_trials;
  j["termination_reason"] = to_string(res.reason);
  j["x_final"] = std::vector<double>(res.x_final.data(), res.x_final.data() + res.x_final.size());
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& r : res.trace) {
    nlohmann::json rj;
    rj["k"] = r.k;
    rj["i_k"] = r.i_k;
    rj["gamma0"] = r.gamma0;
    rj["gamma"] = r.gamma;
    rj["f"] = r.f;
    rj["model_error"] = r.model_error;
    rj["step_norm"] = r.step_norm;
    rj["step_norm_H"] = r.step_norm_H;
    rj["wall_ms"] = timing == TimingPolicy::Real ? r.wall_ms : 0.0;
    tr.push_back(std::move(rj));
  }
  j["trace"] = std::move(tr);
  return j;
}

inline SolveResult result_from_json(const nlohmann::json& j) {
  SolveResult res;
  res.f_final = j.at("f_final").get<double>();
  res.outer_iterations = j.at("outer_iterations").get<int>();
  res.total_inner_trials = j.at("total_inner_trials").get<long>();
  const std::string reason = j.at("termination_reason").get<std::string>();
  res.reason = reason == "tolerance_met"   ? TerminationReason::ToleranceMet
               : reason == "inner_failure" ? TerminationReason::InnerFailure
                                           : TerminationReason::MaxOuter;
  const auto xf = j.at("x_final").get<std::vector<double>>();
  res.x_final = Eigen::Map<const Eigen::VectorXd>(xf.data(), xf.size());
  for (const auto& rj : j.at("trace")) {
    TraceRecord r;
    r.k = rj.at("k").get<int>();
    r.i_k = rj.at("i_k").get<int>();
    r.gamma0 = rj.at("gamma0").get<double>();
    r.gamma = rj.at("gamma").get<double>();
    r.f = rj.at("f").get<double>();
    r.model_error = rj.at("model_error").get<double>();
    r.step_norm = rj.at("step_norm").get<double>();
    r.step_norm_H = rj.at("step_norm_H").get<double>();
    r.wall_ms = rj.at("wall_ms").get<double>();
    res.trace.push_back(r);
  }
  return res;
}

// Measured timings and timestamps live here, never in the primary artifacts.
inline nlohmann::json timing_sidecar(const SolveResult& res) {
  nlohmann::json j;
  double total = 0;
  std::vector<double> per;
  per.reserve(res.trace.size());
  for (const auto& r : res.trace) {
    total += r.wall_ms;
    per.push_back(r.wall_ms);
  }
  j["wall_ms_total"] = total;
  j["wall_ms_per_iteration"] = std::move(per);
  return j;
}

}  // namespace modelprox
