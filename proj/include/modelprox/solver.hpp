#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modelprox/errors.hpp"
#include "modelprox/linalg.hpp"
#include "modelprox/model.hpp"
#include "modelprox/subproblem.hpp"

namespace modelprox {

enum class MetricKind { PsdHessian, BbIdentity, FixedIdentity };
enum class TerminationRule { PolytopeFeasibility, RelativeDecrease, RelativeDecreaseM3 };
enum class TerminationReason { ToleranceMet, MaxOuter, InnerFailure };

// Initial proximal weight per outer iteration. The gradient-norm kinds apply
// at k = 0 only and fall back to `constant` afterwards.
struct Gamma0Policy {
  enum class Kind { Constant, GradNormInfThenConstant, GradNorm2ThenConstant };
  Kind kind = Kind::Constant;
  double constant = 2.0;
};

struct SolverConfig {
  double tau = 2.0;
  double delta = 0.25;
  double mu = 0.5;
  double gamma_min = 1.0;
  double gamma_max = 1e10;
  MetricKind metric = MetricKind::PsdHessian;
  Gamma0Policy gamma0;
  double termination_tol = 1e-4;
  int max_outer = 2000;
  int max_inner = 80;
  double bb_fallback = 1.0;
  bool allow_inexact = false;
  SubsolverConfig subsolver;

  void validate() const {
    if (!(tau > 1)) throw InvalidInputError("config: tau must be > 1");
    if (!(delta > 0 && delta < 0.5)) throw InvalidInputError("config: delta must be in (0, 1/2)");
    if (!(mu > 0)) throw InvalidInputError("config: mu must be > 0");
    if (!(gamma_min > 0 && gamma_min <= gamma_max))
      throw InvalidInputError("config: need 0 < gamma_min <= gamma_max");
    if (max_outer < 1 || max_inner < 1)
      throw InvalidInputError("config: iteration caps must be >= 1");
    if (!(termination_tol > 0)) throw InvalidInputError("config: termination tol must be > 0");
    if (!(bb_fallback > 0)) throw InvalidInputError("config: bb fallback must be > 0");
  }
};

struct TraceRecord {
  int k = 0;
  int i_k = 0;
  double gamma0 = 0.0;   // gamma_k^0 drawn for this iteration
  double gamma = 0.0;    // accepted gamma_k = tau^{i_k+1} * gamma_k^0
  double f = 0.0;        // f(x^k), value before the step
  double model_error = 0.0;
  double step_norm = 0.0;
  double step_norm_H = 0.0;
  double wall_ms = 0.0;
};

struct SolveResult {
  Eigen::VectorXd x_final;
  std::vector<TraceRecord> trace;
  int outer_iterations = 0;
  long total_inner_trials = 0;
  TerminationReason reason = TerminationReason::MaxOuter;
  double f_final = 0.0;
};

// Non-finite objective value encountered after an accepted step; carries the
// last finite state.
struct SolveDiverged : Error {
  explicit SolveDiverged(SolveResult partial_result)
      : Error("solve diverged: non-finite objective value"), partial(std::move(partial_result)) {}
  SolveResult partial;
};

// A subproblem solver exhausted its iteration budget and allow_inexact is off.
struct SubsolverFailure : Error {
  SubsolverFailure(SolveResult partial_result, int k, int i, double residual)
      : Error("subproblem solver did not converge at outer " + std::to_string(k) + ", trial " +
              std::to_string(i) + " (residual " + std::to_string(residual) + ")"),
        partial(std::move(partial_result)),
        outer_k(k),
        inner_i(i) {}
  SolveResult partial;
  int outer_k;
  int inner_i;
};

// Everything the outer loop needs to know about a problem instance.
struct ProblemFunctions {
  Objective objective;   // the f that Algorithm 1 minimizes
  ModelFamily model;
  std::function<SymMatrix(const Eigen::VectorXd&)> smooth_hessian;    // PsdHessian metric
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> initial_gradient;  // gamma_0^0 policies
  TerminationRule termination = TerminationRule::RelativeDecrease;
  std::function<double(const Eigen::VectorXd&)> termination_metric;   // PolytopeFeasibility rule
};

// H(x) := P_{S+}(smooth Hessian at x) + mu*Id.
inline Metric metric_psd_hessian(const ProblemFunctions& prob, const Eigen::VectorXd& x,
                                 double mu) {
  if (!prob.smooth_hessian)
    throw InvalidInputError("metric_psd_hessian: problem supplies no smooth Hessian");
  return Metric::dense(psd_project_plus_mu(prob.smooth_hessian(x), mu));
}

// Barzilai-Borwein scaled identity: L = <s,y>/<s,s> with s the iterate step
// and y the difference of model linear coefficients, falling back to
// `fallback_l` when the curvature estimate is nonpositive or no prior
// iterate exists. Clamped to [mu, 1e12].
inline Metric metric_bb(const std::optional<Eigen::VectorXd>& prev_x,
                        const std::optional<Eigen::VectorXd>& prev_grad_anchor,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& grad_anchor,
                        double fallback_l, double mu) {
  double l = fallback_l;
  if (prev_x && prev_grad_anchor) {
    const Eigen::VectorXd s = x - *prev_x;
    const Eigen::VectorXd y = grad_anchor - *prev_grad_anchor;
    const double sy = s.dot(y);
    const double ss = s.squaredNorm();
    if (sy > 0 && ss > 0) l = sy / ss;
  }
  l = std::clamp(l, mu, 1e12);
  return Metric::scaled_identity(static_cast<int>(x.size()), l);
}

struct BacktrackResult {
  Eigen::VectorXd x_next;
  double gamma_k = 0.0;
  int i_k = 0;
  int trials = 0;         // i_k + 1
  double model_error = 0.0;
  double step_norm_H = 0.0;
};

// Inner loop of Algorithm 1: solve the proximal model subproblem with
// gamma_{k,i} = tau^{i+1} * gamma_k^0 until
//   |f(x^{k,i}) - f_{x^k}(x^{k,i})| <= delta * (gamma_{k,i}/2) ||x^{k,i}-x^k||_H^2.
// Returns nullopt when max_inner trials are exhausted. Subsolver state is
// warm-started across trials of the same iteration.
inline std::optional<BacktrackResult> backtrack_accept(const ProblemFunctions& prob,
                                                       const ModelState& model, const Metric& h,
                                                       double gamma0, const SolverConfig& cfg,
                                                       const SolveResult* partial_for_errors) {
  SubsolverWarm warm;
  for (int i = 0; i < cfg.max_inner; ++i) {
    const double gamma_i = std::pow(cfg.tau, static_cast<double>(i + 1)) * gamma0;
    SubproblemSolution sol = solve_subproblem(model.payload(), h, gamma_i, cfg.subsolver, &warm);
    if (!sol.converged && !cfg.allow_inexact) {
      SolveResult partial = partial_for_errors ? *partial_for_errors : SolveResult{};
      const int outer_k = static_cast<int>(partial.trace.size());
      throw SubsolverFailure(std::move(partial), outer_k, i, sol.optimality_residual);
    }
    const double fs = prob.objective.eval(sol.x);
    const double err = std::abs(fs - model.eval(sol.x));
    const double nh = h.norm(sol.x - model.center());
    const double rhs = cfg.delta * (gamma_i / 2.0) * nh * nh;
    if (err <= rhs) {
      BacktrackResult out;
      out.x_next = std::move(sol.x);
      out.gamma_k = gamma_i;
      out.i_k = i;
      out.trials = i + 1;
      out.model_error = err;
      out.step_norm_H = nh;
      return out;
    }
  }
  return std::nullopt;
}

// The configured stopping test, evaluated after an accepted step
// x_curr -> x_next. `model_at_curr` is the model anchored at x_curr.
inline bool terminate(TerminationRule rule, double tol,
                      const std::function<double(const Eigen::VectorXd&)>& termination_metric,
                      double f_curr, double f_next, const ModelState& model_at_curr,
                      const Eigen::VectorXd& x_next) {
  switch (rule) {
    case TerminationRule::PolytopeFeasibility:
      return termination_metric(x_next) <= tol;
    case TerminationRule::RelativeDecrease:
      return (f_curr - f_next) / std::max(1.0, f_next) <= tol;
    case TerminationRule::RelativeDecreaseM3: {
      if ((f_curr - f_next) / std::max(1.0, f_next) > tol) return false;
      const SubproblemPayload& p = model_at_curr.payload();
      if (p.shape != PayloadShape::AbsAffinePlusL1)
        throw InvalidInputError("terminate: M3 rule needs an abs payload");
      // printed criterion: the per-term sum carries no 1/(2m) weight
      const double s = (p.abs_offset + p.abs_linear * (x_next - p.anchor)).lpNorm<1>();
      return s <= tol;
    }
  }
  return false;
}

inline double gamma0_for_iteration(const ProblemFunctions& prob, const SolverConfig& cfg, int k,
                                   const Eigen::VectorXd& x0) {
  double g0 = cfg.gamma0.constant;
  if (k == 0 && cfg.gamma0.kind != Gamma0Policy::Kind::Constant) {
    if (!prob.initial_gradient)
      throw InvalidInputError("gamma0 policy needs an initial gradient");
    const Eigen::VectorXd g = prob.initial_gradient(x0);
    g0 = cfg.gamma0.kind == Gamma0Policy::Kind::GradNormInfThenConstant
             ? g.lpNorm<Eigen::Infinity>()
             : g.norm();
  }
  return std::clamp(g0, cfg.gamma_min, cfg.gamma_max);
}

// Algorithm 1: metric update, model subproblem with backtracking acceptance,
// trace emission, termination test.
inline SolveResult run(const ProblemFunctions& prob, const SolverConfig& cfg,
                       const Eigen::VectorXd& x0) {
  cfg.validate();
  if (!prob.objective.eval) throw InvalidInputError("run: objective not set");
  Eigen::VectorXd x = x0;
  double fx = prob.objective.eval(x);
  if (!std::isfinite(fx)) throw InvalidInputError("run: f(x0) is not finite");

  SolveResult res;
  res.x_final = x;
  res.f_final = fx;

  // rules that need no completed iteration may stop at x0
  if (prob.termination == TerminationRule::PolytopeFeasibility &&
      prob.termination_metric(x) <= cfg.termination_tol) {
    res.reason = TerminationReason::ToleranceMet;
    return res;
  }

  std::optional<Eigen::VectorXd> bb_x, bb_g;
  double bb_l = cfg.bb_fallback;
  res.reason = TerminationReason::MaxOuter;
  for (int k = 0; k < cfg.max_outer; ++k) {
    const auto t_start = std::chrono::steady_clock::now();
    const ModelState model = prob.model(x);
    const Eigen::VectorXd lin = model.linear_coefficient();

    Metric h = [&] {
      switch (cfg.metric) {
        case MetricKind::PsdHessian:
          return metric_psd_hessian(prob, x, cfg.mu);
        case MetricKind::BbIdentity:
          return metric_bb(bb_x, bb_g, x, lin, bb_l, cfg.mu);
        case MetricKind::FixedIdentity:
        default:
          return Metric::scaled_identity(static_cast<int>(x.size()), 1.0);
      }
    }();
    if (cfg.metric == MetricKind::BbIdentity) bb_l = h.scale();

    const double gamma0 = gamma0_for_iteration(prob, cfg, k, x0);
    auto bt = backtrack_accept(prob, model, h, gamma0, cfg, &res);
    if (!bt) {
      res.reason = TerminationReason::InnerFailure;
      break;
    }
    res.total_inner_trials += bt->trials;
    const double fn = prob.objective.eval(bt->x_next);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    if (!std::isfinite(fn)) {
      res.outer_iterations = static_cast<int>(res.trace.size());
      throw SolveDiverged(std::move(res));
    }
    TraceRecord rec;
    rec.k = k;
    rec.i_k = bt->i_k;
    rec.gamma0 = gamma0;
    rec.gamma = bt->gamma_k;
    rec.f = fx;
    rec.model_error = bt->model_error;
    rec.step_norm = (bt->x_next - x).norm();
    rec.step_norm_H = bt->step_norm_H;
    rec.wall_ms = wall_ms;
    res.trace.push_back(rec);

    const bool stop = terminate(prob.termination, cfg.termination_tol, prob.termination_metric,
                                fx, fn, model, bt->x_next);
    bb_x = x;
    bb_g = lin;
    x = std::move(bt->x_next);
    fx = fn;
    if (stop) {
      res.reason = TerminationReason::ToleranceMet;
      break;
    }
  }
  res.x_final = x;
  res.f_final = fx;
  res.outer_iterations = static_cast<int>(res.trace.size());
  return res;
}

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::ToleranceMet: return "tolerance_met";
    case TerminationReason::MaxOuter: return "max_outer";
    case TerminationReason::InnerFailure: return "inner_failure";
  }
  return "unknown";
}

}  // namespace modelprox
