#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "modelprox/errors.hpp"
#include "modelprox/model.hpp"
#include "modelprox/solver.hpp"

namespace modelprox {

namespace detail {

// log(1 + e^z) without overflow
inline double softplus(double z) {
  return z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// e^z / (1 + e^z) without overflow
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Polytope feasibility: find x with <a_i, x> <= b_i by minimizing hinge powers.
// ---------------------------------------------------------------------------

struct PolytopeInstance {
  Eigen::MatrixXd a;  // m x n, rows a_i
  Eigen::VectorXd b;  // m
  double p = 2.0;
  double c = 2.0;     // softplus sharpness
  std::uint64_t seed = 0;
  int n() const { return static_cast<int>(a.cols()); }
  int m() const { return static_cast<int>(a.rows()); }
};

inline PolytopeInstance gen_polytope(int n, int m, double p, double c, std::uint64_t seed) {
  if (n < 1 || m < 1) throw InvalidInputError("gen_polytope: n, m >= 1 required");
  if (!(p >= 2)) throw InvalidInputError("gen_polytope: p >= 2 required");
  if (!(c > 0)) throw InvalidInputError("gen_polytope: c > 0 required");
  PolytopeInstance inst;
  inst.p = p;
  inst.c = c;
  inst.seed = seed;
  inst.a.resize(m, n);
  inst.b.resize(m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) inst.a(i, j) = unit(rng);
  for (int i = 0; i < m; ++i) inst.b[i] = unit(rng);
  return inst;
}

// Hinge objective f(x) = sum (<a_i,x> - b_i)_+^p. Zero exactly on the polytope.
inline double polytope_f(const PolytopeInstance& inst, const Eigen::VectorXd& x) {
  const Eigen::VectorXd t = inst.a * x - inst.b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if (t[i] > 0) s += std::pow(t[i], inst.p);
  return s;
}

// sum (<a_i,x> - b_i)_+, the residual feasibility gap used for termination.
inline double polytope_feasibility_gap(const PolytopeInstance& inst, const Eigen::VectorXd& x) {
  const Eigen::VectorXd t = inst.a * x - inst.b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if (t[i] > 0) s += t[i];
  return s;
}

// Smoothed surrogate F(x) = sum phi_c^p(<a_i,x> - b_i), phi_c(t) = log(1+e^{ct})/c.
// This is the function whose exact first-order Taylor expansion the softplus
// model is, and the objective the solver minimizes for this suite.
inline double polytope_smooth_objective(const PolytopeInstance& inst, const Eigen::VectorXd& x) {
  const Eigen::VectorXd t = inst.a * x - inst.b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    s += std::pow(detail::softplus(inst.c * t[i]) / inst.c, inst.p);
  return s;
}

// grad of F at xbar: c^{1-p} p sum_i sigmoid(c t_i) log^{p-1}(1+e^{c t_i}) a_i.
inline Eigen::VectorXd polytope_model_grad(const PolytopeInstance& inst,
                                           const Eigen::VectorXd& xbar) {
  const Eigen::VectorXd t = inst.a * xbar - inst.b;
  Eigen::VectorXd coef(t.size());
  const double pref = std::pow(inst.c, 1.0 - inst.p) * inst.p;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double z = inst.c * t[i];
    coef[i] = pref * detail::sigmoid(z) * std::pow(detail::softplus(z), inst.p - 1.0);
  }
  return inst.a.transpose() * coef;
}

// Hessian of F at xbar: sum psi''(t_i) a_i a_i^T with
// psi''(t) = c^{2-p} p sigmoid(ct) [ (p-1) s^{p-2} sigmoid(ct) + s^{p-1}(1 - sigmoid(ct)) ],
// s = log(1+e^{ct}). Validated against finite differences in the test suite.
inline SymMatrix polytope_smooth_hessian(const PolytopeInstance& inst,
                                         const Eigen::VectorXd& xbar) {
  const Eigen::VectorXd t = inst.a * xbar - inst.b;
  Eigen::VectorXd coef(t.size());
  const double pref = std::pow(inst.c, 2.0 - inst.p) * inst.p;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double z = inst.c * t[i];
    const double s = detail::softplus(z);
    const double sg = detail::sigmoid(z);
    coef[i] = pref * sg * ((inst.p - 1.0) * std::pow(s, inst.p - 2.0) * sg +
                           std::pow(s, inst.p - 1.0) * (1.0 - sg));
  }
  return SymMatrix(inst.a.transpose() * coef.asDiagonal() * inst.a);
}

// First-order Taylor model of F anchored at xbar (affine payload).
inline ModelState polytope_model(const PolytopeInstance& inst, const Eigen::VectorXd& xbar) {
  const double c0 = polytope_smooth_objective(inst, xbar);
  Eigen::VectorXd g = polytope_model_grad(inst, xbar);
  auto payload = SubproblemPayload::affine(xbar, c0, g);
  auto direct = [c0, g, xbar](const Eigen::VectorXd& x) { return c0 + g.dot(x - xbar); };
  return ModelState(std::move(direct), std::move(payload));
}

// ---------------------------------------------------------------------------
// (Sparse) quadratic inverse problems: x^T A_i x ~ b_i with PSD sampling
// matrices, data-fit (1/2m) sum (x^T A_i x - b_i)^2 plus lambda ||x||_1.
// ---------------------------------------------------------------------------

struct QipInstance {
  std::vector<Eigen::MatrixXd> a_ops;  // m symmetric PSD n x n
  Eigen::VectorXd b;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> x_truth;
  int n() const { return a_ops.empty() ? 0 : static_cast<int>(a_ops.front().rows()); }
  int m() const { return static_cast<int>(a_ops.size()); }
};

// A_i = sum of `rank` Gaussian outer products; ground truth round(n/10)-sparse
// unit vector; b_i = x'A_i x (+ optional Gaussian noise).
inline QipInstance gen_qip(int n, int m, double lambda, std::uint64_t seed, int rank = 1,
                           double noise_sd = 0.0) {
  if (n < 1 || m < 1) throw InvalidInputError("gen_qip: n, m >= 1 required");
  if (lambda < 0) throw InvalidInputError("gen_qip: lambda >= 0 required");
  if (rank < 1) throw InvalidInputError("gen_qip: rank >= 1 required");
  if (noise_sd < 0) throw InvalidInputError("gen_qip: noise_sd >= 0 required");
  QipInstance inst;
  inst.lambda = lambda;
  inst.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  inst.a_ops.reserve(m);
  Eigen::VectorXd u(n);
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < rank; ++r) {
      for (int j = 0; j < n; ++j) u[j] = gauss(rng);
      a.noalias() += u * u.transpose();
    }
    inst.a_ops.push_back(std::move(a));
  }

  const int k = std::max<long>(1, std::lround(n / 10.0));
  std::vector<int> idx(n);
  for (int j = 0; j < n; ++j) idx[j] = j;
  for (int j = 0; j < k; ++j) {
    std::uniform_int_distribution<int> pick(j, n - 1);
    std::swap(idx[j], idx[pick(rng)]);
  }
  Eigen::VectorXd xt = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < k; ++j) xt[idx[j]] = gauss(rng);
  const double norm = xt.norm();
  if (norm > 0)
    xt /= norm;
  else
    xt[idx[0]] = 1.0;
  inst.x_truth = xt;

  inst.b.resize(m);
  for (int i = 0; i < m; ++i) inst.b[i] = xt.dot(inst.a_ops[i] * xt);
  if (noise_sd > 0)
    for (int i = 0; i < m; ++i) inst.b[i] += noise_sd * gauss(rng);
  return inst;
}

inline Eigen::VectorXd qip_residuals(const QipInstance& inst, const Eigen::VectorXd& x) {
  Eigen::VectorXd r(inst.m());
  for (int i = 0; i < inst.m(); ++i) r[i] = x.dot(inst.a_ops[i] * x) - inst.b[i];
  return r;
}

// data-fit term (1/2m) sum r_i^2
inline double qip_smooth(const QipInstance& inst, const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = qip_residuals(inst, x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += r[i] * r[i];
  return s * (0.5 / inst.m());
}

inline double qip_f(const QipInstance& inst, const Eigen::VectorXd& x) {
  double v = qip_smooth(inst, x);
  v += inst.lambda * detail::l1_norm(x);
  return v;
}

// grad of the data-fit term: (2/m) sum r_i A_i x
inline Eigen::VectorXd qip_smooth_grad(const QipInstance& inst, const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (int i = 0; i < inst.m(); ++i) {
    const Eigen::VectorXd ax = inst.a_ops[i] * x;
    g += (x.dot(ax) - inst.b[i]) * ax;
  }
  return g * (2.0 / inst.m());
}

// Hessian of the data-fit term: (2/m) sum [ r_i A_i + 2 (A_i x)(A_i x)^T ]
inline SymMatrix qip_smooth_hessian(const QipInstance& inst, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < inst.m(); ++i) {
    const Eigen::VectorXd ax = inst.a_ops[i] * x;
    h += (x.dot(ax) - inst.b[i]) * inst.a_ops[i];
    h.noalias() += 2.0 * ax * ax.transpose();
  }
  return SymMatrix(h * (2.0 / inst.m()));
}

enum class QipModelFamily { M1, M2, M3, AdditiveComposite };

// The model families of the quadratic-inverse experiments. M1 linearizes
// per-term exactly as printed (its linear coefficient is half the gradient
// of the data-fit term; kept verbatim). M2 adds the unit quadratic. M3
// keeps per-term absolute values. AdditiveComposite is the full-gradient
// linearization of the data-fit term.
inline ModelState qip_model(const QipInstance& inst, const Eigen::VectorXd& xbar,
                            QipModelFamily family) {
  const int m = inst.m();
  const double lambda = inst.lambda;
  if (family == QipModelFamily::AdditiveComposite) {
    const Eigen::VectorXd g = qip_smooth_grad(inst, xbar);
    const double h0 = qip_smooth(inst, xbar);
    auto payload = lambda > 0 ? SubproblemPayload::affine_l1(xbar, h0, g, lambda)
                              : SubproblemPayload::affine(xbar, h0, g);
    auto direct = [h0, g, xbar, lambda](const Eigen::VectorXd& x) {
      double v = h0 + g.dot(x - xbar);
      v += lambda * detail::l1_norm(x);
      return v;
    };
    return ModelState(std::move(direct), std::move(payload));
  }

  const Eigen::VectorXd rbar = qip_residuals(inst, xbar);
  Eigen::MatrixXd axb(m, xbar.size());  // rows A_i xbar
  for (int i = 0; i < m; ++i) axb.row(i) = (inst.a_ops[i] * xbar).transpose();

  if (family == QipModelFamily::M3) {
    Eigen::VectorXd u = rbar.cwiseProduct(rbar);
    Eigen::MatrixXd v = 2.0 * rbar.asDiagonal() * axb;
    auto payload = SubproblemPayload::abs_affine_l1(xbar, std::move(u), std::move(v),
                                                    0.5 / m, lambda);
    auto direct = [rbar, axb, xbar, lambda, m](const Eigen::VectorXd& x) {
      const Eigen::VectorXd d = x - xbar;
      double s = 0.0;
      for (Eigen::Index i = 0; i < rbar.size(); ++i)
        s += std::abs(rbar[i] * rbar[i] + 2.0 * rbar[i] * axb.row(i).dot(d));
      double v = s * (0.5 / m);
      v += lambda * detail::l1_norm(x);
      return v;
    };
    return ModelState(std::move(direct), std::move(payload));
  }

  // M1 / M2
  double s0 = 0.0;
  for (Eigen::Index i = 0; i < rbar.size(); ++i) s0 += rbar[i] * rbar[i];
  const double c0 = s0 * (0.5 / m);
  Eigen::VectorXd g = (axb.transpose() * rbar) / m;
  const double rho2 = family == QipModelFamily::M2 ? 1.0 : 0.0;
  SubproblemPayload payload =
      family == QipModelFamily::M2
          ? SubproblemPayload::affine_quad_l1(xbar, c0, g, rho2, lambda)
          : (lambda > 0 ? SubproblemPayload::affine_l1(xbar, c0, g, lambda)
                        : SubproblemPayload::affine(xbar, c0, g));
  auto direct = [rbar, axb, xbar, lambda, m, rho2](const Eigen::VectorXd& x) {
    const Eigen::VectorXd d = x - xbar;
    double s = 0.0;
    for (Eigen::Index i = 0; i < rbar.size(); ++i)
      s += rbar[i] * rbar[i] + 2.0 * rbar[i] * axb.row(i).dot(d);
    double v = s * (0.5 / m);
    if (rho2 > 0) v += 0.5 * rho2 * d.squaredNorm();
    v += lambda * detail::l1_norm(x);
    return v;
  };
  return ModelState(std::move(direct), std::move(payload));
}

// Count of entries with |x_i| > threshold.
inline int nonzero_count(const Eigen::VectorXd& x, double threshold) {
  if (!(threshold > 0)) throw InvalidInputError("nonzero_count: threshold must be > 0");
  int c = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > threshold) ++c;
  return c;
}

// ---------------------------------------------------------------------------
// Solver wiring
// ---------------------------------------------------------------------------

// The polytope suite runs Algorithm 1 on the smoothed objective F (the model
// is its exact first-order Taylor expansion) and stops on the hinge
// feasibility gap. The hinge objective itself is flat at zero slope near the
// boundary from inside, and the softplus model keeps a positive offset from
// it, so pairing the acceptance test with the hinge objective stalls; see
// the model diagnostics for that pairing.
inline ProblemFunctions make_polytope_problem(std::shared_ptr<const PolytopeInstance> inst) {
  ProblemFunctions prob;
  prob.objective.dim = inst->n();
  prob.objective.eval = [inst](const Eigen::VectorXd& x) {
    return polytope_smooth_objective(*inst, x);
  };
  prob.model = [inst](const Eigen::VectorXd& xbar) { return polytope_model(*inst, xbar); };
  prob.smooth_hessian = [inst](const Eigen::VectorXd& x) {
    return polytope_smooth_hessian(*inst, x);
  };
  prob.initial_gradient = [inst](const Eigen::VectorXd& x) {
    return polytope_model_grad(*inst, x);
  };
  prob.termination = TerminationRule::PolytopeFeasibility;
  prob.termination_metric = [inst](const Eigen::VectorXd& x) {
    return polytope_feasibility_gap(*inst, x);
  };
  return prob;
}

inline ProblemFunctions make_qip_problem(std::shared_ptr<const QipInstance> inst,
                                         QipModelFamily family) {
  ProblemFunctions prob;
  prob.objective.dim = inst->n();
  prob.objective.eval = [inst](const Eigen::VectorXd& x) { return qip_f(*inst, x); };
  prob.model = [inst, family](const Eigen::VectorXd& xbar) {
    return qip_model(*inst, xbar, family);
  };
  prob.smooth_hessian = [inst](const Eigen::VectorXd& x) { return qip_smooth_hessian(*inst, x); };
  prob.initial_gradient = [inst](const Eigen::VectorXd& x) { return qip_smooth_grad(*inst, x); };
  prob.termination = family == QipModelFamily::M3 ? TerminationRule::RelativeDecreaseM3
                                                  : TerminationRule::RelativeDecrease;
  return prob;
}

// Paper defaults for the initial proximal weight: the first iteration draws
// from the gradient norm (inf-norm for M1, 2-norm otherwise), later
// iterations use 2; the polytope suite uses gamma_min throughout.
inline Gamma0Policy default_gamma0_qip(QipModelFamily family) {
  Gamma0Policy g;
  g.kind = family == QipModelFamily::M1 ? Gamma0Policy::Kind::GradNormInfThenConstant
                                        : Gamma0Policy::Kind::GradNorm2ThenConstant;
  g.constant = 2.0;
  return g;
}

inline Gamma0Policy default_gamma0_polytope(double gamma_min) {
  Gamma0Policy g;
  g.kind = Gamma0Policy::Kind::Constant;
  g.constant = gamma_min;
  return g;
}

}  // namespace modelprox
