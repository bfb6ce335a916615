#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "modelprox/errors.hpp"
#include "modelprox/subproblem.hpp"

namespace modelprox {

// Extended-real objective; eval may return +inf outside the domain.
struct Objective {
  int dim = 0;
  std::function<double(const Eigen::VectorXd&)> eval;
};

// A model function anchored at a center: a direct evaluation closure (the
// model formula as written) plus the structured payload the subsolvers
// consume. The two routes must agree; tests assert it.
class ModelState {
 public:
  ModelState(std::function<double(const Eigen::VectorXd&)> direct_eval, SubproblemPayload payload)
      : eval_(std::move(direct_eval)), payload_(std::move(payload)) {
    value_at_center_ = eval_(payload_.anchor);
  }

  const Eigen::VectorXd& center() const { return payload_.anchor; }
  double value_at_center() const { return value_at_center_; }
  double eval(const Eigen::VectorXd& x) const { return eval_(x); }
  const SubproblemPayload& payload() const { return payload_; }
  Eigen::VectorXd linear_coefficient() const { return payload_.linear_coefficient(); }

 private:
  std::function<double(const Eigen::VectorXd&)> eval_;
  SubproblemPayload payload_;
  double value_at_center_ = 0.0;
};

using ModelFamily = std::function<ModelState(const Eigen::VectorXd&)>;

struct ModelErrorSample {
  double radius = 0.0;  // ||x - center||_2
  double error = 0.0;   // |f(x) - f_center(x)|
};

inline ModelErrorSample model_error(const Objective& obj, const ModelState& model,
                                    const Eigen::VectorXd& x) {
  const double fx = obj.eval(x);
  if (!std::isfinite(fx)) throw OutOfDomainError("model_error: f(x) is not finite");
  ModelErrorSample s;
  s.radius = (x - model.center()).norm();
  s.error = std::abs(fx - model.eval(x));
  return s;
}

struct GrowthFit {
  double c = 0.0;
  double exponent = 0.0;
};

// Least-squares fit of log(error) against log(radius), restricted to the
// lower half of the radii (the model approximation principle is local).
// Zero-error samples are dropped before fitting.
inline GrowthFit growth_fit(const std::vector<ModelErrorSample>& samples) {
  std::vector<ModelErrorSample> usable;
  for (const auto& s : samples)
    if (s.error > 0 && s.radius > 0) usable.push_back(s);
  if (usable.size() < 3)
    throw InsufficientDataError("growth_fit: need at least 3 usable samples");
  std::vector<double> radii;
  radii.reserve(usable.size());
  for (const auto& s : usable) radii.push_back(s.radius);
  std::sort(radii.begin(), radii.end());
  const double median = radii[(radii.size() - 1) / 2];

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& s : usable) {
    if (s.radius > median) continue;
    const double lx = std::log(s.radius), ly = std::log(s.error);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  const double denom = cnt * sxx - sx * sx;
  if (cnt < 2 || std::abs(denom) < 1e-300)
    throw InsufficientDataError("growth_fit: degenerate radii");
  GrowthFit fit;
  fit.exponent = (cnt * sxy - sx * sy) / denom;
  fit.c = std::exp((sy - fit.exponent * sx) / cnt);
  return fit;
}

// Estimates the constant L with ||grad g_center(x)|| <= L ||x - center||,
// g_center = f_center - f, via central finite differences at the probes.
inline double h2_diagnostic(const Objective& obj, const ModelFamily& family,
                            const Eigen::VectorXd& center,
                            const std::vector<Eigen::VectorXd>& probes) {
  const ModelState model = family(center);
  const auto g = [&](const Eigen::VectorXd& z) { return model.eval(z) - obj.eval(z); };
  double l_max = -1.0;
  for (const auto& probe : probes) {
    const double dist = (probe - center).norm();
    if (dist == 0.0) continue;
    const double h = 1e-6 * (1.0 + probe.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd grad(probe.size());
    Eigen::VectorXd zp = probe, zm = probe;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
      zp[i] = probe[i] + h;
      zm[i] = probe[i] - h;
      grad[i] = (g(zp) - g(zm)) / (2.0 * h);
      zp[i] = probe[i];
      zm[i] = probe[i];
    }
    l_max = std::max(l_max, grad.norm() / dist);
  }
  if (l_max < 0) throw InsufficientDataError("h2_diagnostic: no usable probes");
  return l_max;
}

// Generic additive-composite construction: linearize the smooth part at the
// center and keep the l1 term:  h(c) + <grad h(c), x - c> + lambda*||x||_1.
inline ModelState additive_composite_model(
    const std::function<double(const Eigen::VectorXd&)>& smooth_value,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& smooth_grad, double l1_weight,
    const Eigen::VectorXd& center) {
  const double h0 = smooth_value(center);
  Eigen::VectorXd g = smooth_grad(center);
  auto payload = l1_weight > 0
                     ? SubproblemPayload::affine_l1(center, h0, g, l1_weight)
                     : SubproblemPayload::affine(center, h0, g);
  auto direct = [h0, g, center, l1_weight](const Eigen::VectorXd& x) {
    double v = h0 + g.dot(x - center);
    if (l1_weight > 0) v += l1_weight * detail::l1_norm(x);
    return v;
  };
  return ModelState(std::move(direct), std::move(payload));
}

}  // namespace modelprox
