#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "modelprox/model.hpp"
#include "modelprox/problems.hpp"
#include "support/oracles.hpp"

using namespace modelprox;
using Catch::Approx;

namespace {

QipInstance one_dim_qip(double lambda = 0.0) {
  QipInstance inst;
  inst.a_ops = {Eigen::MatrixXd::Identity(1, 1)};
  inst.b = Eigen::VectorXd::Ones(1);
  inst.lambda = lambda;
  return inst;
}

Objective qip_objective(const QipInstance& inst) {
  return Objective{inst.n(), [&inst](const Eigen::VectorXd& x) { return qip_f(inst, x); }};
}

}  // namespace

TEST_CASE("model_error basics", "[models]") {
  const QipInstance inst = one_dim_qip();
  SECTION("zero at the center for a center-consistent family") {
    Eigen::VectorXd xb(1);
    xb << 2.0;
    const auto model = qip_model(inst, xb, QipModelFamily::M1);
    const auto s = model_error(qip_objective(inst), model, xb);
    CHECK(s.radius == 0.0);
    CHECK(s.error == 0.0);
  }
  SECTION("hand value on the 1-D instance") {
    Eigen::VectorXd xb(1), x(1);
    xb << 2.0;
    x << 3.0;
    const auto model = qip_model(inst, xb, QipModelFamily::M1);
    // f(3) = (9-1)^2/2 = 32, model(3) = 4.5 + 6*(3-2) = 10.5
    CHECK(model.eval(x) == Approx(10.5));
    const auto s = model_error(qip_objective(inst), model, x);
    CHECK(s.error == Approx(21.5));
    CHECK(s.radius == Approx(1.0));
  }
  SECTION("softplus model keeps a positive gap at the center of the hinge objective") {
    PolytopeInstance pinst;
    pinst.a = Eigen::MatrixXd::Ones(1, 1);
    pinst.b = Eigen::VectorXd::Zero(1);
    pinst.p = 2.0;
    pinst.c = 2.0;
    Eigen::VectorXd xb(1);
    xb << 0.0;
    const auto model = polytope_model(pinst, xb);
    const Objective hinge{1, [&](const Eigen::VectorXd& x) { return polytope_f(pinst, x); }};
    const auto s = model_error(hinge, model, xb);
    const double phi0 = 0.5 * std::log(2.0);  // phi_2(0)
    CHECK(s.error == Approx(phi0 * phi0));    // f(0) = 0
    CHECK(s.error > 0);
  }
  SECTION("out of domain") {
    const Objective obj{1, [](const Eigen::VectorXd&) {
                          return std::numeric_limits<double>::infinity();
                        }};
    Eigen::VectorXd xb(1);
    xb << 2.0;
    const auto model = qip_model(inst, xb, QipModelFamily::M1);
    CHECK_THROWS_AS(model_error(obj, model, xb), OutOfDomainError);
  }
}

TEST_CASE("growth_fit", "[models]") {
  SECTION("synthetic quadratic") {
    std::vector<ModelErrorSample> s;
    for (double r : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) s.push_back({r, r * r});
    const auto fit = growth_fit(s);
    CHECK(fit.exponent == Approx(2.0).margin(1e-6));
    CHECK(fit.c == Approx(1.0).margin(1e-6));
  }
  SECTION("synthetic linear with constant") {
    std::vector<ModelErrorSample> s;
    for (double r : {2e-1, 1e-1, 5e-2, 2e-2, 1e-2}) s.push_back({r, 3.0 * r});
    const auto fit = growth_fit(s);
    CHECK(fit.exponent == Approx(1.0).margin(1e-6));
    CHECK(fit.c == Approx(3.0).margin(1e-6));
  }
  SECTION("zero-error samples are dropped") {
    std::vector<ModelErrorSample> s{{1e-1, 0.0}, {5e-2, 0.0}, {1e-2, 1e-4}};
    CHECK_THROWS_AS(growth_fit(s), InsufficientDataError);
  }
  SECTION("local model error exponents via brute-force sampling") {
    const QipInstance inst = gen_qip(8, 40, 1e-2, 99);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd center(8);
    for (int i = 0; i < 8; ++i) center[i] = 0.3 * gauss(rng);
    const Objective obj = qip_objective(inst);

    auto sample = [&](QipModelFamily fam) {
      const auto model = qip_model(inst, center, fam);
      std::vector<ModelErrorSample> samples;
      for (int t = 0; t < 40; ++t) {
        Eigen::VectorXd dir(8);
        for (int i = 0; i < 8; ++i) dir[i] = gauss(rng);
        dir.normalize();
        const double r = std::pow(10.0, -1.0 - 3.0 * (t % 10) / 9.0);
        samples.push_back(model_error(obj, model, center + r * dir));
      }
      return growth_fit(samples);
    };
    // full-gradient linearization: locally Lipschitz gradient gives O(r^2)
    CHECK(sample(QipModelFamily::AdditiveComposite).exponent >= 1.5);
    // the per-term linearization as printed carries half the gradient, so its
    // local error has a linear term
    CHECK(sample(QipModelFamily::M1).exponent == Approx(1.0).margin(0.2));
  }
}

TEST_CASE("h2_diagnostic", "[models]") {
  SECTION("exact model gives L = 0") {
    // affine objective; its additive-composite model is the function itself
    Eigen::VectorXd g0(2);
    g0 << 1.0, -2.0;
    const Objective obj{2, [g0](const Eigen::VectorXd& x) { return g0.dot(x); }};
    const ModelFamily fam = [g0](const Eigen::VectorXd& c) {
      return additive_composite_model([g0](const Eigen::VectorXd& x) { return g0.dot(x); },
                                      [g0](const Eigen::VectorXd&) { return g0; }, 0.0, c);
    };
    std::vector<Eigen::VectorXd> probes{Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(-0.2, 0.9)};
    CHECK(h2_diagnostic(obj, fam, Eigen::Vector2d(0, 0), probes) < 1e-8);
  }
  SECTION("1-D quadratic with affine model gives L = 1") {
    const Objective obj{1, [](const Eigen::VectorXd& x) { return 0.5 * x[0] * x[0]; }};
    const ModelFamily fam = [](const Eigen::VectorXd& c) {
      return additive_composite_model(
          [](const Eigen::VectorXd& x) { return 0.5 * x[0] * x[0]; },
          [](const Eigen::VectorXd& x) { return x; }, 0.0, c);
    };
    Eigen::VectorXd center(1), probe(1);
    center << 0.7;
    probe << 1.3;
    const double l = h2_diagnostic(obj, fam, center, {probe});
    CHECK(l == Approx(1.0).margin(1e-5));
  }
  SECTION("stable across probe radii for the QIP model") {
    const QipInstance inst = gen_qip(6, 30, 1e-3, 5);
    const Objective obj = qip_objective(inst);
    const ModelFamily fam = [&inst](const Eigen::VectorXd& c) {
      return qip_model(inst, c, QipModelFamily::M1);
    };
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd center(6);
    for (int i = 0; i < 6; ++i) center[i] = 0.2 * gauss(rng);
    auto probes_at = [&](double radius) {
      std::vector<Eigen::VectorXd> probes;
      for (int t = 0; t < 6; ++t) {
        Eigen::VectorXd dir(6);
        for (int i = 0; i < 6; ++i) dir[i] = gauss(rng);
        dir.normalize();
        probes.push_back(center + radius * dir);
      }
      return probes;
    };
    const double l1 = h2_diagnostic(obj, fam, center, probes_at(0.1));
    const double l2 = h2_diagnostic(obj, fam, center, probes_at(0.05));
    REQUIRE(std::isfinite(l1));
    REQUIRE(l1 > 0);
    CHECK(l1 / l2 < 2.0);
    CHECK(l2 / l1 < 2.0);
  }
  SECTION("probes at the center are skipped") {
    const QipInstance inst = one_dim_qip();
    const Objective obj = qip_objective(inst);
    const ModelFamily fam = [&inst](const Eigen::VectorXd& c) {
      return qip_model(inst, c, QipModelFamily::M1);
    };
    Eigen::VectorXd center(1);
    center << 1.0;
    CHECK_THROWS_AS(h2_diagnostic(obj, fam, center, {center}), InsufficientDataError);
  }
}

TEST_CASE("payload evaluation matches the direct model formula", "[models][property]") {
  const QipInstance inst = gen_qip(7, 35, 1e-2, 17);
  std::mt19937_64 rng(29);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd center(7);
  for (int i = 0; i < 7; ++i) center[i] = 0.3 * gauss(rng);

  for (auto fam : {QipModelFamily::M1, QipModelFamily::M2, QipModelFamily::M3,
                   QipModelFamily::AdditiveComposite}) {
    const auto model = qip_model(inst, center, fam);
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd x(7);
      for (int i = 0; i < 7; ++i) x[i] = gauss(rng);
      const double direct = model.eval(x);
      const double via_payload = model.payload().value(x);
      REQUIRE(via_payload == Approx(direct).epsilon(1e-10));
    }
  }
  // polytope model as well
  const PolytopeInstance pinst = gen_polytope(6, 12, 3.0, 2.0, 3);
  const auto pm = polytope_model(pinst, Eigen::VectorXd::Ones(6));
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x[i] = gauss(rng);
    REQUIRE(pm.payload().value(x) == Approx(pm.eval(x)).epsilon(1e-10));
  }
}

TEST_CASE("M2 minus M1 is exactly the unit quadratic", "[models][property]") {
  const QipInstance inst = gen_qip(5, 20, 1e-3, 21);
  std::mt19937_64 rng(37);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd center(5);
  for (int i = 0; i < 5; ++i) center[i] = gauss(rng);
  const auto m1 = qip_model(inst, center, QipModelFamily::M1);
  const auto m2 = qip_model(inst, center, QipModelFamily::M2);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = gauss(rng);
    const double diff = m2.eval(x) - m1.eval(x);
    const double expect = 0.5 * (x - center).squaredNorm();
    REQUIRE(diff == Approx(expect).margin(1e-10 * std::max(1.0, expect)));
  }
}

TEST_CASE("center consistency of the model families", "[models]") {
  const QipInstance inst = gen_qip(9, 45, 1e-2, 33);
  const Objective obj = qip_objective(inst);
  std::mt19937_64 rng(43);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd c(9);
    for (int i = 0; i < 9; ++i) c[i] = gauss(rng);
    const double fc = obj.eval(c);
    for (auto fam : {QipModelFamily::M1, QipModelFamily::M2, QipModelFamily::M3,
                     QipModelFamily::AdditiveComposite}) {
      const auto model = qip_model(inst, c, fam);
      REQUIRE(std::abs(model.value_at_center() - fc) <= 1e-12 * std::max(1.0, std::abs(fc)));
    }
  }
  // the polytope-softplus model is exempt: its center value sits strictly
  // above the hinge objective
  const PolytopeInstance pinst = gen_polytope(8, 16, 2.0, 2.0, 9);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
  const auto pm = polytope_model(pinst, ones);
  CHECK(pm.value_at_center() > polytope_f(pinst, ones));
}
