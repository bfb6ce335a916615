#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "modelprox/linalg.hpp"

using namespace modelprox;
using Catch::Approx;

namespace {
Eigen::MatrixXd random_sym(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  return (a + a.transpose()) / 2.0;
}
}  // namespace

TEST_CASE("SymMatrix symmetrizes and validates", "[linalg]") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-13, 3.0;
  SymMatrix s(m);
  CHECK(s(0, 1) == s(1, 0));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, std::nan(""), 0.0, 1.0;
  CHECK_THROWS_AS(SymMatrix(bad), InvalidInputError);
  CHECK_THROWS_AS(SymMatrix(Eigen::MatrixXd(2, 3)), InvalidInputError);
}

TEST_CASE("sym_eig on known matrices", "[linalg]") {
  SECTION("identity") {
    const auto e = sym_eig(SymMatrix(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(e.values[0] == Approx(1.0));
    CHECK(e.values[1] == Approx(1.0));
    CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-10);
  }
  SECTION("diagonal") {
    Eigen::MatrixXd d = Eigen::Vector2d(3.0, -1.0).asDiagonal();
    const auto e = sym_eig(SymMatrix(d));
    CHECK(e.values[0] == Approx(3.0));
    CHECK(e.values[1] == Approx(-1.0));
    CHECK(std::abs(e.vectors(0, 0)) == Approx(1.0));
    CHECK(std::abs(e.vectors(1, 1)) == Approx(1.0));
  }
  SECTION("off-diagonal flip") {
    Eigen::MatrixXd m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    const auto e = sym_eig(SymMatrix(m));
    CHECK(e.values[0] == Approx(1.0));
    CHECK(e.values[1] == Approx(-1.0));
    const double s = 1.0 / std::sqrt(2.0);
    // eigenvectors up to sign
    CHECK(std::abs(std::abs(e.vectors(0, 0)) - s) < 1e-12);
    CHECK(std::abs(std::abs(e.vectors(1, 0)) - s) < 1e-12);
    CHECK(e.vectors(0, 0) * e.vectors(1, 0) > 0);   // (1,1) direction
    CHECK(e.vectors(0, 1) * e.vectors(1, 1) < 0);   // (1,-1) direction
  }
}

TEST_CASE("sym_eig reconstruction on random matrices", "[linalg][property]") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 20);
  for (int t = 0; t < 50; ++t) {
    const int n = dim(rng);
    const Eigen::MatrixXd a = random_sym(n, rng);
    const auto e = sym_eig(SymMatrix(a));
    const Eigen::MatrixXd rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    REQUIRE((rec - a).norm() <= 1e-9 * std::max(1.0, a.norm()));
    REQUIRE((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(n, n)).norm() <= 1e-10);
    for (int i = 0; i + 1 < n; ++i) REQUIRE(e.values[i] >= e.values[i + 1]);
  }
}

TEST_CASE("psd_project_plus_mu known cases", "[linalg]") {
  SECTION("psd input is shifted only") {
    const auto r = psd_project_plus_mu(SymMatrix(Eigen::MatrixXd::Identity(2, 2)), 0.5);
    CHECK(r(0, 0) == Approx(1.5));
    CHECK(r(1, 1) == Approx(1.5));
    CHECK(r(0, 1) == Approx(0.0).margin(1e-12));
  }
  SECTION("negative eigenvalue clipped") {
    Eigen::MatrixXd d = Eigen::Vector2d(1.0, -2.0).asDiagonal();
    const auto r = psd_project_plus_mu(SymMatrix(d), 0.5);
    CHECK(r(0, 0) == Approx(1.5));
    CHECK(r(1, 1) == Approx(0.5));
  }
  SECTION("hand-reassembled flip matrix") {
    Eigen::MatrixXd m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    const auto r = psd_project_plus_mu(SymMatrix(m), 0.5);
    CHECK(r(0, 0) == Approx(1.0));
    CHECK(r(0, 1) == Approx(0.5));
    CHECK(r(1, 0) == Approx(0.5));
    CHECK(r(1, 1) == Approx(1.0));
  }
  CHECK_THROWS_AS(psd_project_plus_mu(SymMatrix(Eigen::MatrixXd::Identity(2, 2)), 0.0),
                  InvalidInputError);
}

TEST_CASE("psd projection floor over random matrices", "[linalg][property]") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 12);
  const double mu = 0.5;
  for (int t = 0; t < 100; ++t) {
    const auto r = psd_project_plus_mu(SymMatrix(random_sym(dim(rng), rng)), mu);
    const auto e = sym_eig(r);
    REQUIRE(e.values.minCoeff() >= mu - 1e-9);
  }
}

TEST_CASE("spd factorization and solve", "[linalg]") {
  SECTION("identity") {
    Eigen::VectorXd b(2);
    b << 2, 3;
    const auto x = spd_factor_solve(SymMatrix(Eigen::MatrixXd::Identity(2, 2)), b);
    CHECK(x[0] == Approx(2.0));
    CHECK(x[1] == Approx(3.0));
  }
  SECTION("diagonal") {
    Eigen::MatrixXd d = Eigen::Vector2d(2.0, 4.0).asDiagonal();
    Eigen::VectorXd b(2);
    b << 2, 4;
    const auto x = spd_factor_solve(SymMatrix(d), b);
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(1.0));
  }
  SECTION("hand 2x2") {
    Eigen::MatrixXd m(2, 2);
    m << 2, 1, 1, 2;
    Eigen::VectorXd b(2);
    b << 3, 3;
    const auto x = spd_factor_solve(SymMatrix(m), b);
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(1.0));
  }
  SECTION("factor reconstructs source") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
      const Eigen::MatrixXd a = random_sym(8, rng);
      const SymMatrix h = psd_project_plus_mu(SymMatrix(a), 0.7);
      SpdFactorization f(h);
      const Eigen::MatrixXd rec = f.factor() * f.factor().transpose();
      REQUIRE((rec - h.mat()).norm() <= 1e-10 * std::max(1.0, h.mat().norm()));
      // solve-then-multiply round trip
      Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(8, -1.0, 1.0);
      const Eigen::VectorXd x = f.solve(b);
      REQUIRE((h.mat() * x - b).norm() <= 1e-9 * std::max(1.0, b.norm()));
    }
  }
  SECTION("non-spd reports pivot") {
    Eigen::MatrixXd d = Eigen::Vector2d(1.0, -1.0).asDiagonal();
    try {
      spd_factor_solve(SymMatrix(d), Eigen::VectorXd::Ones(2));
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(e.pivot_index == 1);
    }
  }
}

TEST_CASE("metric_norm", "[linalg]") {
  Eigen::VectorXd v(2);
  v << 3, 4;
  CHECK(metric_norm(SymMatrix(Eigen::MatrixXd::Identity(2, 2)), v) == Approx(5.0));
  CHECK(metric_norm(SymMatrix(Eigen::MatrixXd::Identity(2, 2)), Eigen::VectorXd::Zero(2)) == 0.0);
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 1, 2;
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
  CHECK(metric_norm(SymMatrix(m), ones) == Approx(std::sqrt(6.0)));
  CHECK_THROWS_AS(metric_norm(SymMatrix(m), Eigen::VectorXd::Ones(3)), InvalidInputError);
}

TEST_CASE("metric_norm parallelogram identity", "[linalg][property]") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng() % 10);
    const SymMatrix h = psd_project_plus_mu(SymMatrix(random_sym(n, rng)), 0.3);
    Eigen::VectorXd v(n), w(n);
    for (int i = 0; i < n; ++i) {
      v[i] = u(rng);
      w[i] = u(rng);
    }
    const double lhs = std::pow(metric_norm(h, v), 2) + std::pow(metric_norm(h, w), 2) +
                       2.0 * v.dot(h.mat() * w);
    const double rhs = std::pow(metric_norm(h, v + w), 2);
    REQUIRE(lhs == Approx(rhs).margin(1e-9 * std::max(1.0, std::abs(rhs))));
  }
}

TEST_CASE("Metric wrapper", "[linalg]") {
  SECTION("scaled identity") {
    const Metric m = Metric::scaled_identity(3, 2.0);
    CHECK(m.is_scaled_identity());
    Eigen::VectorXd v = Eigen::VectorXd::Ones(3);
    CHECK((m.apply(v) - 2.0 * v).norm() == 0.0);
    CHECK((m.solve(v) - 0.5 * v).norm() == 0.0);
    CHECK(m.quad(v) == Approx(6.0));
    CHECK(m.trace() == Approx(6.0));
    CHECK(m.frob_norm() == Approx(2.0 * std::sqrt(3.0)));
    CHECK_THROWS_AS(Metric::scaled_identity(3, 0.0), InvalidInputError);
  }
  SECTION("dense agrees with matrix algebra") {
    Eigen::MatrixXd h(2, 2);
    h << 2, 1, 1, 2;
    const Metric m = Metric::dense(SymMatrix(h));
    CHECK_FALSE(m.is_scaled_identity());
    Eigen::VectorXd v(2);
    v << 1, -1;
    CHECK((m.apply(v) - h * v).norm() < 1e-14);
    CHECK((h * m.solve(v) - v).norm() < 1e-12);
    CHECK(m.quad(v) == Approx(v.dot(h * v)));
    CHECK(m.norm(v) == Approx(metric_norm(SymMatrix(h), v)));
  }
}
