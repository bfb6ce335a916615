#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <utility>

#include "modelprox/errors.hpp"

namespace modelprox {

// Dense symmetric matrix. Inputs are symmetrized as (A + A^T)/2 on
// construction to absorb floating-point drift in Hessian assembly.
class SymMatrix {
 public:
  explicit SymMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() < 1 || m_.rows() != m_.cols())
      throw InvalidInputError("SymMatrix: need square matrix, n >= 1");
    if (!m_.allFinite())
      throw InvalidInputError("SymMatrix: non-finite entries");
    m_ = ((m_ + m_.transpose()) / 2.0).eval();
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

struct SymEig {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns, matching order
};

// Symmetric eigendecomposition, eigenvalues descending.
inline SymEig sym_eig(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.mat());
  if (es.info() != Eigen::Success)
    throw NumericalError("sym_eig: eigensolver did not converge");
  const int n = a.dim();
  SymEig out;
  out.values = es.eigenvalues().reverse();
  out.vectors.resize(n, n);
  for (int j = 0; j < n; ++j) out.vectors.col(j) = es.eigenvectors().col(n - 1 - j);
  return out;
}

// P_{S+}(A) + mu*Id: clip negative eigenvalues at 0, then add mu on the
// diagonal so the result has lambda_min >= mu.
inline SymMatrix psd_project_plus_mu(const SymMatrix& a, double mu) {
  if (!(mu > 0)) throw InvalidInputError("psd_project_plus_mu: mu must be > 0");
  SymEig e = sym_eig(a);
  Eigen::VectorXd clipped = e.values.cwiseMax(0.0);
  Eigen::MatrixXd r = e.vectors * clipped.asDiagonal() * e.vectors.transpose();
  r.diagonal().array() += mu;
  return SymMatrix(std::move(r));
}

// Cholesky factorization H = L L^T of a symmetric positive-definite matrix.
// Hand-rolled so a breakdown can report the offending pivot index.
class SpdFactorization {
 public:
  explicit SpdFactorization(SymMatrix h) : src_(std::move(h)), l_(src_.mat()) {
    const int n = src_.dim();
    for (int j = 0; j < n; ++j) {
      double d = l_(j, j);
      for (int k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > 0.0) || !std::isfinite(d))
        throw NumericalError("SpdFactorization: non-positive pivot", j);
      d = std::sqrt(d);
      l_(j, j) = d;
      for (int i = j + 1; i < n; ++i) {
        double s = l_(i, j);
        for (int k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / d;
      }
    }
    l_.triangularView<Eigen::StrictlyUpper>().setZero();
  }

  const SymMatrix& source() const { return src_; }
  const Eigen::MatrixXd& factor() const { return l_; }  // lower triangular

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (b.size() != src_.dim())
      throw InvalidInputError("SpdFactorization::solve: dimension mismatch");
    Eigen::VectorXd y = l_.triangularView<Eigen::Lower>().solve(b);
    return l_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

 private:
  SymMatrix src_;
  Eigen::MatrixXd l_;
};

inline Eigen::VectorXd spd_factor_solve(const SymMatrix& h, const Eigen::VectorXd& b) {
  return SpdFactorization(h).solve(b);
}

// ||v||_H = sqrt(<Hv, v>) for symmetric PSD H.
inline double metric_norm(const SymMatrix& h, const Eigen::VectorXd& v) {
  if (v.size() != h.dim())
    throw InvalidInputError("metric_norm: dimension mismatch");
  const double q = v.dot(h.mat() * v);
  return std::sqrt(std::max(q, 0.0));
}

// The variable metric of the proximity term: either a dense SPD matrix
// (factorized once) or a scaled identity. Construction paths guarantee
// lambda_min >= mu.
class Metric {
 public:
  static Metric dense(SymMatrix h) {
    Metric m;
    m.n_ = h.dim();
    m.fact_.emplace(std::move(h));
    return m;
  }

  static Metric scaled_identity(int n, double scale) {
    if (n < 1) throw InvalidInputError("Metric: n >= 1 required");
    if (!(scale > 0) || !std::isfinite(scale))
      throw InvalidInputError("Metric: scale must be positive finite");
    Metric m;
    m.n_ = n;
    m.scale_ = scale;
    return m;
  }

  int dim() const { return n_; }
  bool is_scaled_identity() const { return !fact_.has_value(); }
  double scale() const { return scale_; }
  const SymMatrix* dense_matrix() const {
    return fact_ ? &fact_->source() : nullptr;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    check(v);
    if (fact_) return fact_->source().mat() * v;
    return scale_ * v;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    check(v);
    if (fact_) return fact_->solve(v);
    return v / scale_;
  }

  double quad(const Eigen::VectorXd& v) const {
    check(v);
    const double q = fact_ ? v.dot(fact_->source().mat() * v) : scale_ * v.squaredNorm();
    return std::max(q, 0.0);
  }

  double norm(const Eigen::VectorXd& v) const { return std::sqrt(quad(v)); }

  double trace() const {
    if (fact_) return fact_->source().mat().trace();
    return scale_ * n_;
  }

  double frob_norm() const {
    if (fact_) return fact_->source().mat().norm();
    return scale_ * std::sqrt(static_cast<double>(n_));
  }

 private:
  Metric() = default;
  void check(const Eigen::VectorXd& v) const {
    if (v.size() != n_) throw InvalidInputError("Metric: dimension mismatch");
  }

  int n_ = 0;
  double scale_ = 0.0;
  std::optional<SpdFactorization> fact_;
};

}  // namespace modelprox
