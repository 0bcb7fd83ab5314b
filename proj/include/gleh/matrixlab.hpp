#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "gleh/errors.hpp"

namespace gleh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

/// Minimum real part an eigenvalue must exceed for a matrix to count as positive stable.
inline constexpr double kStabilityTolerance = 1e-9;

struct SpectralReport {
  std::vector<Complex> eigenvalues;
  double min_real_part = std::numeric_limits<double>::infinity();
  bool positive_stable = false;
};

enum class LyapunovMethod { kronecker, bartels_stewart };

inline std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be square, got " + shape(m));
}

/// Eigenvalues via the real Schur form; only the real parts feed the verdict.
inline SpectralReport spectral_check(const Matrix& m) {
  require_square(m, "spectral_check input");
  SpectralReport rep;
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigenvalue iteration did not converge");
  const auto ev = es.eigenvalues();
  rep.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](const Complex& a, const Complex& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  for (const auto& z : rep.eigenvalues) rep.min_real_part = std::min(rep.min_real_part, z.real());
  rep.positive_stable = rep.min_real_part > kStabilityTolerance;
  return rep;
}

namespace detail {

inline Matrix lyapunov_kronecker(const Matrix& gamma, const Matrix& q) {
  const Eigen::Index n = gamma.rows();
  const Matrix id = Matrix::Identity(n, n);
  // column-major vec: vec(gamma J) = (I kron gamma) vec(J), vec(J gamma^T) = (gamma kron I) vec(J)
  Matrix big = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      big.block(j * n, i * n, n, n) += gamma(j, i) * id;
      if (i == j) big.block(j * n, j * n, n, n) += gamma;
    }
  Eigen::PartialPivLU<Matrix> lu(big);
  const Vector rhs = Eigen::Map<const Vector>(q.data(), n * n);
  const Vector sol = lu.solve(rhs);
  return Eigen::Map<const Matrix>(sol.data(), n, n);
}

inline Matrix lyapunov_bartels_stewart(const Matrix& gamma, const Matrix& q) {
  const Eigen::Index n = gamma.rows();
  Eigen::ComplexSchur<CMatrix> schur(gamma.cast<Complex>());
  const CMatrix& u = schur.matrixU();
  const CMatrix& t = schur.matrixT();
  const CMatrix qt = u.adjoint() * q.cast<Complex>() * u;
  CMatrix y = CMatrix::Zero(n, n);
  for (Eigen::Index i = n - 1; i >= 0; --i)
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      Complex acc = qt(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) acc -= t(i, k) * y(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) acc -= y(i, k) * std::conj(t(j, k));
      y(i, j) = acc / (t(i, i) + std::conj(t(j, j)));
    }
  return (u * y * u.adjoint()).real();
}

}  // namespace detail

/// Solves gamma J + J gamma^T = q for positive stable gamma.
inline Matrix solve_lyapunov(const Matrix& gamma, const Matrix& q,
                             LyapunovMethod method = LyapunovMethod::kronecker) {
  require_square(gamma, "gamma");
  if (q.rows() != gamma.rows() || q.cols() != gamma.cols())
    throw Error(ErrorCode::DimensionMismatch, "q is " + shape(q) + " but gamma is " + shape(gamma));
  const SpectralReport rep = spectral_check(gamma);
  if (!rep.positive_stable) {
    std::ostringstream os;
    os << "min real part of eigenvalues " << rep.min_real_part << " <= " << kStabilityTolerance;
    throw Error(ErrorCode::NotPositiveStable, os.str());
  }
  Matrix j = method == LyapunovMethod::kronecker ? detail::lyapunov_kronecker(gamma, q)
                                                  : detail::lyapunov_bartels_stewart(gamma, q);
  if (!j.allFinite()) throw Error(ErrorCode::NumericalFailure, "Lyapunov solution is not finite");
  if ((q - q.transpose()).norm() <= 1e-14 * (1.0 + q.norm())) j = symmetrize(j);
  return j;
}

inline double lyapunov_residual(const Matrix& gamma, const Matrix& j, const Matrix& q) {
  return (gamma * j + j * gamma.transpose() - q).norm();
}

/// Matrix exponential e^{m t} by scaling and squaring with Pade approximants.
inline Matrix expm(const Matrix& m, double t) {
  require_square(m, "expm input");
  if (!m.allFinite() || !std::isfinite(t)) throw Error(ErrorCode::Overflow, "expm input is not finite");
  if (t == 0.0) return Matrix::Identity(m.rows(), m.cols());
  const Matrix mt = m * t;
  if (mt.lpNorm<1>() > 1e6) throw Error(ErrorCode::Overflow, "expm argument norm exceeds 1e6");
  Matrix out = mt.exp();
  if (!out.allFinite()) throw Error(ErrorCode::Overflow, "expm result is not finite");
  return out;
}

/// Symmetric positive semidefinite square root; tiny negative eigenvalues are clamped to zero.
inline Matrix sym_sqrt(const Matrix& s) {
  require_square(s, "sym_sqrt input");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10 * scale) throw Error(ErrorCode::InvalidTriple, "matrix is not positive semidefinite");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto sv = svd.singularValues();
  if (sv.size() == 0) return std::numeric_limits<double>::infinity();
  const double smin = sv(sv.size() - 1);
  return smin == 0.0 ? std::numeric_limits<double>::infinity() : sv(0) / smin;
}

inline double min_singular_value(const CMatrix& m) {
  Eigen::JacobiSVD<CMatrix> svd(m);
  const auto sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

inline double spectral_radius(const Matrix& m) {
  const SpectralReport r = spectral_check(m);
  double out = 0.0;
  for (const auto& z : r.eigenvalues) out = std::max(out, std::abs(z));
  return out;
}

}  // namespace gleh
