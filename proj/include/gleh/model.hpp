#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/random/sobol.hpp>
#include <boost/random/uniform_01.hpp>

#include "gleh/errors.hpp"
#include "gleh/matrixlab.hpp"

namespace gleh {

/// (Gamma, M, C, Sigma): kappa(t) = C exp(-Gamma |t|) M C^T with Gamma M + M Gamma^T = Sigma Sigma^T.
struct RealizationTriple {
  Matrix Gamma;
  Matrix M;
  Matrix C;
  Matrix Sigma;

  Eigen::Index state_dim() const { return Gamma.rows(); }
  Eigen::Index output_dim() const { return C.rows(); }
  Eigen::Index noise_dim() const { return Sigma.cols(); }
};

struct TriplePair {
  RealizationTriple kernel;
  RealizationTriple noise;
};

/// Throws unless dimensions agree, Gamma is positive stable, M is SPD and the Lyapunov condition holds.
inline void validate_triple(const RealizationTriple& t, const std::string& name = "triple") {
  const Eigen::Index n = t.Gamma.rows();
  if (n == 0 || t.Gamma.cols() != n || t.M.rows() != n || t.M.cols() != n || t.C.cols() != n || t.C.rows() == 0 ||
      t.Sigma.rows() != n || t.Sigma.cols() == 0)
    throw Error(ErrorCode::DimensionMismatch, name + ": inconsistent shapes Gamma " + shape(t.Gamma) + ", M " +
                                                  shape(t.M) + ", C " + shape(t.C) + ", Sigma " + shape(t.Sigma));
  if (!t.Gamma.allFinite() || !t.M.allFinite() || !t.C.allFinite() || !t.Sigma.allFinite())
    throw Error(ErrorCode::InvalidTriple, name + ": non-finite entries");
  const SpectralReport rep = spectral_check(t.Gamma);
  if (!rep.positive_stable) {
    std::ostringstream os;
    os << name << ": Gamma is not positive stable (min real part " << rep.min_real_part << ")";
    throw Error(ErrorCode::NotPositiveStable, os.str());
  }
  const double mscale = 1.0 + t.M.norm();
  if ((t.M - t.M.transpose()).norm() > 1e-12 * mscale) throw Error(ErrorCode::InvalidTriple, name + ": M is not symmetric");
  Eigen::LLT<Matrix> llt(symmetrize(t.M));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidTriple, name + ": M is not positive definite");
  const Matrix lhs = t.Gamma * t.M + t.M * t.Gamma.transpose();
  const Matrix rhs = t.Sigma * t.Sigma.transpose();
  if ((lhs - rhs).norm() > 1e-10 * (1.0 + rhs.norm())) {
    std::ostringstream os;
    os << name << ": Lyapunov condition Gamma M + M Gamma^T = Sigma Sigma^T violated by " << (lhs - rhs).norm();
    throw Error(ErrorCode::InvalidTriple, os.str());
  }
}

/// Builds a triple; Sigma defaults to the symmetric square root of Gamma M + M Gamma^T.
inline RealizationTriple make_triple(Matrix Gamma, Matrix M, Matrix C, std::optional<Matrix> Sigma = std::nullopt,
                                     const std::string& name = "triple") {
  RealizationTriple t{std::move(Gamma), std::move(M), std::move(C), Matrix()};
  if (Sigma) {
    t.Sigma = std::move(*Sigma);
  } else {
    require_square(t.Gamma, "Gamma");
    if (t.M.rows() != t.Gamma.rows() || t.M.cols() != t.Gamma.cols())
      throw Error(ErrorCode::DimensionMismatch, name + ": M is " + shape(t.M) + " but Gamma is " + shape(t.Gamma));
    t.Sigma = sym_sqrt(t.Gamma * t.M + t.M * t.Gamma.transpose());
  }
  validate_triple(t, name);
  return t;
}

inline Matrix kernel_eval(const RealizationTriple& t, double time) {
  return t.C * expm(-t.Gamma, std::abs(time)) * t.M * t.C.transpose();
}

inline Matrix covariance_eval(const RealizationTriple& t, double time) { return kernel_eval(t, time); }

/// Closed-form time integral of the kernel over [0, inf): C Gamma^{-1} M C^T.
inline Matrix triple_integral(const RealizationTriple& t) {
  return t.C * t.Gamma.partialPivLu().solve(t.M) * t.C.transpose();
}

/// Equivalent realization (T Gamma T^{-1}, T M T^T, C T^{-1}, T Sigma).
inline RealizationTriple transform_triple(const RealizationTriple& t, const Matrix& T) {
  const Matrix Ti = T.inverse();
  return {T * t.Gamma * Ti, T * t.M * T.transpose(), t.C * Ti, T * t.Sigma};
}

/// Slowest decay time 1 / min Re(eig Gamma).
inline double max_timescale(const RealizationTriple& t) { return 1.0 / spectral_check(t.Gamma).min_real_part; }

/// Kernel (A, A, I) and noise (A, A/2, I) for a diagonal positive rate matrix A.
inline TriplePair ou_realization(const Matrix& A) {
  require_square(A, "A");
  const Eigen::Index d = A.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j && A(i, j) != 0.0) throw Error(ErrorCode::InvalidTriple, "OU rate matrix must be diagonal");
    if (!(A(i, i) > 0.0)) throw Error(ErrorCode::NonPositiveRate, "OU rate A(" + std::to_string(i) + ") must be positive");
  }
  const Matrix I = Matrix::Identity(d, d);
  TriplePair p;
  p.kernel = make_triple(A, A, I, Matrix(std::sqrt(2.0) * A), "OU kernel");
  p.noise = make_triple(A, 0.5 * A, I, A, "OU noise");
  return p;
}

/// Harmonic kernel and noise triples for diagonal Omega and time scale tau.
inline TriplePair harmonic_realization(const Matrix& Omega, double tau = 1.0) {
  require_square(Omega, "Omega");
  if (!(tau > 0.0)) throw Error(ErrorCode::NonPositiveRate, "harmonic time scale must be positive");
  const Eigen::Index d = Omega.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j && Omega(i, j) != 0.0) throw Error(ErrorCode::InvalidTriple, "Omega must be diagonal");
    const double w = Omega(i, i);
    if (w == 0.0) throw Error(ErrorCode::ZeroFrequency, "Omega(" + std::to_string(i) + ") is zero");
    if (std::abs(std::abs(w) - 2.0) < 1e-12)
      throw Error(ErrorCode::CriticalDamping, "|Omega(" + std::to_string(i) + ")| = 2 is rejected");
  }
  const Matrix I = Matrix::Identity(d, d);
  const Matrix Z = Matrix::Zero(d, d);
  const Matrix W = Omega * Omega;
  Matrix G2(2 * d, 2 * d), M2(2 * d, 2 * d), C2(d, 2 * d), S2(2 * d, d), T(2 * d, 2 * d);
  G2 << Z, -I, W, W;
  M2 << 0.5 * I, Z, Z, 0.5 * W;
  C2 << I, Z;
  S2 << Z, W;
  T << I, 0.5 * I, Z, -0.5 * I;
  const Matrix Ti = T.inverse();
  TriplePair p;
  p.noise = make_triple(G2 / tau, M2 / tau, C2, Matrix(S2 / tau), "harmonic noise");
  p.kernel = make_triple(T * G2 * Ti / tau, 2.0 * T * M2 * T.transpose() / tau, C2 * Ti,
                         Matrix(std::sqrt(2.0) * T * S2 / tau), "harmonic kernel");
  return p;
}

/// Scalar oscillatory kernel on the trigonometric (|Omega|<2) or hyperbolic (|Omega|>2) branch.
inline double harmonic_kernel_closed_form(double Omega, double tau, double t) {
  if (Omega == 0.0) throw Error(ErrorCode::ZeroFrequency, "Omega is zero");
  const double q = 1.0 - Omega * Omega / 4.0;
  if (std::abs(q) < 1e-15) throw Error(ErrorCode::CriticalDamping, "|Omega| = 2 is rejected");
  const double env = std::exp(-Omega * Omega * std::abs(t) / (2.0 * tau)) / tau;
  if (q > 0) {
    const double w0 = Omega * std::sqrt(q), w1 = Omega / std::sqrt(q);
    return env * (std::cos(w0 * t / tau) + 0.5 * w1 * std::sin(w0 * std::abs(t) / tau));
  }
  const double w0 = Omega * std::sqrt(-q), w1 = Omega / std::sqrt(-q);
  return env * (std::cosh(w0 * t / tau) + 0.5 * w1 * std::sinh(w0 * std::abs(t) / tau));
}

using VectorField = std::function<Vector(const Vector&)>;
using MatrixField = std::function<Matrix(const Vector&)>;
/// Partial derivatives of a matrix field, one matrix per state component.
using MatrixJacobian = std::function<std::vector<Matrix>(const Vector&)>;

/// State-dependent F (d), g (d x q), h (q x d), sigma (d x r) with optional analytic Jacobians.
/// Callables must be safe for concurrent evaluation.
struct CoefficientField {
  int d = 1;
  int q = 1;
  int r = 1;
  VectorField F;
  MatrixField g;
  MatrixField h;
  MatrixField sigma;
  MatrixJacobian dg;
  MatrixJacobian dh;
  MatrixJacobian dsigma;

  bool has_jacobians() const { return dg && dh && dsigma; }
};

/// Optional tag naming the closed-form family a 1D model belongs to.
struct NoiseFamily {
  enum class Kind { custom, ou, harmonic };
  Kind kind = Kind::custom;
  double alpha = 0.0;
  double omega = 0.0;
};

struct GLESystem {
  CoefficientField coeffs;
  RealizationTriple kernel;
  RealizationTriple noise;
  double m0 = 1.0;
  double tau_kappa = 1.0;
  double tau_xi = 1.0;
  NoiseFamily family;
  std::vector<Vector> probes;

  int d() const { return coeffs.d; }
};

struct EffectiveConstants {
  Matrix K1;
  Matrix K2;
};

/// Central-difference step (machine epsilon)^{1/3} max(1, |x|).
inline double fd_step(double x) { return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(x)); }

inline std::vector<Matrix> fd_jacobian(const MatrixField& f, const Vector& x) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    const double h = fd_step(x(l));
    Vector xp = x, xm = x;
    xp(l) += h;
    xm(l) -= h;
    out.push_back((f(xp) - f(xm)) / (xp(l) - xm(l)));
  }
  return out;
}

/// Quasi-random probe states in an axis-aligned box (first point is the lower corner).
inline std::vector<Vector> sobol_probes(const Vector& lo, const Vector& hi, int count = 32) {
  if (lo.size() != hi.size() || lo.size() == 0) throw Error(ErrorCode::DimensionMismatch, "probe box bounds differ in size");
  boost::random::sobol qrng(static_cast<std::size_t>(lo.size()));
  boost::random::uniform_01<double> u01;
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    Vector x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = lo(i) + (hi(i) - lo(i)) * u01(qrng);
    out.push_back(x);
  }
  return out;
}

inline const std::vector<Vector>& probes_or_default(const GLESystem& sys, std::vector<Vector>& storage) {
  if (!sys.probes.empty()) return sys.probes;
  storage = sobol_probes(Vector::Constant(sys.d(), -1.0), Vector::Constant(sys.d(), 1.0));
  return storage;
}

/// Checks shapes of coefficients against the triples, positivity of scales and finiteness at probes.
inline void validate_system(const GLESystem& sys) {
  const auto& c = sys.coeffs;
  if (!(sys.m0 > 0.0) || !(sys.tau_kappa > 0.0) || !(sys.tau_xi > 0.0))
    throw Error(ErrorCode::ModelValidationError, "m0, tau_kappa and tau_xi must be positive");
  if (!c.F || !c.g || !c.h || !c.sigma) throw Error(ErrorCode::ModelValidationError, "coefficient field is incomplete");
  validate_triple(sys.kernel, "kernel");
  validate_triple(sys.noise, "noise");
  if (sys.kernel.output_dim() != c.q)
    throw Error(ErrorCode::DimensionMismatch, "kernel C has " + std::to_string(sys.kernel.output_dim()) +
                                                  " rows but q = " + std::to_string(c.q));
  if (sys.noise.output_dim() != c.r)
    throw Error(ErrorCode::DimensionMismatch, "noise C has " + std::to_string(sys.noise.output_dim()) +
                                                  " rows but r = " + std::to_string(c.r));
  std::vector<Vector> storage;
  for (const Vector& x : probes_or_default(sys, storage)) {
    if (x.size() != c.d) throw Error(ErrorCode::DimensionMismatch, "probe state has wrong dimension");
    const Vector F = c.F(x);
    const Matrix g = c.g(x), h = c.h(x), s = c.sigma(x);
    if (F.size() != c.d) throw Error(ErrorCode::DimensionMismatch, "F must have d entries");
    if (g.rows() != c.d || g.cols() != c.q) throw Error(ErrorCode::DimensionMismatch, "g is " + shape(g) + ", expected d x q");
    if (h.rows() != c.q || h.cols() != c.d) throw Error(ErrorCode::DimensionMismatch, "h is " + shape(h) + ", expected q x d");
    if (s.rows() != c.d || s.cols() != c.r)
      throw Error(ErrorCode::DimensionMismatch, "sigma is " + shape(s) + ", expected d x r");
    if (!F.allFinite() || !g.allFinite() || !h.allFinite() || !s.allFinite())
      throw Error(ErrorCode::ModelValidationError, "coefficients are not finite at a probe state");
  }
}

/// K1 = C1 Gamma1^{-1} M1 C1^T and K2 = C2 Gamma2^{-1} M2 C2^T, both required invertible.
inline EffectiveConstants effective_constants(const GLESystem& sys) {
  EffectiveConstants k{triple_integral(sys.kernel), triple_integral(sys.noise)};
  const double c1 = condition_number(k.K1), c2 = condition_number(k.K2);
  if (!(c1 < 1e12)) throw Error(ErrorCode::SingularEffectiveConstant, "K1 is numerically singular");
  if (!(c2 < 1e12)) throw Error(ErrorCode::SingularEffectiveConstant, "K2 is numerically singular");
  return k;
}

struct FdtReport {
  bool holds = false;
  double sigma_ratio = 0.0;       // c in sigma = c g
  double covariance_ratio = 0.0;  // c in R(t) = c kappa(t)
  std::vector<std::string> failures;
};

/// Tests equal time scales, h = g^T, sigma proportional to g and R(t) proportional to kappa(t).
inline FdtReport check_fdt(const GLESystem& sys) {
  FdtReport rep;
  const auto& c = sys.coeffs;
  if (std::abs(sys.tau_kappa - sys.tau_xi) > 1e-12 * std::max(sys.tau_kappa, sys.tau_xi))
    rep.failures.push_back("tau_kappa differs from tau_xi");
  std::vector<Vector> storage;
  const auto& probes = probes_or_default(sys, storage);
  if (c.q != c.r) {
    rep.failures.push_back("sigma and g have different column counts");
  } else {
    double num = 0.0, den = 0.0;
    for (const Vector& x : probes) {
      const Matrix g = c.g(x), h = c.h(x), s = c.sigma(x);
      if ((h - g.transpose()).norm() > 1e-10 * (1.0 + g.norm())) {
        rep.failures.push_back("h differs from g^T at a probe state");
        break;
      }
      num += (s.array() * g.array()).sum();
      den += g.squaredNorm();
    }
    rep.sigma_ratio = den > 0 ? num / den : 0.0;
    double res = 0.0, ref = 0.0;
    for (const Vector& x : probes) {
      const Matrix g = c.g(x), s = c.sigma(x);
      res += (s - rep.sigma_ratio * g).squaredNorm();
      ref += s.squaredNorm();
    }
    if (den == 0.0 || ref == 0.0 || std::sqrt(res / ref) >= 1e-6) rep.failures.push_back("sigma is not a constant multiple of g");
  }
  if (sys.kernel.output_dim() != sys.noise.output_dim()) {
    rep.failures.push_back("kernel and noise outputs differ in size");
  } else {
    const double horizon = 5.0 * std::max(max_timescale(sys.kernel), max_timescale(sys.noise));
    std::vector<Matrix> ks, rs;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 16; ++k) {
      const double t = horizon * k / 15.0;
      ks.push_back(kernel_eval(sys.kernel, t));
      rs.push_back(covariance_eval(sys.noise, t));
      num += (rs.back().array() * ks.back().array()).sum();
      den += ks.back().squaredNorm();
    }
    rep.covariance_ratio = den > 0 ? num / den : 0.0;
    double res = 0.0, ref = 0.0;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      res += (rs[k] - rep.covariance_ratio * ks[k]).squaredNorm();
      ref += rs[k].squaredNorm();
    }
    if (ref == 0.0 || std::sqrt(res / ref) >= 1e-6) rep.failures.push_back("noise covariance is not proportional to the kernel");
  }
  rep.holds = rep.failures.empty();
  return rep;
}

}  // namespace gleh
