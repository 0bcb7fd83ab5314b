#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gleh/errors.hpp"
#include "gleh/markovianize.hpp"
#include "gleh/matrixlab.hpp"
#include "gleh/model.hpp"

namespace gleh {

/// Blocks of the solution J of gamma_hat J + J gamma_hat^T = sigma_hat sigma_hat^T.
struct JBlocks {
  Matrix J11, J12, J13, J22, J23, J33;
  Matrix full;
};

struct DriftTerms {
  Vector S1, S2, S3;

  Vector sum() const { return S1 + S2 + S3; }
};

/// Spatial derivatives of theta^{-1}, theta^{-1} g and theta^{-1} sigma, one matrix per component.
struct ProductDerivatives {
  std::vector<Matrix> dP1, dP2, dP3;
};

enum class Provenance { generic, closed_form_1d_ou, closed_form_1d_harmonic, fdt };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::generic: return "generic";
    case Provenance::closed_form_1d_ou: return "closed-form-1d-ou";
    case Provenance::closed_form_1d_harmonic: return "closed-form-1d-harmonic";
    case Provenance::fdt: return "fdt";
  }
  return "generic";
}

/// Limiting SDE dX = (S1 + S2 + S3 + theta^{-1} F) dt + diffusion dW.
struct HomogenizedSDE {
  int d = 1;
  int noise_dim = 1;
  std::function<DriftTerms(const Vector&)> components;
  std::function<Vector(const Vector&)> forcing;
  std::function<Matrix(const Vector&)> diffusion;
  Provenance provenance = Provenance::generic;

  Vector drift(const Vector& x) const { return components(x).sum() + forcing(x); }
};

inline JBlocks j_blocks(const GLESystem& sys, const Vector& x) {
  const BlockLayout L = layout_of(sys);
  const Matrix s = assemble_sigma_hat(sys);
  JBlocks jb;
  jb.full = solve_lyapunov(assemble_gamma_hat(sys, x), s * s.transpose());
  const Matrix& J = jb.full;
  jb.J11 = J.block(L.v(), L.v(), L.d, L.d);
  jb.J12 = J.block(L.v(), L.y(), L.d, L.d1);
  jb.J13 = J.block(L.v(), L.beta(), L.d, L.d2);
  jb.J22 = J.block(L.y(), L.y(), L.d1, L.d1);
  jb.J23 = J.block(L.y(), L.beta(), L.d1, L.d2);
  jb.J33 = J.block(L.beta(), L.beta(), L.d2, L.d2);
  return jb;
}

/// Residual norms of the five coupled block equations satisfied by (J11, J12, J13, J22, J23).
inline std::array<double, 5> block_equation_residuals(const GLESystem& sys, const Vector& x, const JBlocks& j) {
  const Matrix g = sys.coeffs.g(x), h = sys.coeffs.h(x), s = sys.coeffs.sigma(x);
  const auto& k = sys.kernel;
  const auto& n = sys.noise;
  const double m0 = sys.m0, tk = sys.tau_kappa, tx = sys.tau_xi;
  const Matrix gC1 = g * k.C, sC2 = s * n.C;
  const Matrix MCh = k.M * k.C.transpose() * h;
  std::array<double, 5> r{};
  r[0] = (gC1 * j.J12.transpose() + j.J12 * gC1.transpose() - sC2 * j.J13.transpose() - j.J13 * sC2.transpose()).norm();
  r[1] = (m0 * j.J11 * MCh.transpose() + tk * sC2 * j.J23.transpose() - tk * gC1 * j.J22 -
          m0 * j.J12 * k.Gamma.transpose())
             .norm();
  r[2] = (tx * gC1 * j.J23 + m0 * j.J13 * n.Gamma.transpose() - sC2 * n.M).norm();
  r[3] = (MCh * j.J12 + j.J12.transpose() * MCh.transpose() - k.Gamma * j.J22 - j.J22 * k.Gamma.transpose()).norm();
  r[4] = (tx * MCh * j.J13 - tx * k.Gamma * j.J23 - tk * j.J23 * n.Gamma.transpose()).norm();
  return r;
}

namespace detail {

struct Products {
  Matrix P1, P2, P3;
};

inline Products products(const GLESystem& sys, const Vector& x, const Matrix& K1) {
  const Matrix thi = theta(sys, x, K1).inverse();
  return {thi, thi * sys.coeffs.g(x), thi * sys.coeffs.sigma(x)};
}

}  // namespace detail

/// Product-rule derivatives from supplied Jacobians.
inline ProductDerivatives analytic_product_derivatives(const GLESystem& sys, const Vector& x, const Matrix& K1) {
  const auto& c = sys.coeffs;
  if (!c.has_jacobians()) throw Error(ErrorCode::JacobianUnavailable, "coefficient Jacobians were not supplied");
  const Matrix g = c.g(x), h = c.h(x), s = c.sigma(x);
  const Matrix thi = theta(sys, x, K1).inverse();
  const auto dg = c.dg(x), dh = c.dh(x), ds = c.dsigma(x);
  if (dg.size() != static_cast<std::size_t>(c.d) || dh.size() != dg.size() || ds.size() != dg.size())
    throw Error(ErrorCode::DimensionMismatch, "Jacobian lists must have d entries");
  ProductDerivatives out;
  for (int l = 0; l < c.d; ++l) {
    const Matrix dth = dg[l] * K1 * h + g * K1 * dh[l];
    const Matrix dP1 = -thi * dth * thi;
    out.dP1.push_back(dP1);
    out.dP2.push_back(dP1 * g + thi * dg[l]);
    out.dP3.push_back(dP1 * s + thi * ds[l]);
  }
  return out;
}

/// Central differences applied to the final products theta^{-1}, theta^{-1} g, theta^{-1} sigma.
inline ProductDerivatives fd_product_derivatives(const GLESystem& sys, const Vector& x, const Matrix& K1) {
  ProductDerivatives out;
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    const double step = fd_step(x(l));
    Vector xp = x, xm = x;
    xp(l) += step;
    xm(l) -= step;
    const double h = xp(l) - xm(l);
    const auto pp = detail::products(sys, xp, K1), pm = detail::products(sys, xm, K1);
    out.dP1.push_back((pp.P1 - pm.P1) / h);
    out.dP2.push_back((pp.P2 - pm.P2) / h);
    out.dP3.push_back((pp.P3 - pm.P3) / h);
  }
  for (const auto* v : {&out.dP1, &out.dP2, &out.dP3})
    for (const Matrix& m : *v)
      if (!m.allFinite()) throw Error(ErrorCode::JacobianUnavailable, "finite-difference derivative is not finite");
  return out;
}

inline ProductDerivatives product_derivatives(const GLESystem& sys, const Vector& x, const Matrix& K1,
                                              bool allow_fd = true) {
  if (sys.coeffs.has_jacobians()) return analytic_product_derivatives(sys, x, K1);
  if (!allow_fd) throw Error(ErrorCode::JacobianUnavailable, "no analytic Jacobians and finite differences disabled");
  return fd_product_derivatives(sys, x, K1);
}

namespace detail {

/// out_i = sum_l sum_j dP[l](i, j) K(j, l)
inline Vector contract(const std::vector<Matrix>& dP, const Matrix& K) {
  Vector out = Vector::Zero(dP.empty() ? 0 : dP.front().rows());
  for (std::size_t l = 0; l < dP.size(); ++l) out += dP[l] * K.col(static_cast<Eigen::Index>(l));
  return out;
}

}  // namespace detail

/// S1 = m0 d(theta^{-1}) : J11, S2 = -tau_k d(theta^{-1} g) : C1 Gamma1^{-1} J21,
/// S3 = tau_xi d(theta^{-1} sigma) : C2 Gamma2^{-1} J31.
inline DriftTerms noise_induced_drift(const GLESystem& sys, const Vector& x, bool allow_fd = true) {
  const Matrix K1 = triple_integral(sys.kernel);
  const JBlocks j = j_blocks(sys, x);
  const ProductDerivatives dp = product_derivatives(sys, x, K1, allow_fd);
  const Matrix A2 = sys.kernel.C * sys.kernel.Gamma.partialPivLu().solve(j.J12.transpose());
  const Matrix A3 = sys.noise.C * sys.noise.Gamma.partialPivLu().solve(j.J13.transpose());
  DriftTerms s;
  s.S1 = sys.m0 * detail::contract(dp.dP1, j.J11);
  s.S2 = -sys.tau_kappa * detail::contract(dp.dP2, A2);
  s.S3 = sys.tau_xi * detail::contract(dp.dP3, A3);
  return s;
}

/// Coefficient values and first derivatives of a scalar model at one state.
struct ScalarCoefficients {
  double g = 0.0;
  double dg = 0.0;
  double sigma = 0.0;
  double dsigma = 0.0;
};

inline ScalarCoefficients scalar_coefficients(const GLESystem& sys, double x) {
  if (sys.d() != 1 || sys.coeffs.q != 1 || sys.coeffs.r != 1)
    throw Error(ErrorCode::DimensionMismatch, "scalar closed forms need d = q = r = 1");
  Vector xv(1);
  xv(0) = x;
  ScalarCoefficients c;
  c.g = sys.coeffs.g(xv)(0, 0);
  c.sigma = sys.coeffs.sigma(xv)(0, 0);
  if (sys.coeffs.has_jacobians()) {
    c.dg = sys.coeffs.dg(xv)[0](0, 0);
    c.dsigma = sys.coeffs.dsigma(xv)[0](0, 0);
  } else {
    c.dg = fd_jacobian(sys.coeffs.g, xv)[0](0, 0);
    c.dsigma = fd_jacobian(sys.coeffs.sigma, xv)[0](0, 0);
  }
  return c;
}

/// Scalar OU closed forms for h = g with rate alpha.
inline DriftTerms drift_1d_ou(const ScalarCoefficients& c, double m0, double tau_kappa, double tau_eta, double alpha) {
  if (c.g == 0.0) throw Error(ErrorCode::ZeroDamping, "g vanishes");
  const double g = c.g, g2 = g * g, s = c.sigma;
  const double inv_g2_p = -2.0 * c.dg / (g2 * g);
  const double inv_g_p = -c.dg / g2;
  const double s_over_g2_p = c.dsigma / g2 - 2.0 * s * c.dg / (g2 * g);
  const double tsum = tau_kappa + tau_eta;
  const double den = tau_eta * tau_eta * g2 + m0 * alpha * tsum;
  if (den == 0.0) throw Error(ErrorCode::ZeroDamping, "closed-form denominator vanishes");
  DriftTerms out{Vector(1), Vector(1), Vector(1)};
  out.S1(0) = inv_g2_p * s * s / (2.0 * g2) * (tau_kappa * tau_kappa * g2 + m0 * alpha * tsum) / den;
  out.S2(0) = -inv_g_p * s * s * tau_kappa * tsum / (2.0 * g * den);
  out.S3(0) = s_over_g2_p * s * tau_eta * tsum / (2.0 * den);
  return out;
}

/// Scalar harmonic-noise closed forms for h = g; J41 and J51 carry the common 1/R factor.
inline DriftTerms drift_1d_harmonic(const ScalarCoefficients& c, double m0, double tau_kappa, double tau_h,
                                    double Omega) {
  if (c.g == 0.0) throw Error(ErrorCode::ZeroDamping, "g vanishes");
  if (Omega == 0.0) throw Error(ErrorCode::ZeroFrequency, "Omega is zero");
  const double g = c.g, g2 = g * g, g4 = g2 * g2, s = c.sigma;
  const double inv_g2_p = -2.0 * c.dg / (g2 * g);
  const double inv_g_p = -c.dg / g2;
  const double s_over_g2_p = c.dsigma / g2 - 2.0 * s * c.dg / (g2 * g);
  const double w = Omega * Omega;
  DriftTerms out{Vector(1), Vector(1), Vector(1)};
  if (tau_kappa == tau_h) {
    const double tau = tau_kappa;
    const double den = 4.0 * m0 * m0 * w * w * w + 2.0 * g2 * m0 * tau * w * w * (w - 1.0) + g4 * tau * tau * (1.0 + 2.0 * w);
    if (std::abs(den) <= 1e-300) throw Error(ErrorCode::DegenerateR, "closed-form denominator vanishes");
    const double ratio = (g2 * tau + m0 * w * (w - 1.0)) / den;
    out.S1(0) = 0.5 * inv_g2_p * s * s / g2;
    out.S2(0) = -2.0 * tau * w * s * s / g * inv_g_p * ratio;
    out.S3(0) = 2.0 * tau * w * s * s_over_g2_p * ratio;
    return out;
  }
  const double tk = tau_kappa, th = tau_h;
  const double tk2 = tk * tk, th2 = th * th, tk3 = tk2 * tk, th3 = th2 * th, tk4 = tk2 * tk2, th4 = th2 * th2;
  const double tsum = tk + th;
  const double core = tk2 + th2 + tk * th * (w - 2.0);
  const double R = g4 * th4 * (tk2 + tk * th * w + th2 * w) + m0 * m0 * w * w * tsum * tsum * core +
                   g2 * m0 * th2 * w * (th3 * w + tk3 * (w - 2.0) + tk2 * th * w * (w - 2.0) + tk * th2 * (2.0 - 2.0 * w + w * w));
  const double scale = g4 * th4 * (tk2 + th2) + m0 * m0 * w * w * tsum * tsum * (tk2 + th2) + 1e-300;
  if (!(std::abs(R) > 1e-13 * scale)) throw Error(ErrorCode::DegenerateR, "R vanishes");
  const double J11 = s * s / (2.0 * m0 * g2 * R) *
                     (g4 * tk4 * (tk2 + tk * th * w + th2 * w) + m0 * m0 * w * w * tsum * tsum * core +
                      m0 * w * g2 * tsum * (th4 + tk2 * th2 * (w - 2.0) + tk4 * (w - 1.0) + tk3 * th * (2.0 - 3.0 * w + w * w)));
  const double J21 = s * s * tsum * w / (4.0 * g * R) *
                     (m0 * w * tsum * core + g2 * (tk4 + tk2 * th2 + th4 + tk3 * th * (w - 1.0)));
  const double J31 = -s * s * tsum * w / (4.0 * g * R) *
                     (-m0 * w * tsum * core + g2 * (tk4 + tk2 * th2 - th4 + tk3 * th * (w - 1.0)));
  const double J41 = 0.5 * s * w * tsum * (g2 * th4 + m0 * w * tsum * core) / R;
  const double J51 = -0.5 * s * w * tsum * (m0 * w * tsum * core - g2 * tk * th2 * (tk + th * (w - 1.0))) / R;
  out.S1(0) = m0 * inv_g2_p * J11;
  out.S2(0) = -tk * inv_g_p * (J21 + (1.0 - 2.0 / w) * J31);
  out.S3(0) = th * s_over_g2_p * (J41 + J51 / w);
  return out;
}

struct HomogenizeOptions {
  enum class Route { automatic, generic, closed_form };
  Route route = Route::automatic;
  bool allow_fd = true;
  bool check_b_lambda = true;
};

/// True when the system is scalar, h equals g at the probes and the family tag names a closed form.
inline bool closed_form_applicable(const GLESystem& sys) {
  if (sys.d() != 1 || sys.coeffs.q != 1 || sys.coeffs.r != 1) return false;
  if (sys.family.kind == NoiseFamily::Kind::custom) return false;
  std::vector<Vector> storage;
  for (const Vector& x : probes_or_default(sys, storage))
    if (std::abs(sys.coeffs.h(x)(0, 0) - sys.coeffs.g(x)(0, 0)) > 1e-12 * (1.0 + std::abs(sys.coeffs.g(x)(0, 0))))
      return false;
  return true;
}

inline HomogenizedSDE homogenized_sde(const GLESystem& sys, const HomogenizeOptions& opt = {}) {
  validate_system(sys);
  const EffectiveConstants K = effective_constants(sys);
  std::vector<Vector> storage;
  const auto& probes = probes_or_default(sys, storage);
  if (opt.check_b_lambda) {
    const BLambdaReport rep = check_b_lambda(sys, probes);
    if (!rep.pass) throw Error(ErrorCode::ModelValidationError, "B_lambda invertibility check failed on the probe grid");
    for (const Vector& x : probes)
      if (!spectral_check(assemble_gamma_hat(sys, x)).positive_stable)
        throw Error(ErrorCode::NotPositiveStable, "gamma_hat is not positive stable at a probe state");
  }
  HomogenizedSDE out;
  out.d = sys.d();
  out.noise_dim = static_cast<int>(sys.noise.noise_dim());
  const Matrix K1 = K.K1;
  const Matrix CGS = sys.noise.C * sys.noise.Gamma.partialPivLu().solve(sys.noise.Sigma);
  out.forcing = [sys, K1](const Vector& x) -> Vector { return theta(sys, x, K1).partialPivLu().solve(sys.coeffs.F(x)); };
  out.diffusion = [sys, K1, CGS](const Vector& x) -> Matrix {
    return theta(sys, x, K1).partialPivLu().solve(sys.coeffs.sigma(x) * CGS);
  };
  const bool allow_fd = opt.allow_fd;
  using Route = HomogenizeOptions::Route;
  if (opt.route == Route::closed_form) {
    if (!closed_form_applicable(sys))
      throw Error(ErrorCode::ModelValidationError, "closed-form route needs a scalar OU or harmonic model with h = g");
    if (sys.family.kind == NoiseFamily::Kind::ou) {
      out.provenance = Provenance::closed_form_1d_ou;
      out.components = [sys](const Vector& x) {
        return drift_1d_ou(scalar_coefficients(sys, x(0)), sys.m0, sys.tau_kappa, sys.tau_xi, sys.family.alpha);
      };
    } else {
      out.provenance = Provenance::closed_form_1d_harmonic;
      out.components = [sys](const Vector& x) {
        return drift_1d_harmonic(scalar_coefficients(sys, x(0)), sys.m0, sys.tau_kappa, sys.tau_xi, sys.family.omega);
      };
    }
    return out;
  }
  if (opt.route == Route::automatic && check_fdt(sys).holds) {
    out.provenance = Provenance::fdt;
    out.components = [sys, K1, allow_fd](const Vector& x) {
      const JBlocks j = j_blocks(sys, x);
      const ProductDerivatives dp = product_derivatives(sys, x, K1, allow_fd);
      DriftTerms s;
      s.S1 = sys.m0 * detail::contract(dp.dP1, j.J11);
      s.S2 = Vector::Zero(sys.d());
      s.S3 = Vector::Zero(sys.d());
      return s;
    };
    return out;
  }
  out.provenance = Provenance::generic;
  out.components = [sys, allow_fd](const Vector& x) { return noise_induced_drift(sys, x, allow_fd); };
  return out;
}

}  // namespace gleh
