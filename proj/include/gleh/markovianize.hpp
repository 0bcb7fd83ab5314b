#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gleh/errors.hpp"
#include "gleh/matrixlab.hpp"
#include "gleh/model.hpp"

namespace gleh {

/// Offsets of the v, y and beta blocks inside the extended velocity vector (v, y, beta).
struct BlockLayout {
  int d = 0;
  int d1 = 0;
  int d2 = 0;

  int v() const { return 0; }
  int y() const { return d; }
  int beta() const { return d + d1; }
  int n() const { return d + d1 + d2; }
};

inline BlockLayout layout_of(const GLESystem& sys) {
  return {sys.d(), static_cast<int>(sys.kernel.state_dim()), static_cast<int>(sys.noise.state_dim())};
}

/// Block matrix [[0, g C1/m0, -sigma C2/m0], [-M1 C1^T h/tau_k, Gamma1/tau_k, 0], [0, 0, Gamma2/tau_xi]].
inline Matrix assemble_gamma_hat(const GLESystem& sys, const Vector& x) {
  const BlockLayout L = layout_of(sys);
  Matrix G = Matrix::Zero(L.n(), L.n());
  const Matrix g = sys.coeffs.g(x), h = sys.coeffs.h(x), s = sys.coeffs.sigma(x);
  G.block(L.v(), L.y(), L.d, L.d1) = g * sys.kernel.C / sys.m0;
  G.block(L.v(), L.beta(), L.d, L.d2) = -s * sys.noise.C / sys.m0;
  G.block(L.y(), L.v(), L.d1, L.d) = -sys.kernel.M * sys.kernel.C.transpose() * h / sys.tau_kappa;
  G.block(L.y(), L.y(), L.d1, L.d1) = sys.kernel.Gamma / sys.tau_kappa;
  G.block(L.beta(), L.beta(), L.d2, L.d2) = sys.noise.Gamma / sys.tau_xi;
  return G;
}

inline Vector assemble_F_hat(const GLESystem& sys, const Vector& x) {
  const BlockLayout L = layout_of(sys);
  Vector f = Vector::Zero(L.n());
  f.segment(L.v(), L.d) = sys.coeffs.F(x) / sys.m0;
  return f;
}

inline Matrix assemble_sigma_hat(const GLESystem& sys) {
  const BlockLayout L = layout_of(sys);
  Matrix s = Matrix::Zero(L.n(), sys.noise.noise_dim());
  s.block(L.beta(), 0, L.d2, s.cols()) = sys.noise.Sigma / sys.tau_xi;
  return s;
}

/// The SDE system dx = v dt, eps dv_hat = (-gamma_hat(x) v_hat + F_hat(x)) dt + sigma_hat dW.
class ExtendedSystem {
 public:
  ExtendedSystem(GLESystem sys, double epsilon) : sys_(std::move(sys)), eps_(epsilon) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::ModelValidationError, "epsilon must be positive");
    const BlockLayout L = layout_of(sys_);
    if (sys_.kernel.C.rows() != sys_.coeffs.q || sys_.noise.C.rows() != sys_.coeffs.r || L.d <= 0)
      throw Error(ErrorCode::DimensionMismatch, "triples do not match coefficient dimensions");
    layout_ = L;
    sigma_hat_ = assemble_sigma_hat(sys_);
  }

  const GLESystem& system() const { return sys_; }
  double epsilon() const { return eps_; }
  const BlockLayout& layout() const { return layout_; }
  int noise_dim() const { return static_cast<int>(sigma_hat_.cols()); }

  Matrix gamma_hat(const Vector& x) const { return assemble_gamma_hat(sys_, x); }
  Vector F_hat(const Vector& x) const { return assemble_F_hat(sys_, x); }
  const Matrix& sigma_hat() const { return sigma_hat_; }

  /// Covariance of the stationary start beta_0 ~ N(0, M2 / (tau_xi eps)).
  Matrix initial_beta_covariance() const { return sys_.noise.M / (sys_.tau_xi * eps_); }

 private:
  GLESystem sys_;
  double eps_;
  BlockLayout layout_;
  Matrix sigma_hat_;
};

inline ExtendedSystem build_extended(const GLESystem& sys, double epsilon) { return ExtendedSystem(sys, epsilon); }

/// theta(x) = g(x) K1 h(x); throws SingularTheta when the condition number reaches 1e12.
inline Matrix theta(const GLESystem& sys, const Vector& x, const Matrix& K1) {
  const Matrix th = sys.coeffs.g(x) * K1 * sys.coeffs.h(x);
  if (!th.allFinite() || !(condition_number(th) < 1e12)) {
    std::ostringstream os;
    os << "theta is singular at x = [" << x.transpose() << "]";
    throw Error(ErrorCode::SingularTheta, os.str());
  }
  return th;
}

inline Matrix theta(const GLESystem& sys, const Vector& x) { return theta(sys, x, triple_integral(sys.kernel)); }

/// Closed-form block inverse of gamma_hat built from theta^{-1}.
inline Matrix gamma_hat_inverse(const GLESystem& sys, const Vector& x) {
  const BlockLayout L = layout_of(sys);
  const Matrix K1 = triple_integral(sys.kernel);
  const Matrix thi = theta(sys, x, K1).inverse();
  const Matrix g = sys.coeffs.g(x), h = sys.coeffs.h(x), s = sys.coeffs.sigma(x);
  const auto& k = sys.kernel;
  const auto& n = sys.noise;
  const Matrix G1i = k.Gamma.inverse(), G2i = n.Gamma.inverse();
  const Matrix MCh = k.M * k.C.transpose() * h;
  const Matrix sCG2 = s * n.C * G2i;
  Matrix inv = Matrix::Zero(L.n(), L.n());
  inv.block(L.v(), L.v(), L.d, L.d) = sys.m0 * thi;
  inv.block(L.v(), L.y(), L.d, L.d1) = -sys.tau_kappa * thi * g * k.C * G1i;
  inv.block(L.v(), L.beta(), L.d, L.d2) = sys.tau_xi * thi * sCG2;
  inv.block(L.y(), L.v(), L.d1, L.d) = sys.m0 * G1i * MCh * thi;
  inv.block(L.y(), L.y(), L.d1, L.d1) =
      sys.tau_kappa * G1i * (Matrix::Identity(L.d1, L.d1) - MCh * thi * g * k.C * G1i);
  inv.block(L.y(), L.beta(), L.d1, L.d2) = sys.tau_xi * G1i * MCh * thi * sCG2;
  inv.block(L.beta(), L.beta(), L.d2, L.d2) = sys.tau_xi * G2i;
  return inv;
}

struct BLambdaReport {
  std::vector<Complex> lambdas;
  std::vector<std::vector<double>> min_singular;  // [probe][lambda]
  double min_value = std::numeric_limits<double>::infinity();
  double threshold = 1e-8;
  bool pass = false;
};

/// 12 log-spaced radii in [1e-3, 1e3] times 9 angles strictly inside (-pi/2, pi/2).
inline std::vector<Complex> default_lambda_grid() {
  std::vector<Complex> out;
  for (int i = 0; i < 12; ++i) {
    const double r = std::pow(10.0, -3.0 + 6.0 * i / 11.0);
    for (int k = 0; k < 9; ++k) {
      const double phi = -std::numbers::pi / 2 + std::numbers::pi * (k + 1) / 10.0;
      out.push_back(std::polar(r, phi));
    }
  }
  return out;
}

/// Samples the min singular value of B = I + g kappa~(lambda tau_k) h / (lambda m0),
/// kappa~(z) = C1 (z I + Gamma1)^{-1} M1 C1^T. A sampling heuristic, not a proof.
inline BLambdaReport check_b_lambda(const GLESystem& sys, const std::vector<Vector>& probes,
                                    const std::vector<Complex>& lambdas = default_lambda_grid(),
                                    double threshold = 1e-8) {
  BLambdaReport rep;
  rep.lambdas = lambdas;
  rep.threshold = threshold;
  const auto& k = sys.kernel;
  const CMatrix G1 = k.Gamma.cast<Complex>();
  const CMatrix MC = (k.M * k.C.transpose()).cast<Complex>();
  const CMatrix C1 = k.C.cast<Complex>();
  const Eigen::Index d1 = k.Gamma.rows();
  const int d = sys.d();
  for (const Vector& x : probes) {
    const CMatrix g = sys.coeffs.g(x).cast<Complex>(), h = sys.coeffs.h(x).cast<Complex>();
    std::vector<double> row;
    for (const Complex& lam : lambdas) {
      const Complex z = lam * sys.tau_kappa;
      const CMatrix res = (z * CMatrix::Identity(d1, d1) + G1).partialPivLu().solve(MC);
      const CMatrix B = CMatrix::Identity(d, d) + g * (C1 * res) * h / (lam * sys.m0);
      const double sv = min_singular_value(B);
      row.push_back(sv);
      rep.min_value = std::min(rep.min_value, sv);
    }
    rep.min_singular.push_back(std::move(row));
  }
  rep.pass = !probes.empty() && !lambdas.empty() && rep.min_value > threshold;
  return rep;
}

}  // namespace gleh
