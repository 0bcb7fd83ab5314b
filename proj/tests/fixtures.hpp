#pragma once

// Model builders shared by the unit tests and the acceptance binary.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>

#include "gleh/gleh.hpp"
#include "oracles.hpp"

namespace fixture {

using gleh::Matrix;
using gleh::Vector;

/// Scalar function with its derivative.
struct Smooth {
  std::function<double(double)> f;
  std::function<double(double)> df;
};

inline Smooth constant(double c) {
  return {[c](double) { return c; }, [](double) { return 0.0; }};
}

/// sqrt(a + b sin(k x)), a > |b|.
inline Smooth sqrt_sin(double a, double b, double k) {
  return {[=](double x) { return std::sqrt(a + b * std::sin(k * x)); },
          [=](double x) { return b * k * std::cos(k * x) / (2.0 * std::sqrt(a + b * std::sin(k * x))); }};
}

/// a + b tanh(k x), a > |b|.
inline Smooth tanh_profile(double a, double b, double k) {
  return {[=](double x) { return a + b * std::tanh(k * x); },
          [=](double x) {
            const double c = std::cosh(k * x);
            return b * k / (c * c);
          }};
}

/// a exp(b x)
inline Smooth exponential(double a, double b) {
  return {[=](double x) { return a * std::exp(b * x); }, [=](double x) { return a * b * std::exp(b * x); }};
}

/// a + b x^2
inline Smooth quadratic(double a, double b) {
  return {[=](double x) { return a + b * x * x; }, [=](double x) { return 2.0 * b * x; }};
}

inline Smooth scaled(const Smooth& s, double c) {
  return {[s, c](double x) { return c * s.f(x); }, [s, c](double x) { return c * s.df(x); }};
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// Scalar GLE with h = g, F = -x and the given triples and time scales.
inline gleh::GLESystem scalar_system(const Smooth& g, const Smooth& sigma, const gleh::TriplePair& triples, double m0,
                                     double tau_kappa, double tau_xi, gleh::NoiseFamily family, double lo = -2.0,
                                     double hi = 2.0) {
  gleh::GLESystem sys;
  auto& c = sys.coeffs;
  c.d = c.q = c.r = 1;
  c.F = [](const Vector& x) { return Vector(-x); };
  c.g = [g](const Vector& x) { return scalar(g.f(x(0))); };
  c.h = c.g;
  c.sigma = [sigma](const Vector& x) { return scalar(sigma.f(x(0))); };
  c.dg = [g](const Vector& x) { return std::vector<Matrix>{scalar(g.df(x(0)))}; };
  c.dh = c.dg;
  c.dsigma = [sigma](const Vector& x) { return std::vector<Matrix>{scalar(sigma.df(x(0)))}; };
  sys.kernel = triples.kernel;
  sys.noise = triples.noise;
  sys.m0 = m0;
  sys.tau_kappa = tau_kappa;
  sys.tau_xi = tau_xi;
  sys.family = family;
  sys.probes = gleh::sobol_probes(Vector::Constant(1, lo), Vector::Constant(1, hi));
  return sys;
}

inline gleh::GLESystem scalar_ou(const Smooth& g, const Smooth& sigma, double alpha, double m0, double tk, double tx) {
  return scalar_system(g, sigma, gleh::ou_realization(scalar(alpha)), m0, tk, tx,
                       {gleh::NoiseFamily::Kind::ou, alpha, 0.0});
}

inline gleh::GLESystem scalar_harmonic(const Smooth& g, const Smooth& sigma, double omega, double m0, double tk,
                                       double th) {
  return scalar_system(g, sigma, gleh::harmonic_realization(scalar(omega), 1.0), m0, tk, th,
                       {gleh::NoiseFamily::Kind::harmonic, 0.0, omega});
}

/// Smooth d x q matrix field G(x) = A + sum_l sin(w_l x_l + p_l) B_l with analytic Jacobian.
struct MatrixFieldSpec {
  Matrix A;
  std::vector<Matrix> B;
  Vector w, p;

  Matrix value(const Vector& x) const {
    Matrix out = A;
    for (Eigen::Index l = 0; l < x.size(); ++l) out += std::sin(w(l) * x(l) + p(l)) * B[static_cast<std::size_t>(l)];
    return out;
  }
  std::vector<Matrix> jacobian(const Vector& x) const {
    std::vector<Matrix> out;
    for (Eigen::Index l = 0; l < x.size(); ++l)
      out.push_back(w(l) * std::cos(w(l) * x(l) + p(l)) * B[static_cast<std::size_t>(l)]);
    return out;
  }
};

/// Random field around a well-conditioned constant part, perturbation scaled by `amp`.
inline MatrixFieldSpec random_field(std::mt19937_64& rng, int rows, int cols, int d, double amp) {
  MatrixFieldSpec s;
  s.A = oracle::random_matrix(rng, rows, cols);
  if (rows == cols) s.A += 2.0 * Matrix::Identity(rows, cols);
  for (int l = 0; l < d; ++l) s.B.push_back(amp * oracle::random_matrix(rng, rows, cols));
  std::uniform_real_distribution<double> u(0.5, 2.0), ph(0.0, 3.0);
  s.w.resize(d);
  s.p.resize(d);
  for (int l = 0; l < d; ++l) {
    s.w(l) = u(rng);
    s.p(l) = ph(rng);
  }
  return s;
}

inline std::vector<Matrix> transpose_all(std::vector<Matrix> v) {
  for (auto& m : v) m.transposeInPlace();
  return v;
}

/// Random triple with positive-stable Gamma of size n and output dimension q.
inline gleh::RealizationTriple random_triple(std::mt19937_64& rng, int n, int q) {
  const Matrix G = oracle::random_positive_stable(rng, n);
  const Matrix S = oracle::random_matrix(rng, n, n) + 1.5 * Matrix::Identity(n, n);
  const Matrix M = gleh::solve_lyapunov(G, S * S.transpose());
  Matrix C = oracle::random_matrix(rng, q, n);
  C.leftCols(std::min(n, q)) += Matrix::Identity(q, std::min(n, q));
  return gleh::make_triple(G, M, C, S);
}

/// Random d-dimensional model satisfying the fluctuation-dissipation relation:
/// h = g^T, sigma = lambda g, equal time scales and a noise triple (Gamma, c M, C, sqrt(c) Sigma).
inline gleh::GLESystem random_fdt_system(std::mt19937_64& rng, int d, int q, int n) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const MatrixFieldSpec G = random_field(rng, d, q, d, 0.3);
  const double lambda = u(rng), c = u(rng), tau = u(rng);
  gleh::GLESystem sys;
  auto& cf = sys.coeffs;
  cf.d = d;
  cf.q = cf.r = q;
  cf.F = [](const Vector& x) { return Vector(-x); };
  cf.g = [G](const Vector& x) { return G.value(x); };
  cf.h = [G](const Vector& x) { return Matrix(G.value(x).transpose()); };
  cf.sigma = [G, lambda](const Vector& x) { return Matrix(lambda * G.value(x)); };
  cf.dg = [G](const Vector& x) { return G.jacobian(x); };
  cf.dh = [G](const Vector& x) { return transpose_all(G.jacobian(x)); };
  cf.dsigma = [G, lambda](const Vector& x) {
    auto j = G.jacobian(x);
    for (auto& m : j) m *= lambda;
    return j;
  };
  sys.kernel = random_triple(rng, n, q);
  sys.noise = gleh::make_triple(sys.kernel.Gamma, c * sys.kernel.M, sys.kernel.C, Matrix(std::sqrt(c) * sys.kernel.Sigma));
  sys.m0 = u(rng);
  sys.tau_kappa = sys.tau_xi = tau;
  sys.probes = gleh::sobol_probes(Vector::Constant(d, -1.0), Vector::Constant(d, 1.0), 16);
  return sys;
}

/// True when gamma_hat is positive stable and theta well conditioned on a grid over [-1, 1]^d and the probes.
inline bool well_posed_on_box(const gleh::GLESystem& sys) {
  std::vector<Vector> pts = sys.probes;
  const int d = sys.d();
  int total = 1;
  for (int l = 0; l < d; ++l) total *= 5;
  for (int k = 0; k < total; ++k) {
    Vector x(d);
    for (int l = 0, r = k; l < d; ++l, r /= 5) x(l) = -1.0 + 0.5 * (r % 5);
    pts.push_back(x);
  }
  const Matrix K1 = gleh::triple_integral(sys.kernel);
  for (const auto& x : pts) {
    const Matrix th = sys.coeffs.g(x) * K1 * sys.coeffs.h(x);
    if (gleh::condition_number(th) > 1e3) return false;
    if (gleh::spectral_check(gleh::assemble_gamma_hat(sys, x)).min_real_part < 1e-2) return false;
  }
  return true;
}

/// Random d-dimensional model without any FDT structure: h = g^T + perturbation, independent sigma
/// and time scales. Candidates are redrawn until the model is well posed on [-1, 1]^d.
inline gleh::GLESystem random_generic_system(std::mt19937_64& rng, int d, int q, int r, int n1, int n2) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const MatrixFieldSpec G = random_field(rng, d, q, d, 0.3);
    MatrixFieldSpec H = random_field(rng, q, d, d, 0.3);
    H.A = 0.3 * oracle::random_matrix(rng, q, d);
    const MatrixFieldSpec S = random_field(rng, d, r, d, 0.3);
    gleh::GLESystem sys;
    auto& cf = sys.coeffs;
    cf.d = d;
    cf.q = q;
    cf.r = r;
    cf.F = [](const Vector& x) { return Vector(-x); };
    cf.g = [G](const Vector& x) { return G.value(x); };
    cf.h = [G, H](const Vector& x) { return Matrix(G.value(x).transpose() + H.value(x)); };
    cf.sigma = [S](const Vector& x) { return S.value(x); };
    cf.dg = [G](const Vector& x) { return G.jacobian(x); };
    cf.dh = [G, H](const Vector& x) {
      auto j = transpose_all(G.jacobian(x));
      const auto k = H.jacobian(x);
      for (std::size_t l = 0; l < j.size(); ++l) j[l] += k[l];
      return j;
    };
    cf.dsigma = [S](const Vector& x) { return S.jacobian(x); };
    sys.kernel = random_triple(rng, n1, q);
    sys.noise = random_triple(rng, n2, r);
    sys.m0 = u(rng);
    sys.tau_kappa = u(rng);
    sys.tau_xi = u(rng);
    sys.probes = gleh::sobol_probes(Vector::Constant(d, -1.0), Vector::Constant(d, 1.0), 16);
    if (well_posed_on_box(sys)) return sys;
  }
  throw std::runtime_error("random_generic_system: no well-posed candidate");
}

/// The scalar OU benchmark g = h = sigma = sqrt(2 + sin x), F = 0, unit constants.
inline gleh::GLESystem ou_benchmark() {
  gleh::GLESystem sys = scalar_ou(sqrt_sin(2.0, 1.0, 1.0), sqrt_sin(2.0, 1.0, 1.0), 1.0, 1.0, 1.0, 1.0);
  sys.coeffs.F = [](const Vector& x) { return Vector::Zero(x.size()).eval(); };
  sys.probes = gleh::sobol_probes(Vector::Constant(1, -3.0), Vector::Constant(1, 3.0));
  return sys;
}

/// Constant-viscosity thermophoresis on (0, 1) with T = 1 + x/2 and OU noise.
inline gleh::ThermoModel thermo_constant_mu(double alpha, double tau, double m0 = 1.0) {
  gleh::ThermoModel m;
  m.T = gleh::Expr::parse("1 + x/2");
  m.mu0 = 1.0;
  m.kB = 1.0;
  m.R = 1.0 / (6.0 * std::numbers::pi);
  m.m0 = m0;
  m.tau = tau;
  m.noise = {gleh::NoiseFamily::Kind::ou, alpha, 0.0};
  m.a = 0.0;
  m.b = 1.0;
  return m;
}

}  // namespace fixture
