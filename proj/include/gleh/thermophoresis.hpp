#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gleh/errors.hpp"
#include "gleh/expr.hpp"
#include "gleh/homogenize.hpp"
#include "gleh/model.hpp"
#include "gleh/simulate.hpp"

namespace gleh {

/// Boltzmann constant in J/K for the optional SI preset; tests run with kB = 1.
inline constexpr double kBoltzmannSI = 1.380649e-23;

/// One-dimensional particle in a temperature field T(x). The diffusion coefficient is either
/// given directly or follows the Stokes law D = kB T / (6 pi R mu(T)).
struct ThermoModel {
  Expr T;                   // temperature profile, variable "x"
  std::optional<Expr> D;    // diffusion profile, variable "x"
  std::optional<Expr> mu;   // viscosity law, variable "T"; constant mu0 when absent
  double mu0 = 1.0;
  double kB = 1.0;
  double R = 1.0;
  double m0 = 1.0;
  double tau = 1.0;
  NoiseFamily noise{NoiseFamily::Kind::ou, 1.0, 0.0};
  double a = 0.0;
  double b = 1.0;

  double r() const { return tau / m0; }
};

struct ValueAndSlope {
  double value = 0.0;
  double slope = 0.0;
};

inline void check_domain(const ThermoModel& m, double x) {
  const double slack = 1e-12 * std::max(1.0, m.b - m.a);
  if (!(x >= m.a - slack && x <= m.b + slack))
    throw Error(ErrorCode::DomainViolation, "x = " + std::to_string(x) + " lies outside the working interval");
}

inline ValueAndSlope temperature(const ThermoModel& m, double x) {
  const Dual t = m.T.eval_dual(&x, 0);
  if (!(t.v > 0.0)) throw Error(ErrorCode::DomainViolation, "temperature must be positive");
  return {t.v, t.d};
}

/// mu(T) and d mu / d T.
inline ValueAndSlope viscosity(const ThermoModel& m, double temp) {
  if (!m.mu) return {m.mu0, 0.0};
  const Dual v = m.mu->eval_dual(&temp, 0);
  if (!(v.v > 0.0)) throw Error(ErrorCode::DomainViolation, "viscosity must be positive");
  return {v.v, v.d};
}

/// D(x) and D'(x); the Stokes branch uses D' = kB T' (mu - T mu') / (6 pi R mu^2).
inline ValueAndSlope diffusion_coefficient(const ThermoModel& m, double x) {
  if (m.D) {
    const Dual d = m.D->eval_dual(&x, 0);
    if (!(d.v > 0.0)) throw Error(ErrorCode::DomainViolation, "diffusion coefficient must be positive");
    return {d.v, d.d};
  }
  const ValueAndSlope t = temperature(m, x);
  const ValueAndSlope mu = viscosity(m, t.value);
  const double c = 6.0 * std::numbers::pi * m.R;
  return {m.kB * t.value / (c * mu.value), m.kB * t.slope * (mu.value - t.value * mu.slope) / (c * mu.value * mu.value)};
}

struct DampingNoise {
  double gamma = 0.0;
  double sigma = 0.0;
};

/// gamma = kB T / D and sigma = kB T sqrt(2 / D).
inline DampingNoise damping_and_noise(const ThermoModel& m, double x) {
  check_domain(m, x);
  const double t = temperature(m, x).value;
  const double d = diffusion_coefficient(m, x).value;
  return {m.kB * t / d, m.kB * t * std::sqrt(2.0) / std::sqrt(d)};
}

/// Weight c(x) in b(x) = D' - c(x) D T'/T for the active noise kind.
inline double thermal_weight(const ThermoModel& m, double x) {
  const double t = temperature(m, x).value;
  const double d = diffusion_coefficient(m, x).value;
  const double kT = m.kB * t;
  if (m.noise.kind == NoiseFamily::Kind::ou) {
    const double a = m.noise.alpha;
    return 2.0 * m.m0 * a * d / (m.tau * kT + 2.0 * m.m0 * a * d);
  }
  if (m.noise.kind == NoiseFamily::Kind::harmonic) {
    const double w = m.noise.omega * m.noise.omega;
    const double w2 = w * w, w3 = w2 * w;
    const double num = 4.0 * m.m0 * m.m0 * w3 * d * d + m.tau * m.tau * kT * kT;
    const double den = 4.0 * m.m0 * m.m0 * w3 * d * d + 2.0 * kT * m.m0 * m.tau * w2 * (w - 1.0) * d +
                       m.tau * m.tau * (1.0 + 2.0 * w) * kT * kT;
    if (!(std::abs(den) > 1e-300)) throw Error(ErrorCode::DegenerateDenominator, "harmonic drift denominator vanishes");
    return num / den;
  }
  throw Error(ErrorCode::WrongNoiseKind, "thermophoresis needs OU or harmonic noise");
}

/// b1 = D' - [2 m0 alpha D^2 / (tau kB T + 2 m0 alpha D)] T'/T.
inline double drift_b1(const ThermoModel& m, double x) {
  if (m.noise.kind != NoiseFamily::Kind::ou) throw Error(ErrorCode::WrongNoiseKind, "b1 needs OU noise");
  check_domain(m, x);
  const ValueAndSlope t = temperature(m, x), d = diffusion_coefficient(m, x);
  return d.slope - thermal_weight(m, x) * d.value * t.slope / t.value;
}

/// b2 = D' - (4 m0^2 W^3 D^2 + tau^2 (kB T)^2) D / den T'/T with W = Omega^2.
inline double drift_b2(const ThermoModel& m, double x) {
  if (m.noise.kind != NoiseFamily::Kind::harmonic) throw Error(ErrorCode::WrongNoiseKind, "b2 needs harmonic noise");
  check_domain(m, x);
  const ValueAndSlope t = temperature(m, x), d = diffusion_coefficient(m, x);
  return d.slope - thermal_weight(m, x) * d.value * t.slope / t.value;
}

inline double thermo_drift(const ThermoModel& m, double x) {
  return m.noise.kind == NoiseFamily::Kind::ou ? drift_b1(m, x) : drift_b2(m, x);
}

/// Limiting scalar SDE dX = b(X) dt + sqrt(2 D(X)) dW.
inline ScalarSDE thermo_limit_sde(const ThermoModel& m) {
  return {[m](double x) { return thermo_drift(m, x); },
          [m](double x) { return std::sqrt(2.0 * diffusion_coefficient(m, x).value); }};
}

/// 1D GLE with g = h = sqrt(gamma), sigma = kB T sqrt(2/D), F = 0 and tau_kappa = tau_xi = tau.
inline GLESystem to_gle_system(const ThermoModel& m) {
  GLESystem sys;
  auto& c = sys.coeffs;
  c.d = c.q = c.r = 1;
  const auto gamma_slope = [m](double x) {
    const ValueAndSlope t = temperature(m, x), d = diffusion_coefficient(m, x);
    const double gam = m.kB * t.value / d.value;
    const double dgam = m.kB * (t.slope * d.value - t.value * d.slope) / (d.value * d.value);
    return std::pair<double, double>{gam, dgam};
  };
  c.F = [](const Vector&) { return Vector::Zero(1).eval(); };
  c.g = [m](const Vector& x) { return Matrix::Constant(1, 1, std::sqrt(damping_and_noise(m, x(0)).gamma)); };
  c.h = c.g;
  c.sigma = [m](const Vector& x) { return Matrix::Constant(1, 1, damping_and_noise(m, x(0)).sigma); };
  c.dg = [gamma_slope](const Vector& x) {
    const auto [gam, dgam] = gamma_slope(x(0));
    return std::vector<Matrix>{Matrix::Constant(1, 1, dgam / (2.0 * std::sqrt(gam)))};
  };
  c.dh = c.dg;
  c.dsigma = [m](const Vector& x) {
    const ValueAndSlope t = temperature(m, x(0)), d = diffusion_coefficient(m, x(0));
    const double v = std::sqrt(2.0) * m.kB * (t.slope / std::sqrt(d.value) - 0.5 * t.value * d.slope / std::pow(d.value, 1.5));
    return std::vector<Matrix>{Matrix::Constant(1, 1, v)};
  };
  Matrix rate(1, 1);
  TriplePair p;
  if (m.noise.kind == NoiseFamily::Kind::ou) {
    rate(0, 0) = m.noise.alpha;
    p = ou_realization(rate);
  } else if (m.noise.kind == NoiseFamily::Kind::harmonic) {
    rate(0, 0) = m.noise.omega;
    p = harmonic_realization(rate, 1.0);
  } else {
    throw Error(ErrorCode::WrongNoiseKind, "thermophoresis needs OU or harmonic noise");
  }
  sys.kernel = p.kernel;
  sys.noise = p.noise;
  sys.m0 = m.m0;
  sys.tau_kappa = sys.tau_xi = m.tau;
  sys.family = m.noise;
  sys.probes = sobol_probes(Vector::Constant(1, m.a), Vector::Constant(1, m.b));
  return sys;
}

namespace detail {

/// Adaptive Gauss-Kronrod; max_depth = 0 gives a single 31-point pass.
template <class F>
double integrate_checked(F f, double a, double b, unsigned max_depth = 12) {
  if (a == b) return 0.0;
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, 1e-12, &err);
  if (!std::isfinite(v) || err > 1e-8 * std::max(1.0, std::abs(v)))
    throw Error(ErrorCode::QuadratureFailure, "adaptive quadrature did not reach the tolerance");
  return v;
}

}  // namespace detail

/// Normalized stationary density with reflecting ends: rho ~ exp(-int_a^x c(y) T'(y)/T(y) dy).
class StationaryDensity {
 public:
  StationaryDensity(const ThermoModel& m, double a, double b, int nodes = 400) : m_(m), a_(a), b_(b) {
    if (!(a < b)) throw Error(ErrorCode::ConfigParseError, "stationary density needs a < b");
    // Exponent and mass accumulated node to node with one Gauss-Kronrod pass per cell.
    for (int i = 0; i <= nodes; ++i) xs_.push_back(a + (b - a) * i / nodes);
    phi_.assign(xs_.size(), 0.0);
    mass_.assign(xs_.size(), 0.0);
    for (std::size_t i = 1; i < xs_.size(); ++i) phi_[i] = phi_[i - 1] + detail::integrate_checked([this](double y) { return rate(y); }, xs_[i - 1], xs_[i], 0);
    for (std::size_t i = 1; i < xs_.size(); ++i)
      mass_[i] = mass_[i - 1] + detail::integrate_checked([this](double x) { return unnormalized(x); }, xs_[i - 1], xs_[i], 0);
    z_ = mass_.back();
    if (!(z_ > 0.0) || !std::isfinite(z_)) throw Error(ErrorCode::QuadratureFailure, "normalization is not finite");
  }

  double density(double x) const { return unnormalized(x) / z_; }

  double cdf(double x) const {
    if (x <= a_) return 0.0;
    if (x >= b_) return 1.0;
    const std::size_t i = locate(x);
    return (mass_[i] + detail::integrate_checked([this](double y) { return unnormalized(y); }, xs_[i], x, 0)) / z_;
  }

  double total_mass() const {
    return detail::integrate_checked([this](double y) { return density(y); }, a_, b_);
  }

  std::vector<std::pair<double, double>> table(int n) const {
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < n; ++i) {
      const double x = n == 1 ? a_ : a_ + (b_ - a_) * i / (n - 1);
      out.emplace_back(x, density(x));
    }
    return out;
  }

 private:
  double rate(double y) const {
    const ValueAndSlope t = temperature(m_, y);
    return thermal_weight(m_, y) * t.slope / t.value;
  }

  std::size_t locate(double x) const {
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - xs_.begin()) - 1));
  }

  double exponent(double x) const {
    const std::size_t i = locate(x);
    return phi_[i] + detail::integrate_checked([this](double y) { return rate(y); }, xs_[i], x, 0);
  }

  double unnormalized(double x) const { return std::exp(-exponent(x)); }

  ThermoModel m_;
  double a_, b_;
  std::vector<double> xs_, phi_, mass_;
  double z_ = 1.0;
};

inline std::vector<std::pair<double, double>> stationary_density(const ThermoModel& m, double a, double b, int grid) {
  return StationaryDensity(m, a, b).table(grid);
}

/// Positive ratios r = tau/m0 at which the drift vanishes at x: one closed form for OU noise,
/// the positive real roots of a quadratic in r for harmonic noise.
inline std::vector<double> critical_ratio(const ThermoModel& m, double x) {
  check_domain(m, x);
  const ValueAndSlope t = temperature(m, x), d = diffusion_coefficient(m, x);
  const double kT = m.kB * t.value;
  const double u = d.value * t.slope / t.value;
  double gap = d.slope - u;
  if (std::abs(gap) <= 1e-12 * (std::abs(d.slope) + std::abs(u))) gap = 0.0;
  std::vector<double> roots;
  auto keep = [&](double r) {
    if (std::isfinite(r) && r > 0.0) roots.push_back(r);
  };
  if (m.noise.kind == NoiseFamily::Kind::ou) {
    if (d.slope != 0.0) keep(-2.0 * m.noise.alpha * d.value * gap / (d.slope * kT));
  } else if (m.noise.kind == NoiseFamily::Kind::harmonic) {
    const double w = m.noise.omega * m.noise.omega;
    const double A = kT * kT * (d.slope * (1.0 + 2.0 * w) - u);
    const double B = 2.0 * d.slope * kT * w * w * (w - 1.0) * d.value;
    const double C = 4.0 * w * w * w * d.value * d.value * gap;
    if (A == 0.0) {
      if (B != 0.0) keep(-C / B);
    } else {
      const double disc = B * B - 4.0 * A * C;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double qq = -0.5 * (B + std::copysign(sq, B));
        if (qq != 0.0) {
          keep(qq / A);
          keep(C / qq);
        } else {
          keep(0.0);
        }
      }
    }
  } else {
    throw Error(ErrorCode::WrongNoiseKind, "thermophoresis needs OU or harmonic noise");
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  return roots;
}

}  // namespace gleh
