#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gleh/errors.hpp"
#include "gleh/matrixlab.hpp"
#include "gleh/model.hpp"
#include "gleh/simulate.hpp"

namespace gleh {

/// Target kernel for the Debye bath: ou(alpha) or harmonic(Omega, tau).
struct BathTarget {
  enum class Kind { ou, harmonic };
  Kind kind = Kind::ou;
  double alpha = 1.0;
  double omega = 1.0;
  double tau = 1.0;

  /// |c(w)|^2 for the Debye density n(w) = 2 w^2 / pi.
  double coupling_sq(double w) const {
    if (kind == Kind::ou) return alpha * alpha / (alpha * alpha + w * w);
    const double o2 = omega * omega, o4 = o2 * o2, tw = tau * w;
    const double a = o2 - tw * tw;
    return o4 / (a * a + o4 * tw * tw);
  }

  double kernel(double t) const {
    if (kind == Kind::ou) return alpha * std::exp(-alpha * std::abs(t));
    return harmonic_kernel_closed_form(omega, tau, t);
  }

  double fastest_rate() const {
    if (kind == Kind::ou) return alpha;
    return spectral_radius(harmonic_realization(Matrix::Constant(1, 1, omega), tau).noise.Gamma);
  }
};

/// Particle of mass m in potential U coupled through f(x) to N oscillators.
/// H = p^2/2m + U(x) + sum_k [p_k^2/2 + w_k^2/2 (x_k - c_k f(x)/w_k^2)^2].
struct BathModel {
  std::vector<double> omegas;
  std::vector<double> couplings;
  double beta = 1.0;
  double mass = 1.0;
  std::function<double(double)> U = [](double) { return 0.0; };
  std::function<double(double)> dU = [](double) { return 0.0; };
  std::function<double(double)> f = [](double x) { return x; };
  std::function<double(double)> df = [](double) { return 1.0; };

  std::size_t N() const { return omegas.size(); }
  double kT() const { return std::isinf(beta) ? 0.0 : 1.0 / beta; }
  double omega_max() const {
    double m = 0.0;
    for (double w : omegas) m = std::max(m, w);
    return m;
  }
};

inline void validate_bath(const BathModel& m) {
  if (m.omegas.size() != m.couplings.size())
    throw Error(ErrorCode::DimensionMismatch, "omegas and couplings differ in length");
  for (std::size_t k = 0; k < m.N(); ++k)
    if (!(m.omegas[k] > 0.0) || !std::isfinite(m.couplings[k]))
      throw Error(ErrorCode::ModelValidationError, "bath frequencies must be positive and couplings finite");
  if (!(m.beta > 0.0)) throw Error(ErrorCode::ModelValidationError, "inverse temperature must be positive");
  if (!(m.mass > 0.0)) throw Error(ErrorCode::ModelValidationError, "particle mass must be positive");
}

/// Midpoint nodes w_k = (k + 1/2) dw on [0, w_max]; c_k^2 / w_k^2 = (2/pi) |c(w_k)|^2 dw.
inline BathModel debye_sampling(const BathTarget& target, int N, double omega_max = std::numeric_limits<double>::quiet_NaN()) {
  if (N < 10) throw Error(ErrorCode::InsufficientModes, "Debye sampling needs at least 10 modes, got " + std::to_string(N));
  if (std::isnan(omega_max)) omega_max = 50.0 * target.fastest_rate();
  if (!(omega_max > 0.0) || !std::isfinite(omega_max))
    throw Error(ErrorCode::ModelValidationError, "omega_max must be positive and finite");
  BathModel m;
  const double dw = omega_max / N;
  for (int k = 0; k < N; ++k) {
    const double w = (k + 0.5) * dw;
    const double weight = 2.0 / std::numbers::pi * target.coupling_sq(w) * dw;
    m.omegas.push_back(w);
    m.couplings.push_back(w * std::sqrt(weight));
  }
  return m;
}

/// kappa_N(t) = sum_k c_k^2 / w_k^2 cos(w_k t).
inline double kernel_sum(const BathModel& m, double t) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.N(); ++k) {
    const double w = m.omegas[k];
    s += m.couplings[k] * m.couplings[k] / (w * w) * std::cos(w * t);
  }
  return s;
}

/// Limit of the kernel sum as N grows with w_max fixed: (2/pi) int_0^{w_max} |c(w)|^2 cos(w t) dw.
inline double truncated_kernel(const BathTarget& target, double omega_max, double t) {
  if (target.kind == BathTarget::Kind::ou && t == 0.0)
    return target.alpha * 2.0 / std::numbers::pi * std::atan(omega_max / target.alpha);
  double err = 0.0;
  const auto fn = [&](double w) { return 2.0 / std::numbers::pi * target.coupling_sq(w) * std::cos(w * t); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(fn, 0.0, omega_max, 20, 1e-13, &err);
  if (!std::isfinite(v) || err > 1e-9 * std::max(1.0, std::abs(v)))
    throw Error(ErrorCode::QuadratureFailure, "truncated kernel quadrature did not converge");
  return v;
}

struct BathState {
  std::vector<double> xprime;  // shifted positions x_k - c_k f(x0) / w_k^2
  std::vector<double> x;
  std::vector<double> p;
};

/// Gibbs draw: x'_k ~ N(0, kT / w_k^2), p_k ~ N(0, kT), positions shifted by c_k f(x0) / w_k^2.
inline BathState sample_gibbs_initial(const BathModel& m, double x0, Rng& rng) {
  validate_bath(m);
  BathState s;
  const double kT = m.kT();
  const double fx = m.f(x0);
  std::normal_distribution<double> nd(0.0, 1.0);
  s.xprime.resize(m.N());
  s.x.resize(m.N());
  s.p.resize(m.N());
  for (std::size_t k = 0; k < m.N(); ++k) {
    const double w = m.omegas[k];
    s.xprime[k] = std::sqrt(kT) / w * nd(rng);
    s.p[k] = std::sqrt(kT) * nd(rng);
    s.x[k] = s.xprime[k] + m.couplings[k] * fx / (w * w);
  }
  return s;
}

/// xi(t) = sum_k c_k (x'_k cos(w_k t) + p_k / w_k sin(w_k t)).
inline double bath_noise(const BathModel& m, const BathState& s, double t) {
  double v = 0.0;
  for (std::size_t k = 0; k < m.N(); ++k) {
    const double w = m.omegas[k];
    v += m.couplings[k] * (s.xprime[k] * std::cos(w * t) + s.p[k] / w * std::sin(w * t));
  }
  return v;
}

inline double bath_energy(const BathModel& m, double x, double p, const std::vector<double>& xk,
                          const std::vector<double>& pk) {
  double h = p * p / (2.0 * m.mass) + m.U(x);
  const double fx = m.f(x);
  for (std::size_t k = 0; k < m.N(); ++k) {
    const double w = m.omegas[k];
    const double q = xk[k] - m.couplings[k] * fx / (w * w);
    h += 0.5 * pk[k] * pk[k] + 0.5 * w * w * q * q;
  }
  return h;
}

struct BathTrajectory {
  std::vector<double> times;
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> xi;
  std::vector<double> energy;
  double max_relative_energy_drift = 0.0;
};

/// Symplectic kick / exact-rotation / kick splitting of the full Hamiltonian; requires dt <= 0.1 / w_max.
inline BathTrajectory integrate_hamiltonian(const BathModel& m, double x0, double v0, const BathState& init, double dt,
                                            double T, int record_stride = 1) {
  validate_bath(m);
  if (!(dt > 0.0) || !(T >= 0.0)) throw Error(ErrorCode::ModelValidationError, "dt must be positive and T nonnegative");
  if (dt > 0.1 / std::max(m.omega_max(), 1e-300) * (1.0 + 1e-12))
    throw Error(ErrorCode::UnstableStep, "dt = " + std::to_string(dt) + " exceeds 0.1 / omega_max");
  if (init.x.size() != m.N() || init.p.size() != m.N())
    throw Error(ErrorCode::DimensionMismatch, "bath state does not match the model");
  record_stride = std::max(1, record_stride);
  const std::size_t n = m.N();
  std::vector<double> xk = init.x, pk = init.p, fk(n);
  double x = x0, p = m.mass * v0;

  // Kick forces from the coupling part of H; the free modes and free particle are advanced exactly.
  auto forces = [&](double& fp) {
    const double fx = m.f(x), dfx = m.df(x);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double w2 = m.omegas[k] * m.omegas[k];
      const double c = m.couplings[k];
      s += c * (xk[k] - c * fx / w2);
      fk[k] = c * fx;
    }
    fp = -m.dU(x) + dfx * s;
  };
  std::vector<double> cs(n), sn(n);
  for (std::size_t k = 0; k < n; ++k) {
    cs[k] = std::cos(m.omegas[k] * dt);
    sn[k] = std::sin(m.omegas[k] * dt);
  }

  BathTrajectory out;
  const double h0 = bath_energy(m, x, p, xk, pk);
  const double scale = std::max(std::abs(h0), std::numeric_limits<double>::min());
  auto record = [&](double t) {
    const double h = bath_energy(m, x, p, xk, pk);
    out.times.push_back(t);
    out.x.push_back(x);
    out.v.push_back(p / m.mass);
    out.xi.push_back(bath_noise(m, init, t));
    out.energy.push_back(h);
    out.max_relative_energy_drift = std::max(out.max_relative_energy_drift, std::abs(h - h0) / scale);
  };

  const int steps = step_count(T, dt);
  double fp = 0.0;
  forces(fp);
  record(0.0);
  for (int i = 1; i <= steps; ++i) {
    p += 0.5 * dt * fp;
    for (std::size_t k = 0; k < n; ++k) pk[k] += 0.5 * dt * fk[k];
    x += dt * p / m.mass;
    for (std::size_t k = 0; k < n; ++k) {
      const double w = m.omegas[k], q = xk[k];
      xk[k] = cs[k] * q + sn[k] / w * pk[k];
      pk[k] = -w * sn[k] * q + cs[k] * pk[k];
    }
    forces(fp);
    p += 0.5 * dt * fp;
    for (std::size_t k = 0; k < n; ++k) pk[k] += 0.5 * dt * fk[k];
    if (!std::isfinite(x) || !std::isfinite(p) || std::abs(x) > 1e8)
      throw Error(ErrorCode::UnstableStep, "Hamiltonian integration diverged at t = " + std::to_string(i * dt));
    if (i % record_stride == 0 || i == steps) record(i * dt);
  }
  return out;
}

struct NoiseCovarianceRow {
  double t = 0.0;
  double s = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  double target = 0.0;
};

/// Ensemble estimate of E[xi(t) xi(s)] from independent Gibbs draws, compared with kT kappa_N(t - s).
inline std::vector<NoiseCovarianceRow> bath_noise_covariance(const BathModel& m, const std::vector<std::pair<double, double>>& pairs,
                                                             int n_paths, std::uint64_t seed, int threads = 1) {
  if (n_paths < 2) throw Error(ErrorCode::InsufficientSamples, "noise covariance needs at least two realizations");
  std::vector<std::vector<double>> prod(pairs.size(), std::vector<double>(n_paths));
  parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    const BathState s = sample_gibbs_initial(m, 0.0, rng);
    for (std::size_t j = 0; j < pairs.size(); ++j)
      prod[j][i] = bath_noise(m, s, pairs[j].first) * bath_noise(m, s, pairs[j].second);
  });
  std::vector<NoiseCovarianceRow> rows;
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    double mean = 0.0;
    for (double v : prod[j]) mean += v;
    mean /= n_paths;
    double var = 0.0;
    for (double v : prod[j]) var += (v - mean) * (v - mean);
    var /= (n_paths - 1);
    rows.push_back({pairs[j].first, pairs[j].second, mean, std::sqrt(var / n_paths),
                    m.kT() * kernel_sum(m, pairs[j].first - pairs[j].second)});
  }
  return rows;
}

}  // namespace gleh
