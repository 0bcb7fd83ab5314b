#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "gleh/errors.hpp"
#include "gleh/homogenize.hpp"
#include "gleh/markovianize.hpp"
#include "gleh/matrixlab.hpp"
#include "gleh/model.hpp"

namespace gleh {

using Rng = std::mt19937_64;

/// Independent generator for ensemble member `stream` under a global seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x676c6568u};
  return Rng(seq);
}

inline Vector standard_normals(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = nd(rng);
  return z;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception is rethrown.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline int step_count(double T, double dt) {
  if (!(dt > 0.0) || !(T >= dt)) throw Error(ErrorCode::ConfigParseError, "need dt > 0 and T >= dt");
  return static_cast<int>(std::floor(T / dt + 1e-9));
}

enum class Scheme { euler_maruyama, semi_implicit };

struct SimulationConfig {
  double epsilon = 0.1;
  double dt = 1e-3;
  double T = 1.0;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::semi_implicit;
  int ensemble_size = 1;
  Vector x0;
  Vector v0;
  int record_stride = 1;
  int threads = 0;
  /// Pre-limit step is epsilon / steps_per_epsilon, snapped down to a multiple of dt.
  double steps_per_epsilon = 40.0;
};

/// Fine-grid Brownian increments shared by every run of one ensemble member.
struct PathBundle {
  double dt = 0.0;
  int steps = 0;
  Matrix dW;                   // noise_dim x steps
  Vector initial_normals;      // standard normals feeding beta_0

  static PathBundle sample(int noise_dim, int initial_dim, double dt, double T, Rng& rng) {
    PathBundle p;
    p.dt = dt;
    p.steps = step_count(T, dt);
    const double sq = std::sqrt(dt);
    std::normal_distribution<double> nd(0.0, 1.0);
    p.dW.resize(noise_dim, p.steps);
    for (int k = 0; k < p.steps; ++k)
      for (int i = 0; i < noise_dim; ++i) p.dW(i, k) = sq * nd(rng);
    p.initial_normals = standard_normals(rng, initial_dim);
    return p;
  }

  /// Increments over blocks of `stride` fine steps; a trailing partial block is dropped.
  Matrix coarsen(int stride) const {
    if (stride < 1) throw Error(ErrorCode::DimensionMismatch, "stride must be positive");
    const int n = steps / stride;
    Matrix out = Matrix::Zero(dW.rows(), n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < stride; ++j) out.col(k) += dW.col(k * stride + j);
    return out;
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
};

inline int stride_for(double dt, const PathBundle& paths) {
  const int stride = static_cast<int>(std::lround(dt / paths.dt));
  if (stride < 1 || std::abs(stride * paths.dt - dt) > 1e-9 * dt)
    throw Error(ErrorCode::DimensionMismatch, "step is not a multiple of the path bundle step");
  return stride;
}

/// dt <= eps min(m0, tau_k, tau_xi) / (20 max(1, spectral radius of gamma_hat)).
inline double stability_bound(const ExtendedSystem& ext, const Vector& x) {
  const auto& s = ext.system();
  const double rho = spectral_radius(ext.gamma_hat(x));
  return ext.epsilon() * std::min({s.m0, s.tau_kappa, s.tau_xi}) / (20.0 * std::max(1.0, rho));
}

inline void check_divergence(const Vector& state, double t) {
  if (!state.allFinite() || state.lpNorm<Eigen::Infinity>() > 1e8)
    throw Error(ErrorCode::UnstableStep, "state diverged at t = " + std::to_string(t));
}

/// Integrates the extended system; states are (x, z, zeta, v, y, beta) with y_0 = 0 and
/// beta_0 ~ N(0, M2 / (tau_xi eps)) drawn from the bundle's initial normals.
inline Trajectory integrate_prelimit(const ExtendedSystem& ext, const SimulationConfig& cfg, const PathBundle& paths,
                                     bool zero_initial_beta = false) {
  const BlockLayout L = ext.layout();
  const int n = L.n();
  const int stride = stride_for(cfg.dt, paths);
  const int steps = step_count(cfg.T, cfg.dt);
  if (steps * stride > paths.steps) throw Error(ErrorCode::DimensionMismatch, "path bundle is shorter than the horizon");
  if (paths.dW.rows() != ext.noise_dim()) throw Error(ErrorCode::DimensionMismatch, "path bundle has wrong noise dimension");
  Vector x0 = cfg.x0.size() ? cfg.x0 : Vector::Zero(L.d);
  Vector v0 = cfg.v0.size() ? cfg.v0 : Vector::Zero(L.d);
  if (x0.size() != L.d || v0.size() != L.d) throw Error(ErrorCode::DimensionMismatch, "initial state has wrong dimension");
  if (cfg.scheme == Scheme::euler_maruyama && cfg.dt > stability_bound(ext, x0))
    throw Error(ErrorCode::UnstableStep, "dt exceeds the explicit stability bound");
  if (!spectral_check(ext.gamma_hat(x0)).positive_stable)
    throw Error(ErrorCode::NotPositiveStable, "gamma_hat is not positive stable at the initial state");

  Vector xh = Vector::Zero(n), vh = Vector::Zero(n);
  xh.segment(0, L.d) = x0;
  vh.segment(L.v(), L.d) = v0;
  if (!zero_initial_beta) {
    if (paths.initial_normals.size() != L.d2) throw Error(ErrorCode::DimensionMismatch, "initial normals have wrong size");
    vh.segment(L.beta(), L.d2) = sym_sqrt(ext.initial_beta_covariance()) * paths.initial_normals;
  }
  const double eps = ext.epsilon(), h = cfg.dt, r = h / eps;
  const Matrix& sh = ext.sigma_hat();
  const Matrix id = Matrix::Identity(n, n);
  const int rec = std::max(1, cfg.record_stride);

  Trajectory tr;
  auto record = [&](int k) {
    Vector s(2 * n);
    s << xh, vh;
    tr.times.push_back(k * h);
    tr.states.push_back(std::move(s));
  };
  record(0);
  for (int k = 0; k < steps; ++k) {
    Vector dw = paths.dW.middleCols(static_cast<Eigen::Index>(k) * stride, stride).rowwise().sum();
    const Vector x = xh.segment(0, L.d);
    const Matrix G = ext.gamma_hat(x);
    const Vector rhs_noise = sh * dw / eps;
    if (cfg.scheme == Scheme::semi_implicit) {
      const Vector rhs = vh + r * ext.F_hat(x) + rhs_noise;
      vh = (id + r * G).partialPivLu().solve(rhs);
      xh += h * vh;
    } else {
      const Vector vnew = vh + r * (ext.F_hat(x) - G * vh) + rhs_noise;
      xh += h * vh;
      vh = vnew;
    }
    check_divergence(vh, (k + 1) * h);
    check_divergence(xh, (k + 1) * h);
    if ((k + 1) % rec == 0) record(k + 1);
  }
  return tr;
}

/// Euler-Maruyama on the limiting SDE driven by the bundle's increments.
inline Trajectory integrate_limit(const HomogenizedSDE& hsde, const SimulationConfig& cfg, const PathBundle& paths) {
  const int stride = stride_for(cfg.dt, paths);
  const int steps = step_count(cfg.T, cfg.dt);
  if (steps * stride > paths.steps) throw Error(ErrorCode::DimensionMismatch, "path bundle is shorter than the horizon");
  if (paths.dW.rows() != hsde.noise_dim) throw Error(ErrorCode::DimensionMismatch, "path bundle has wrong noise dimension");
  Vector x = cfg.x0.size() ? cfg.x0 : Vector::Zero(hsde.d);
  if (x.size() != hsde.d) throw Error(ErrorCode::DimensionMismatch, "initial state has wrong dimension");
  const int rec = std::max(1, cfg.record_stride);
  Trajectory tr;
  tr.times.push_back(0.0);
  tr.states.push_back(x);
  for (int k = 0; k < steps; ++k) {
    const Vector dw = paths.dW.middleCols(static_cast<Eigen::Index>(k) * stride, stride).rowwise().sum();
    x = x + hsde.drift(x) * cfg.dt + hsde.diffusion(x) * dw;
    check_divergence(x, (k + 1) * cfg.dt);
    if ((k + 1) % rec == 0) {
      tr.times.push_back((k + 1) * cfg.dt);
      tr.states.push_back(x);
    }
  }
  return tr;
}

/// Linear-interpolation quantile (p in [0, 1]) of unsorted data.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorCode::InsufficientSamples, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SupErrorStats {
  double epsilon = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  int n_paths = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> errors;
};

/// Pre-limit step for one epsilon: eps / steps_per_epsilon snapped down to a multiple of the fine step.
inline double prelimit_step(double epsilon, const SimulationConfig& cfg) {
  const int stride = std::max(1, static_cast<int>(std::floor(epsilon / cfg.steps_per_epsilon / cfg.dt + 1e-9)));
  return stride * cfg.dt;
}

/// Per-epsilon statistics of sup_t |x^eps_t - X_t| over an ensemble; every run of member i
/// consumes the same fine Brownian path. cfg.dt is the fine step used by the limit SDE.
inline std::vector<SupErrorStats> coupled_sup_error(const GLESystem& sys, const HomogenizedSDE& hsde,
                                                    const std::vector<double>& eps_list, const SimulationConfig& cfg) {
  if (eps_list.empty()) throw Error(ErrorCode::ConfigParseError, "epsilon list is empty");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (eps_list[i] > eps_list[i - 1]) throw Error(ErrorCode::ConfigParseError, "epsilon list must be decreasing");
  std::vector<ExtendedSystem> exts;
  for (double e : eps_list) exts.emplace_back(sys, e);
  const int d = sys.d();
  const int noise_dim = exts.front().noise_dim();
  const int d2 = exts.front().layout().d2;
  const std::size_t n_paths = static_cast<std::size_t>(std::max(1, cfg.ensemble_size));
  std::vector<std::vector<double>> errors(eps_list.size(), std::vector<double>(n_paths, 0.0));
  parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, i);
    const PathBundle paths = PathBundle::sample(noise_dim, d2, cfg.dt, cfg.T, rng);
    SimulationConfig lc = cfg;
    lc.record_stride = 1;
    const Trajectory lim = integrate_limit(hsde, lc, paths);
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      SimulationConfig pc = cfg;
      pc.epsilon = eps_list[e];
      pc.dt = prelimit_step(eps_list[e], cfg);
      pc.record_stride = 1;
      const int stride = stride_for(pc.dt, paths);
      const Trajectory pre = integrate_prelimit(exts[e], pc, paths);
      double sup = 0.0;
      for (std::size_t k = 0; k < pre.states.size(); ++k) {
        const std::size_t kf = k * static_cast<std::size_t>(stride);
        if (kf >= lim.states.size()) break;
        sup = std::max(sup, (pre.states[k].head(d) - lim.states[kf]).norm());
      }
      errors[e][i] = sup;
    }
  });
  std::vector<SupErrorStats> out;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    SupErrorStats s;
    s.epsilon = eps_list[e];
    s.median = quantile(errors[e], 0.5);
    s.q25 = quantile(errors[e], 0.25);
    s.q75 = quantile(errors[e], 0.75);
    s.n_paths = static_cast<int>(n_paths);
    s.dt = prelimit_step(eps_list[e], cfg);
    s.seed = cfg.seed;
    s.errors = errors[e];
    out.push_back(std::move(s));
  }
  return out;
}

/// Scalar Ito SDE dX = drift(X) dt + diffusion(X) dW.
struct ScalarSDE {
  std::function<double(double)> drift;
  std::function<double(double)> diffusion;
};

inline ScalarSDE as_scalar(const HomogenizedSDE& hsde) {
  if (hsde.d != 1 || hsde.noise_dim != 1) throw Error(ErrorCode::DimensionMismatch, "scalar SDE required");
  return {[hsde](double x) { return hsde.drift(Vector::Constant(1, x))(0); },
          [hsde](double x) { return hsde.diffusion(Vector::Constant(1, x))(0, 0); }};
}

struct ReflectConfig {
  double dt = 1e-4;
  double burn_in = 1.0;
  int sample_every = 100;
  int samples_per_path = 1000;
  int n_paths = 1000;
  std::uint64_t seed = 0;
  int bins = 1000;
  double x0 = std::numeric_limits<double>::quiet_NaN();  // default: interval midpoint
  int threads = 0;
};

struct Histogram {
  std::vector<double> edges;
  std::vector<long long> counts;
  long long total = 0;

  double bin_width(std::size_t i) const { return edges[i + 1] - edges[i]; }
  double density(std::size_t i) const {
    return total == 0 ? 0.0 : static_cast<double>(counts[i]) / (static_cast<double>(total) * bin_width(i));
  }
};

inline double reflect_into(double x, double a, double b) {
  const double w = b - a;
  for (int guard = 0; (x < a || x > b) && guard < 64; ++guard) {
    if (x < a) x = 2.0 * a - x;
    if (x > b) x = 2.0 * b - x;
  }
  if (x < a || x > b) x = a + std::fmod(std::abs(x - a), w);
  return x;
}

/// Euler-Maruyama with overshoot folded back into (a, b); occupancy recorded after burn-in.
inline Histogram reflecting_sim(const ScalarSDE& sde, double a, double b, const ReflectConfig& cfg) {
  if (!(a < b)) throw Error(ErrorCode::ConfigParseError, "reflecting interval needs a < b");
  if (cfg.bins < 1 || cfg.n_paths < 1 || cfg.samples_per_path < 1 || cfg.sample_every < 1)
    throw Error(ErrorCode::ConfigParseError, "reflecting run sizes must be positive");
  const int burn = static_cast<int>(std::ceil(cfg.burn_in / cfg.dt));
  const double x_start = std::isnan(cfg.x0) ? 0.5 * (a + b) : cfg.x0;
  const double sq = std::sqrt(cfg.dt);
  const double inv_w = cfg.bins / (b - a);
  std::vector<std::vector<long long>> local(static_cast<std::size_t>(cfg.n_paths));
  parallel_for(static_cast<std::size_t>(cfg.n_paths), cfg.threads, [&](std::size_t p) {
    Rng rng = make_rng(cfg.seed, p);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<long long> counts(static_cast<std::size_t>(cfg.bins), 0);
    double x = x_start;
    auto step = [&] {
      x = reflect_into(x + sde.drift(x) * cfg.dt + sde.diffusion(x) * sq * nd(rng), a, b);
      if (!std::isfinite(x)) throw Error(ErrorCode::UnstableStep, "reflecting path diverged");
    };
    for (int k = 0; k < burn; ++k) step();
    for (int s = 0; s < cfg.samples_per_path; ++s) {
      for (int k = 0; k < cfg.sample_every; ++k) step();
      const int bin = std::min(cfg.bins - 1, std::max(0, static_cast<int>((x - a) * inv_w)));
      ++counts[static_cast<std::size_t>(bin)];
    }
    local[p] = std::move(counts);
  });
  Histogram h;
  for (int i = 0; i <= cfg.bins; ++i) h.edges.push_back(a + (b - a) * i / cfg.bins);
  h.counts.assign(static_cast<std::size_t>(cfg.bins), 0);
  for (const auto& c : local)
    for (std::size_t i = 0; i < c.size(); ++i) h.counts[i] += c[i];
  for (auto c : h.counts) h.total += c;
  return h;
}

/// sup over bin edges of |empirical CDF - cdf|.
inline double ks_statistic(const Histogram& h, const std::function<double(double)>& cdf) {
  double cum = 0.0, ks = std::abs(cdf(h.edges.front()));
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    cum += static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
    ks = std::max(ks, std::abs(cum - cdf(h.edges[i + 1])));
  }
  return ks;
}

/// Noise output C beta sampled with the exact transition beta' = Phi beta + N(0, M - Phi M Phi^T).
/// Starts at beta = 0; returns an r x (steps + 1) matrix.
inline Matrix simulate_noise(const RealizationTriple& t, double dt, int steps, Rng& rng) {
  const Matrix Phi = expm(-t.Gamma, dt);
  const Matrix L = sym_sqrt(t.M - Phi * t.M * Phi.transpose());
  Vector beta = Vector::Zero(t.state_dim());
  Matrix out(t.output_dim(), steps + 1);
  out.col(0) = t.C * beta;
  for (int k = 0; k < steps; ++k) {
    beta = Phi * beta + L * standard_normals(rng, beta.size());
    out.col(k + 1) = t.C * beta;
  }
  return out;
}

struct CovarianceEstimate {
  std::vector<int> lags;
  std::vector<Matrix> mean;
  std::vector<Matrix> standard_error;
  int n_paths = 0;
};

/// Averages xi(t + lag) xi(t)^T over reference times after burn-in, then across paths;
/// standard errors come from the spread of the per-path averages.
inline CovarianceEstimate estimate_covariance(const std::vector<Matrix>& paths, const std::vector<int>& lags,
                                              int burn_in_steps, int ref_stride = 1) {
  if (paths.size() < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two paths");
  const int max_lag = lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
  const Eigen::Index r = paths.front().rows();
  CovarianceEstimate est;
  est.lags = lags;
  est.n_paths = static_cast<int>(paths.size());
  for (int lag : lags) {
    if (lag < 0) throw Error(ErrorCode::ConfigParseError, "negative lag");
    Matrix sum = Matrix::Zero(r, r), sumsq = Matrix::Zero(r, r);
    for (const Matrix& p : paths) {
      const int last = static_cast<int>(p.cols()) - 1 - max_lag;
      if (last < burn_in_steps) throw Error(ErrorCode::InsufficientSamples, "trajectory too short for burn-in and lags");
      Matrix acc = Matrix::Zero(r, r);
      int count = 0;
      for (int t0 = burn_in_steps; t0 <= last; t0 += std::max(1, ref_stride)) {
        acc += p.col(t0 + lag) * p.col(t0).transpose();
        ++count;
      }
      acc /= count;
      sum += acc;
      sumsq += acc.cwiseProduct(acc);
    }
    const double n = static_cast<double>(paths.size());
    const Matrix mean = sum / n;
    const Matrix var = ((sumsq / n - mean.cwiseProduct(mean)) * (n / (n - 1.0))).cwiseMax(0.0);
    est.mean.push_back(mean);
    est.standard_error.push_back((var / n).cwiseSqrt());
  }
  return est;
}

}  // namespace gleh
