// Acceptance checks: prints one PASS/FAIL line per criterion and exits nonzero on any failure.
// Usage: gleh_acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gleh/gleh.hpp"
#include "oracles.hpp"

using gleh::Matrix;
using gleh::Vector;

namespace {

// Pinned tolerances and sizes.
constexpr double kLyapResidualTol = 1e-10;
constexpr double kLyapOracleTol = 1e-9;
constexpr int kLyapSystems = 1000;
constexpr int kLyapMaxN = 12;
constexpr double kExplicitJTol = 1e-9;
constexpr int kExplicitJSets = 20;
constexpr double kClosedFormTol = 1e-8;
constexpr int kGridPoints = 50;
constexpr double kFdtTol = 1e-9;
constexpr double kOmegaLimitTol = 1e-3;
constexpr double kOmegaLarge = 1e3;
constexpr std::uint64_t kConvergeSeed = 20240517;
constexpr int kConvergePaths = 200;
constexpr double kConvergeFineDt = 5e-4;
constexpr double kConvergeRatio = 0.5;
constexpr double kKsTol = 0.05;
constexpr int kReflectPaths = 1000;
constexpr int kReflectSamples = 1000;
constexpr double kReflectDt = 5e-4;
constexpr int kReflectEvery = 200;
constexpr std::uint64_t kReflectSeed = 31;
constexpr int kNoisePaths = 10000;
constexpr double kNoiseBand = 3.0;
constexpr std::uint64_t kNoiseSeed = 41;
constexpr int kBathModes = 1000;
constexpr double kBathOmegaMax = 50.0;
constexpr double kBathKernelTol = 0.05;
constexpr int kBathPaths = 2000;
constexpr double kBathBand = 3.0;
constexpr std::uint64_t kBathSeed = 51;
constexpr double kJacobianTol = 1e-6;
constexpr int kJacobianProbes = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// 1 ------------------------------------------------------------------------------------------

Outcome lyapunov_correctness() {
  std::mt19937_64 rng(101);
  double worst_res = 0.0, worst_rel = 0.0;
  for (int i = 0; i < kLyapSystems; ++i) {
    const int n = 1 + i % kLyapMaxN;
    const Matrix g = oracle::random_positive_stable(rng, n);
    const Matrix b = oracle::random_matrix(rng, n, n);
    const Matrix q = b + b.transpose();
    const auto method = i % 2 ? gleh::LyapunovMethod::bartels_stewart : gleh::LyapunovMethod::kronecker;
    const Matrix J = gleh::solve_lyapunov(g, q, method);
    worst_res = std::max(worst_res, gleh::lyapunov_residual(g, J, q) / (1 + q.norm()));
    worst_rel = std::max(worst_rel, oracle::rel_diff(J, oracle::lyapunov(g, q)));
  }
  return {worst_res <= kLyapResidualTol && worst_rel <= kLyapOracleTol,
          "max residual/(1+|q|) " + fmt(worst_res) + ", max rel. diff vs vectorized oracle " + fmt(worst_rel)};
}

// 2 ------------------------------------------------------------------------------------------

Outcome explicit_j() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(0.2, 4.0);
  double worst = 0.0;
  for (int i = 0; i < kExplicitJSets; ++i) {
    const double g = u(rng), s = u(rng), a = u(rng), tk = u(rng), te = u(rng), m0 = u(rng);
    const auto sys = fixture::scalar_ou(fixture::constant(g), fixture::constant(s), a, m0, tk, te);
    const Matrix J = gleh::j_blocks(sys, Vector::Zero(1)).full;
    worst = std::max(worst, oracle::rel_diff(J, oracle::explicit_j_ou(g, s, a, tk, te, m0)));
  }
  return {worst <= kExplicitJTol, "max rel. diff " + fmt(worst) + " over " + std::to_string(kExplicitJSets) + " sets"};
}

// 3 ------------------------------------------------------------------------------------------

struct Benchmark {
  fixture::Smooth g, sigma;
  double m0, tk, tx, alpha, omega;
};

std::vector<Benchmark> benchmarks() {
  return {
      {fixture::sqrt_sin(2, 1, 1), fixture::sqrt_sin(2, 1, 1), 1.0, 1.0, 2.0, 1.0, 1.5},
      {fixture::tanh_profile(1.5, 0.5, 1.0), fixture::constant(0.8), 0.7, 0.5, 1.3, 2.0, 0.6},
      {fixture::exponential(1.2, 0.3), fixture::quadratic(0.5, 0.2), 1.4, 1.1, 0.4, 0.7, 3.0},
      {fixture::quadratic(1.0, 0.3), fixture::sqrt_sin(1.5, 0.5, 2.0), 0.9, 2.0, 2.0, 1.3, 1.0},
      {fixture::sqrt_sin(3, 2, 0.5), fixture::tanh_profile(1.0, -0.4, 2.0), 2.0, 0.3, 0.9, 0.5, 2.4},
  };
}

/// Sup over the grid of |a - b| divided by the sup of |b|, for each of S1, S2, S3 and their sum.
double grid_relative(const std::vector<gleh::DriftTerms>& a, const std::vector<gleh::DriftTerms>& b) {
  double worst = 0.0;
  for (int part = 0; part < 4; ++part) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto pick = [part](const gleh::DriftTerms& t) {
        return part == 0 ? t.S1(0) : part == 1 ? t.S2(0) : part == 2 ? t.S3(0) : t.sum()(0);
      };
      diff = std::max(diff, std::abs(pick(a[i]) - pick(b[i])));
      ref = std::max(ref, std::abs(pick(b[i])));
    }
    if (ref > 0) worst = std::max(worst, diff / ref);
    else worst = std::max(worst, diff);
  }
  return worst;
}

Outcome closed_form_vs_generic() {
  double worst_ou = 0.0, worst_h = 0.0;
  for (const auto& b : benchmarks()) {
    const auto ou = fixture::scalar_ou(b.g, b.sigma, b.alpha, b.m0, b.tk, b.tx);
    const auto harm = fixture::scalar_harmonic(b.g, b.sigma, b.omega, b.m0, b.tk, b.tx);
    std::vector<gleh::DriftTerms> gen_ou, cf_ou, gen_h, cf_h;
    for (int i = 0; i < kGridPoints; ++i) {
      const double x = -2.0 + 4.0 * i / (kGridPoints - 1);
      const Vector xv = Vector::Constant(1, x);
      gen_ou.push_back(gleh::noise_induced_drift(ou, xv, false));
      cf_ou.push_back(gleh::drift_1d_ou(gleh::scalar_coefficients(ou, x), b.m0, b.tk, b.tx, b.alpha));
      gen_h.push_back(gleh::noise_induced_drift(harm, xv, false));
      cf_h.push_back(gleh::drift_1d_harmonic(gleh::scalar_coefficients(harm, x), b.m0, b.tk, b.tx, b.omega));
    }
    worst_ou = std::max(worst_ou, grid_relative(cf_ou, gen_ou));
    worst_h = std::max(worst_h, grid_relative(cf_h, gen_h));
  }
  return {worst_ou <= kClosedFormTol && worst_h <= kClosedFormTol,
          "grid-relative sup error OU " + fmt(worst_ou) + ", harmonic " + fmt(worst_h)};
}

// 4 ------------------------------------------------------------------------------------------

Outcome fdt_cancellation() {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<gleh::GLESystem> models;
  for (int i = 0; i < 3; ++i) {
    const double lam = u(rng), tau = u(rng);
    models.push_back(fixture::scalar_ou(fixture::sqrt_sin(2 + i, 1, u(rng)),
                                        fixture::scaled(fixture::sqrt_sin(2 + i, 1, 1.0), lam), u(rng), u(rng), tau, tau));
  }
  for (int i = 0; i < 3; ++i) {
    const double lam = u(rng), tau = u(rng);
    const auto g = fixture::tanh_profile(1.5, 0.5, u(rng));
    models.push_back(fixture::scalar_harmonic(g, fixture::scaled(g, lam), 0.4 + i, u(rng), tau, tau));
  }
  models.push_back(fixture::random_fdt_system(rng, 2, 2, 3));
  models.push_back(fixture::random_fdt_system(rng, 2, 3, 3));
  models.push_back(fixture::random_fdt_system(rng, 3, 3, 4));
  models.push_back(fixture::random_fdt_system(rng, 3, 3, 3));
  // make the scalar models' sigma exactly proportional to g
  for (int i = 0; i < 3; ++i) {
    auto& c = models[static_cast<std::size_t>(i)].coeffs;
    const double lam = c.sigma(Vector::Zero(1))(0, 0) / c.g(Vector::Zero(1))(0, 0);
    c.sigma = [g = c.g, lam](const Vector& x) { return Matrix(lam * g(x)); };
    c.dsigma = [dg = c.dg, lam](const Vector& x) {
      auto j = dg(x);
      for (auto& m : j) m *= lam;
      return j;
    };
  }
  double worst = 0.0;
  int probes = 0;
  for (const auto& sys : models) {
    if (!gleh::check_fdt(sys).holds) return {false, "a generated model does not satisfy the FDT conditions"};
    for (const Vector& x : sys.probes) {
      const auto s = gleh::noise_induced_drift(sys, x, false);
      worst = std::max(worst, (s.S2 + s.S3).norm() / (1 + s.S1.norm()));
      ++probes;
    }
  }
  return {worst <= kFdtTol, "max |S2+S3|/(1+|S1|) " + fmt(worst) + " over " + std::to_string(models.size()) +
                                " models, " + std::to_string(probes) + " probes"};
}

// 5 ------------------------------------------------------------------------------------------

Outcome omega_limit() {
  double worst = 0.0;
  for (int variant = 0; variant < 2; ++variant) {
    auto ou = fixture::thermo_constant_mu(1.0, 0.8);
    if (variant == 1) ou.mu = gleh::Expr::parse("exp(-0.5*(T - 1))", {"T"});
    auto harm = ou;
    harm.noise = {gleh::NoiseFamily::Kind::harmonic, 0.0, kOmegaLarge};
    for (int i = 0; i < kGridPoints; ++i) {
      const double x = ou.a + (ou.b - ou.a) * i / (kGridPoints - 1);
      const double b1 = gleh::drift_b1(ou, x), b2 = gleh::drift_b2(harm, x);
      worst = std::max(worst, std::abs(b2 - b1) / std::abs(b1));
    }
  }
  return {worst <= kOmegaLimitTol, "max |b2 - b1|/|b1| " + fmt(worst) + " on two 50-point grids"};
}

// 6 ------------------------------------------------------------------------------------------

Outcome convergence_in_epsilon() {
  const auto mf = gleh::load_model_file(std::filesystem::path(GLEH_SOURCE_DIR) / "models" / "ou_benchmark.json");
  const gleh::GLESystem sys = gleh::build_system(mf);
  const gleh::HomogenizedSDE h = gleh::homogenized_sde(sys);
  gleh::SimulationConfig cfg;
  cfg.dt = kConvergeFineDt;
  cfg.T = 1.0;
  cfg.seed = kConvergeSeed;
  cfg.scheme = gleh::Scheme::semi_implicit;
  cfg.ensemble_size = kConvergePaths;
  cfg.x0 = Vector::Zero(1);
  cfg.v0 = Vector::Zero(1);
  const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
  const auto stats = gleh::coupled_sup_error(sys, h, eps, cfg);
  int nonincreasing = 0;
  for (std::size_t i = 1; i < stats.size(); ++i) nonincreasing += stats[i].median <= stats[i - 1].median;
  const double ratio = stats.back().median / stats.front().median;
  std::string medians;
  for (const auto& s : stats) medians += (medians.empty() ? "" : ", ") + fmt(s.median);
  return {nonincreasing == 3 && ratio < kConvergeRatio,
          "medians [" + medians + "], nonincreasing pairs " + std::to_string(nonincreasing) + "/3, ratio " + fmt(ratio)};
}

// 7 ------------------------------------------------------------------------------------------

Outcome stationary_density() {
  gleh::ReflectConfig rc;
  rc.dt = kReflectDt;
  rc.burn_in = 2.0;
  rc.sample_every = kReflectEvery;
  rc.samples_per_path = kReflectSamples;
  rc.n_paths = kReflectPaths;
  rc.bins = 1000;
  rc.seed = kReflectSeed;
  std::ostringstream os;
  bool pass = true;
  // r = 1: exponent alpha / (alpha + 3 pi r R mu0) = 2/3 with R = 1/(6 pi), mu0 = 1.
  {
    const auto m = fixture::thermo_constant_mu(1.0, 1.0);
    const double p = m.noise.alpha / (m.noise.alpha + 3 * std::numbers::pi * m.r() * m.R * m.mu0);
    const auto hist = gleh::reflecting_sim(gleh::thermo_limit_sde(m), m.a, m.b, rc);
    const double ks = gleh::ks_statistic(hist, [p](double x) { return oracle::power_temperature_cdf(x, p); });
    const double ks_alt = gleh::ks_statistic(hist, [](double x) { return std::log(1 + 0.5 * x) / std::log(1.5); });
    pass = pass && ks < kKsTol && hist.total >= 1000000;
    os << "r=1: KS vs T^-" << fmt(p) << " " << fmt(ks) << " (vs 1/T " << fmt(ks_alt) << ", n=" << hist.total << ")";
  }
  {
    const auto m = fixture::thermo_constant_mu(1.0, 1e-6);
    rc.seed = kReflectSeed + 1;
    const auto hist = gleh::reflecting_sim(gleh::thermo_limit_sde(m), m.a, m.b, rc);
    const double ks = gleh::ks_statistic(hist, [](double x) { return std::log(1 + 0.5 * x) / std::log(1.5); });
    const double ks_alt = gleh::ks_statistic(hist, [](double x) { return x; });
    pass = pass && ks < kKsTol && hist.total >= 1000000;
    os << "; r=1e-6: KS vs 1/T " << fmt(ks) << " (vs uniform " << fmt(ks_alt) << ")";
  }
  return {pass, os.str()};
}

// 8 ------------------------------------------------------------------------------------------

double noise_max_z(const gleh::RealizationTriple& t, double lag_unit, std::uint64_t seed) {
  const int burn = static_cast<int>(std::ceil(10.0 * gleh::max_timescale(t) / lag_unit));
  const int steps = burn + 3 + 20;
  std::vector<Matrix> paths(kNoisePaths);
  gleh::parallel_for(paths.size(), 0, [&](std::size_t i) {
    auto rng = gleh::make_rng(seed, i);
    paths[i] = gleh::simulate_noise(t, lag_unit, steps, rng);
  });
  const auto est = gleh::estimate_covariance(paths, {0, 1, 2, 3}, burn, 1);
  double worst = 0.0;
  for (std::size_t k = 0; k < est.lags.size(); ++k) {
    const Matrix target = gleh::covariance_eval(t, lag_unit * est.lags[k]);
    const Matrix z = (est.mean[k] - target).cwiseAbs().cwiseQuotient(est.standard_error[k]);
    worst = std::max(worst, z.maxCoeff());
  }
  return worst;
}

Outcome noise_statistics() {
  const double alpha = 2.0;
  const auto ou = gleh::ou_realization(fixture::scalar(alpha));
  const auto harm = gleh::harmonic_realization(fixture::scalar(1.5), 1.0);
  const double z_ou = noise_max_z(ou.noise, 1.0 / alpha, kNoiseSeed);
  const double z_h = noise_max_z(harm.noise, 1.0, kNoiseSeed + 1);
  return {z_ou <= kNoiseBand && z_h <= kNoiseBand,
          "max |mean - R(lag)|/SE: OU " + fmt(z_ou) + ", harmonic " + fmt(z_h) + " (" + std::to_string(kNoisePaths) + " paths)"};
}

// 9 ------------------------------------------------------------------------------------------

Outcome bath_validation() {
  gleh::BathTarget target;
  target.kind = gleh::BathTarget::Kind::ou;
  target.alpha = 1.0;
  auto m = gleh::debye_sampling(target, kBathModes, kBathOmegaMax);
  m.beta = 0.5;
  double sup = 0.0, ref = 0.0;
  for (int i = 0; i <= 600; ++i) {
    const double t = 3.0 * i / 600;
    sup = std::max(sup, std::abs(gleh::kernel_sum(m, t) - std::exp(-t)));
    ref = std::max(ref, std::exp(-t));
  }
  std::vector<std::pair<double, double>> pairs;
  for (double s : {0.0, 1.0, 2.0})
    for (double lag : {0.0, 0.5, 1.0, 1.5, 2.0}) pairs.emplace_back(s + lag, s);
  const auto rows = gleh::bath_noise_covariance(m, pairs, kBathPaths, kBathSeed, 0);
  double max_z = 0.0, max_z_exact = 0.0;
  for (const auto& r : rows) {
    max_z = std::max(max_z, std::abs(r.mean - r.target) / r.standard_error);
    max_z_exact = std::max(max_z_exact, std::abs(r.mean - m.kT() * std::exp(-(r.t - r.s))) / r.standard_error);
  }
  return {sup / ref <= kBathKernelTol && max_z <= kBathBand && max_z_exact <= kBathBand,
          "kernel sup error " + fmt(sup / ref) + ", covariance max z vs kT kappa_N " + fmt(max_z) + ", vs kT e^-t " +
              fmt(max_z_exact)};
}

// 10 -----------------------------------------------------------------------------------------

struct Products {
  Matrix P1, P2, P3;
};

Products products(const gleh::GLESystem& sys, const Matrix& K1, const Vector& x) {
  const Matrix g = sys.coeffs.g(x), h = sys.coeffs.h(x), s = sys.coeffs.sigma(x);
  const Matrix thi = (g * K1 * h).inverse();
  return {thi, thi * g, thi * s};
}

/// Relative Frobenius mismatch between analytic and central-difference derivatives at x.
double jacobian_mismatch(const gleh::GLESystem& sys, const Vector& x) {
  const Matrix K1 = gleh::triple_integral(sys.kernel);
  const auto an = gleh::analytic_product_derivatives(sys, x, K1);
  const auto dg = sys.coeffs.dg(x), dh = sys.coeffs.dh(x), ds = sys.coeffs.dsigma(x);
  double worst = 0.0;
  auto compare = [&worst](const Matrix& a, const Matrix& f) {
    worst = std::max(worst, (a - f).norm() / std::max(a.norm(), 1e-8));
  };
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    const double step = 1e-5 * std::max(1.0, std::abs(x(l)));
    Vector xp = x, xm = x;
    xp(l) += step;
    xm(l) -= step;
    const double w = xp(l) - xm(l);
    const auto pp = products(sys, K1, xp), pm = products(sys, K1, xm);
    const auto k = static_cast<std::size_t>(l);
    compare(an.dP1[k], (pp.P1 - pm.P1) / w);
    compare(an.dP2[k], (pp.P2 - pm.P2) / w);
    compare(an.dP3[k], (pp.P3 - pm.P3) / w);
    compare(dg[k], (sys.coeffs.g(xp) - sys.coeffs.g(xm)) / w);
    compare(dh[k], (sys.coeffs.h(xp) - sys.coeffs.h(xm)) / w);
    compare(ds[k], (sys.coeffs.sigma(xp) - sys.coeffs.sigma(xm)) / w);
  }
  return worst;
}

Outcome jacobian_checks() {
  std::mt19937_64 rng(110);
  std::vector<std::pair<gleh::GLESystem, std::pair<double, double>>> models;
  for (const auto& b : benchmarks()) models.push_back({fixture::scalar_ou(b.g, b.sigma, b.alpha, b.m0, b.tk, b.tx), {-2, 2}});
  for (const char* file : {"ou_benchmark.json", "harmonic_benchmark.json", "ou_2d.json"})
    models.push_back({gleh::build_system(gleh::load_model_file(std::filesystem::path(GLEH_SOURCE_DIR) / "models" / file)),
                      {-2, 2}});
  auto thermo = fixture::thermo_constant_mu(1.0, 1.0);
  thermo.mu = gleh::Expr::parse("exp(-0.5*(T - 1))", {"T"});
  models.push_back({gleh::to_gle_system(thermo), {0, 1}});
  models.push_back({fixture::random_generic_system(rng, 2, 2, 2, 3, 2), {-1, 1}});
  models.push_back({fixture::random_generic_system(rng, 3, 3, 3, 3, 3), {-1, 1}});
  double worst = 0.0;
  for (int i = 0; i < kJacobianProbes; ++i) {
    const auto& [sys, box] = models[static_cast<std::size_t>(i) % models.size()];
    std::uniform_real_distribution<double> u(box.first, box.second);
    Vector x(sys.d());
    for (Eigen::Index l = 0; l < x.size(); ++l) x(l) = u(rng);
    worst = std::max(worst, jacobian_mismatch(sys, x));
  }
  return {worst <= kJacobianTol, "max relative mismatch " + fmt(worst) + " at " + std::to_string(kJacobianProbes) +
                                     " probes over " + std::to_string(models.size()) + " models"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "Lyapunov correctness", 10, lyapunov_correctness},
      {2, "explicit J reproduction", 1, explicit_j},
      {3, "closed-form vs generic drift", 30, closed_form_vs_generic},
      {4, "FDT cancellation", 10, fdt_cancellation},
      {5, "Omega -> infinity degeneration", 1, omega_limit},
      {6, "convergence in epsilon", 300, convergence_in_epsilon},
      {7, "stationary density", 300, stationary_density},
      {8, "noise statistics", 120, noise_statistics},
      {9, "Kac-Zwanzig validation", 600, bath_validation},
      {10, "Jacobian checks", 10, jacobian_checks},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %2d: %s  %s: %s; %.2f s (budget %.0f s)%s\n", c.id, pass ? "PASS" : "FAIL", c.title.c_str(),
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : " over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
