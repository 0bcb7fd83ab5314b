#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gleh/bathsim.hpp"
#include "gleh/errors.hpp"
#include "gleh/homogenize.hpp"
#include "gleh/io.hpp"
#include "gleh/markovianize.hpp"
#include "gleh/model.hpp"
#include "gleh/model_file.hpp"
#include "gleh/simulate.hpp"
#include "gleh/thermophoresis.hpp"

#ifndef GLEH_VERSION
#define GLEH_VERSION "0.0.0"
#endif

namespace gleh {

inline constexpr const char* kVersion = GLEH_VERSION;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"homogenize", "converge", "thermo", "bath", "noise-stats"};
  return kinds;
}

/// Command-line overrides applied on top of the config file.
struct RunOverrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

struct ExperimentConfig {
  std::string kind;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  int threads = 0;
  Json params;               // experiment-specific section with defaults filled in
  std::optional<ModelFile> model;
  Json resolved;             // full configuration recorded in the manifest
};

namespace detail {

inline Json section_or_empty(const Json& doc, const std::string& key) {
  if (!doc.contains(key)) return Json::object();
  if (!doc.at(key).is_object()) bad_field(key, "expected an object");
  return doc.at(key);
}

/// Fills `key` with `fallback` when absent and returns the value.
template <class T>
T take(Json& sec, const std::string& where, const char* key, T fallback) {
  if (!sec.contains(key)) {
    sec[key] = fallback;
    return fallback;
  }
  try {
    return sec.at(key).get<T>();
  } catch (const Json::exception&) {
    bad_field(where + "." + key, "has the wrong type");
  }
}

inline std::vector<double> take_list(Json& sec, const std::string& where, const char* key, std::vector<double> fallback) {
  const std::vector<double> v = take(sec, where, key, fallback);
  if (v.empty()) bad_field(where + "." + key, "must not be empty");
  return v;
}

inline int take_positive(Json& sec, const std::string& where, const char* key, int fallback) {
  const int v = take(sec, where, key, fallback);
  if (v < 1) bad_field(where + "." + key, "must be positive");
  return v;
}

inline double take_positive(Json& sec, const std::string& where, const char* key, double fallback) {
  const double v = take(sec, where, key, fallback);
  if (!(v > 0.0)) bad_field(where + "." + key, "must be positive");
  return v;
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

}  // namespace detail

/// Reads the experiment config, resolves the model reference and fills defaults.
inline ExperimentConfig load_experiment(const std::filesystem::path& path, const RunOverrides& ov) {
  const Json doc = read_json_file(path);
  if (!doc.is_object()) detail::bad_field(path.string(), "config must be a JSON object");
  ExperimentConfig cfg;
  if (!doc.contains("experiment") || !doc.at("experiment").is_string())
    detail::bad_field(path.string(), "missing string field \"experiment\"");
  cfg.kind = doc.at("experiment").get<std::string>();
  bool known = false;
  for (const auto& k : experiment_kinds()) known = known || k == cfg.kind;
  if (!known) detail::bad_field(path.string() + ".experiment", "unknown kind \"" + cfg.kind + "\"");

  cfg.seed = 0;
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) detail::bad_field(path.string() + ".seed", "expected an unsigned 64-bit integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (ov.seed) cfg.seed = *ov.seed;
  cfg.threads = ov.threads;
  if (cfg.threads <= 0 && doc.contains("threads")) cfg.threads = doc.at("threads").get<int>();

  const std::filesystem::path base = path.parent_path();
  if (ov.out) {
    cfg.out = *ov.out;
  } else if (doc.contains("out") && doc.at("out").is_string()) {
    cfg.out = base / doc.at("out").get<std::string>();
  } else {
    cfg.out = "gleh-out";
  }

  cfg.resolved = Json::object();
  cfg.resolved["experiment"] = cfg.kind;
  cfg.resolved["seed"] = cfg.seed;
  if (doc.contains("model")) {
    const Json& m = doc.at("model");
    if (m.is_string()) {
      const std::filesystem::path mp = base / m.get<std::string>();
      cfg.model = load_model_file(mp);
      cfg.model->source = m.get<std::string>();
    } else if (m.is_object()) {
      cfg.model = parse_model(m, "model");
    } else {
      detail::bad_field(path.string() + ".model", "expected a file path or an inline object");
    }
    cfg.resolved["model"] = cfg.model->document;
  } else if (cfg.kind != "bath") {
    detail::bad_field(path.string(), "experiment \"" + cfg.kind + "\" needs a \"model\"");
  }
  cfg.params = detail::section_or_empty(doc, cfg.kind);
  return cfg;
}

/// One artifact file recorded in the manifest.
struct Artifact {
  std::string name;
  std::size_t bytes = 0;
};

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    write_text_file(dir_ / name, content);
    files_.push_back({name, content.size()});
  }

  void write_csv(const std::string& name, const CsvTable& t) { write(name, t.str()); }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<Artifact>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<Artifact> files_;
};

// ---------------------------------------------------------------- homogenize

inline HomogenizeOptions::Route parse_route(const std::string& s, const std::string& where) {
  if (s == "automatic") return HomogenizeOptions::Route::automatic;
  if (s == "generic") return HomogenizeOptions::Route::generic;
  if (s == "closed_form") return HomogenizeOptions::Route::closed_form;
  detail::bad_field(where, "route must be automatic, generic or closed_form");
}

inline std::vector<Vector> segment_grid(const Vector& lo, const Vector& hi, int points) {
  std::vector<Vector> out;
  for (int i = 0; i < points; ++i) {
    const double s = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    out.push_back(lo + s * (hi - lo));
  }
  return out;
}

inline void run_homogenize(ExperimentConfig& cfg, ArtifactWriter& w) {
  Json& p = cfg.params;
  const std::string where = "homogenize";
  const ModelFile& mf = *cfg.model;
  const GLESystem sys = build_system(mf);
  HomogenizeOptions opt;
  opt.route = parse_route(detail::take<std::string>(p, where, "route", "automatic"), where + ".route");
  opt.allow_fd = detail::take(p, where, "allow_fd", true);
  const int points = detail::take_positive(p, where, "points", 50);
  const std::vector<double> lo = detail::take(p, where, "lo", std::vector<double>(mf.probe_lo.data(), mf.probe_lo.data() + mf.d));
  const std::vector<double> hi = detail::take(p, where, "hi", std::vector<double>(mf.probe_hi.data(), mf.probe_hi.data() + mf.d));
  if (static_cast<int>(lo.size()) != mf.d || static_cast<int>(hi.size()) != mf.d)
    detail::bad_field(where, "lo and hi must have d entries");

  const HomogenizedSDE hsde = homogenized_sde(sys, opt);
  const int d = sys.d();
  std::vector<std::string> header;
  for (int i = 0; i < d; ++i) header.push_back(d == 1 ? "x" : "x" + std::to_string(i + 1));
  auto comp = [d](const std::string& base, int i) { return d == 1 ? base : base + "_" + std::to_string(i + 1); };
  for (const char* name : {"S1", "S2", "S3", "drift", "forcing"})
    for (int i = 0; i < d; ++i) header.push_back(comp(name, i));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < hsde.noise_dim; ++j)
      header.push_back(d == 1 && hsde.noise_dim == 1 ? "diffusion" : "diffusion_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  CsvTable table(header);
  const Vector vlo = Eigen::Map<const Vector>(lo.data(), d), vhi = Eigen::Map<const Vector>(hi.data(), d);
  for (const Vector& x : segment_grid(vlo, vhi, points)) {
    const DriftTerms s = hsde.components(x);
    const Vector f = hsde.forcing(x);
    const Matrix D = hsde.diffusion(x);
    std::vector<double> row(x.data(), x.data() + d);
    for (const Vector* v : {&s.S1, &s.S2, &s.S3}) row.insert(row.end(), v->data(), v->data() + d);
    const Vector drift = s.sum() + f;
    row.insert(row.end(), drift.data(), drift.data() + d);
    row.insert(row.end(), f.data(), f.data() + d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < hsde.noise_dim; ++j) row.push_back(D(i, j));
    table.add_numbers(row);
  }
  w.write_csv("homogenized.csv", table);

  const EffectiveConstants K = effective_constants(sys);
  const FdtReport fdt = check_fdt(sys);
  Json rep;
  rep["provenance"] = provenance_name(hsde.provenance);
  rep["K1"] = detail::matrix_json(K.K1);
  rep["K2"] = detail::matrix_json(K.K2);
  rep["fdt_holds"] = fdt.holds;
  rep["points"] = points;
  w.write_json("homogenize.json", rep);
}

// ---------------------------------------------------------------- converge

inline Scheme parse_scheme(const std::string& s, const std::string& where) {
  if (s == "semi_implicit") return Scheme::semi_implicit;
  if (s == "euler_maruyama") return Scheme::euler_maruyama;
  detail::bad_field(where, "scheme must be semi_implicit or euler_maruyama");
}

inline void run_converge(ExperimentConfig& cfg, ArtifactWriter& w) {
  Json& p = cfg.params;
  const std::string where = "converge";
  const ModelFile& mf = *cfg.model;
  const GLESystem sys = build_system(mf);
  HomogenizeOptions opt;
  opt.route = parse_route(detail::take<std::string>(p, where, "route", "automatic"), where + ".route");
  SimulationConfig sc;
  const std::vector<double> eps = detail::take_list(p, where, "epsilons", {0.2, 0.1, 0.05, 0.025});
  for (double e : eps)
    if (!(e > 0.0)) detail::bad_field(where + ".epsilons", "entries must be positive");
  sc.T = detail::take_positive(p, where, "T", 1.0);
  sc.dt = detail::take_positive(p, where, "dt", 5e-4);
  sc.ensemble_size = detail::take_positive(p, where, "paths", 200);
  sc.steps_per_epsilon = detail::take_positive(p, where, "steps_per_epsilon", 40.0);
  sc.scheme = parse_scheme(detail::take<std::string>(p, where, "scheme", "semi_implicit"), where + ".scheme");
  sc.seed = cfg.seed;
  sc.threads = cfg.threads;
  sc.x0 = mf.x0;
  const HomogenizedSDE hsde = homogenized_sde(sys, opt);
  const std::vector<SupErrorStats> stats = coupled_sup_error(sys, hsde, eps, sc);
  CsvTable table({"epsilon", "median", "q25", "q75", "n_paths", "dt", "seed"});
  Json records = Json::array();
  for (const auto& s : stats) {
    table.add_row({format_number(s.epsilon), format_number(s.median), format_number(s.q25), format_number(s.q75),
                   std::to_string(s.n_paths), format_number(s.dt), std::to_string(s.seed)});
    records.push_back({{"epsilon", s.epsilon}, {"median", s.median}, {"q25", s.q25}, {"q75", s.q75},
                       {"n_paths", s.n_paths}, {"dt", s.dt}, {"seed", s.seed}});
  }
  w.write_csv("convergence.csv", table);
  Json rep;
  rep["provenance"] = provenance_name(hsde.provenance);
  rep["records"] = records;
  w.write_json("convergence.json", rep);
}

// ---------------------------------------------------------------- thermo

inline void run_thermo(ExperimentConfig& cfg, ArtifactWriter& w) {
  Json& p = cfg.params;
  const std::string where = "thermo";
  const ModelFile& mf = *cfg.model;
  if (!mf.thermo) detail::bad_field(where, "model needs a \"thermophoresis\" section");
  const ThermoModel& tm = *mf.thermo;
  const int points = detail::take_positive(p, where, "points", 101);
  const StationaryDensity rho(tm, tm.a, tm.b);
  CsvTable dens({"x", "T", "D", "drift", "rho"});
  for (int i = 0; i < points; ++i) {
    const double x = points == 1 ? tm.a : tm.a + (tm.b - tm.a) * i / (points - 1);
    dens.add_numbers({x, temperature(tm, x).value, diffusion_coefficient(tm, x).value, thermo_drift(tm, x), rho.density(x)});
  }
  w.write_csv("density.csv", dens);

  Json rep;
  rep["noise"] = tm.noise.kind == NoiseFamily::Kind::ou ? "ou" : "harmonic";
  rep["r"] = tm.r();
  rep["total_mass"] = rho.total_mass();
  const std::vector<double> probes = detail::take(p, where, "critical_x", std::vector<double>{0.5 * (tm.a + tm.b)});
  Json crit = Json::array();
  for (double x : probes) crit.push_back({{"x", x}, {"ratios", critical_ratio(tm, x)}});
  rep["critical_ratios"] = crit;

  if (detail::take(p, where, "simulate", false)) {
    ReflectConfig rc;
    rc.dt = detail::take_positive(p, where, "dt", 1e-4);
    rc.burn_in = detail::take_positive(p, where, "burn_in", 1.0);
    rc.sample_every = detail::take_positive(p, where, "sample_every", 100);
    rc.samples_per_path = detail::take_positive(p, where, "samples_per_path", 1000);
    rc.n_paths = detail::take_positive(p, where, "paths", 1000);
    rc.bins = detail::take_positive(p, where, "bins", 100);
    rc.seed = cfg.seed;
    rc.threads = cfg.threads;
    const Histogram h = reflecting_sim(thermo_limit_sde(tm), tm.a, tm.b, rc);
    CsvTable occ({"bin_lo", "bin_hi", "count", "empirical_density", "theory_density"});
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double theory = (rho.cdf(h.edges[i + 1]) - rho.cdf(h.edges[i])) / h.bin_width(i);
      occ.add_row({format_number(h.edges[i]), format_number(h.edges[i + 1]), std::to_string(h.counts[i]),
                   format_number(h.density(i)), format_number(theory)});
    }
    w.write_csv("occupancy.csv", occ);
    rep["samples"] = h.total;
    rep["ks_statistic"] = ks_statistic(h, [&rho](double x) { return rho.cdf(x); });
  }
  w.write_json("thermo.json", rep);
}

// ---------------------------------------------------------------- bath

inline BathTarget parse_bath_target(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type")) detail::bad_field(where, "expected {\"type\": \"ou\"|\"harmonic\", ...}");
  BathTarget t;
  const std::string type = j.at("type").get<std::string>();
  if (type == "ou") {
    t.kind = BathTarget::Kind::ou;
    t.alpha = detail::number_or(j, "alpha", 1.0, where);
  } else if (type == "harmonic") {
    t.kind = BathTarget::Kind::harmonic;
    t.omega = detail::number_or(j, "Omega", 1.0, where);
    t.tau = detail::number_or(j, "tau", 1.0, where);
  } else {
    detail::bad_field(where, "unknown target type \"" + type + "\"");
  }
  return t;
}

inline void run_bath(ExperimentConfig& cfg, ArtifactWriter& w) {
  Json& p = cfg.params;
  const std::string where = "bath";
  if (!p.contains("target")) p["target"] = Json{{"type", "ou"}, {"alpha", 1.0}};
  const BathTarget target = parse_bath_target(p.at("target"), where + ".target");
  const int N = detail::take(p, where, "N", 1000);
  const double omega_max = detail::take_positive(p, where, "omega_max", 50.0 * target.fastest_rate());
  BathModel bath = debye_sampling(target, N, omega_max);
  bath.beta = 1.0 / detail::take_positive(p, where, "kT", 1.0);
  const double t_max = detail::take_positive(p, where, "t_max", 3.0);
  const int points = detail::take_positive(p, where, "points", 301);

  CsvTable kern({"t", "kappa_N", "kappa_target", "kappa_truncated"});
  double sup = 0.0;
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : t_max * i / (points - 1);
    const double kn = kernel_sum(bath, t), kt = target.kernel(t);
    sup = std::max(sup, std::abs(kn - kt));
    kern.add_numbers({t, kn, kt, truncated_kernel(target, omega_max, t)});
  }
  w.write_csv("kernel.csv", kern);

  const std::vector<double> refs = detail::take_list(p, where, "reference_times", {0.0, 1.0, 2.0});
  const std::vector<double> lags = detail::take_list(p, where, "lags", {0.0, 0.5, 1.0, 1.5, 2.0});
  const int paths = detail::take_positive(p, where, "paths", 2000);
  std::vector<std::pair<double, double>> pairs;
  for (double s : refs)
    for (double l : lags) pairs.emplace_back(s + l, s);
  const auto rows = bath_noise_covariance(bath, pairs, paths, cfg.seed, cfg.threads);
  CsvTable cov({"t", "s", "mean", "standard_error", "target"});
  double max_z = 0.0;
  for (const auto& r : rows) {
    cov.add_numbers({r.t, r.s, r.mean, r.standard_error, r.target});
    max_z = std::max(max_z, std::abs(r.mean - r.target) / std::max(r.standard_error, 1e-300));
  }
  w.write_csv("noise_covariance.csv", cov);
  Json rep;
  rep["N"] = N;
  rep["omega_max"] = omega_max;
  rep["kernel_sup_error"] = sup;
  rep["kernel_sup_relative"] = sup / std::abs(target.kernel(0.0));
  rep["covariance_max_z"] = max_z;
  rep["paths"] = paths;
  w.write_json("bath.json", rep);
}

// ---------------------------------------------------------------- noise-stats

inline void run_noise_stats(ExperimentConfig& cfg, ArtifactWriter& w) {
  Json& p = cfg.params;
  const std::string where = "noise-stats";
  const ModelFile& mf = *cfg.model;
  const GLESystem sys = build_system(mf);
  const std::string source = detail::take<std::string>(p, where, "source", "noise");
  if (source != "noise" && source != "kernel") detail::bad_field(where + ".source", "must be noise or kernel");
  const RealizationTriple& tr = source == "noise" ? sys.noise : sys.kernel;
  const double lag_unit = detail::take_positive(p, where, "lag_unit", 1.0);
  const int substeps = detail::take_positive(p, where, "substeps", 1);
  const std::vector<double> lag_units = detail::take_list(p, where, "lags", {0.0, 1.0, 2.0, 3.0});
  const int paths = detail::take_positive(p, where, "paths", 10000);
  const int refs = detail::take_positive(p, where, "reference_samples", 20);
  const double burn = detail::take_positive(p, where, "burn_in", 10.0 * max_timescale(tr));
  const double dt = lag_unit / substeps;
  std::vector<int> lags;
  for (double l : lag_units) {
    if (l < 0 || std::abs(l - std::round(l)) > 1e-12) detail::bad_field(where + ".lags", "lags are nonnegative integers");
    lags.push_back(static_cast<int>(std::lround(l)) * substeps);
  }
  const int max_lag = *std::max_element(lags.begin(), lags.end());
  const int burn_steps = static_cast<int>(std::ceil(burn / dt));
  const int steps = burn_steps + max_lag + refs * substeps;
  std::vector<Matrix> samples(static_cast<std::size_t>(paths));
  parallel_for(static_cast<std::size_t>(paths), cfg.threads, [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, i);
    samples[i] = simulate_noise(tr, dt, steps, rng);
  });
  const CovarianceEstimate est = estimate_covariance(samples, lags, burn_steps, substeps);
  CsvTable table({"lag", "i", "j", "mean", "standard_error", "target", "z"});
  double max_z = 0.0;
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const Matrix target = covariance_eval(tr, lags[k] * dt);
    for (Eigen::Index i = 0; i < target.rows(); ++i)
      for (Eigen::Index j = 0; j < target.cols(); ++j) {
        const double se = est.standard_error[k](i, j);
        const double z = std::abs(est.mean[k](i, j) - target(i, j)) / std::max(se, 1e-300);
        max_z = std::max(max_z, z);
        table.add_row({format_number(lags[k] * dt), std::to_string(i + 1), std::to_string(j + 1),
                       format_number(est.mean[k](i, j)), format_number(se), format_number(target(i, j)), format_number(z)});
      }
  }
  w.write_csv("covariance.csv", table);
  Json rep;
  rep["source"] = source;
  rep["paths"] = paths;
  rep["burn_in"] = burn;
  rep["max_z"] = max_z;
  w.write_json("noise_stats.json", rep);
}

/// Runs the configured experiment and writes its artifacts plus manifest.json.
inline Json run_experiment(ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  if (cfg.kind == "homogenize") run_homogenize(cfg, w);
  else if (cfg.kind == "converge") run_converge(cfg, w);
  else if (cfg.kind == "thermo") run_thermo(cfg, w);
  else if (cfg.kind == "bath") run_bath(cfg, w);
  else run_noise_stats(cfg, w);
  cfg.resolved[cfg.kind] = cfg.params;
  Json manifest;
  manifest["tool"] = "gleh";
  manifest["version"] = kVersion;
  manifest["experiment"] = cfg.kind;
  manifest["seed"] = cfg.seed;
  Json files = Json::array();
  for (const auto& f : w.files()) files.push_back({{"name", f.name}, {"bytes", f.bytes}});
  manifest["files"] = files;
  manifest["config"] = cfg.resolved;
  write_text_file(cfg.out / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------- validate

struct ValidationCheck {
  std::string name;
  std::string status;  // PASS, FAIL, SKIP or INFO
  std::string detail;
  std::optional<ErrorCode> code;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (c.status == "FAIL") return false;
    return true;
  }

  std::optional<ErrorCode> first_failure() const {
    for (const auto& c : checks)
      if (c.status == "FAIL") return c.code.value_or(ErrorCode::ModelValidationError);
    return std::nullopt;
  }

  Json to_json() const {
    Json a = Json::array();
    for (const auto& c : checks) {
      Json j{{"check", c.name}, {"status", c.status}, {"detail", c.detail}};
      if (c.code) j["error"] = error_name(*c.code);
      a.push_back(j);
    }
    return Json{{"passed", passed()}, {"checks", a}};
  }
};

/// Runs every structural assumption separately so that each failure is named.
inline ValidationReport validate_model(const ModelFile& mf) {
  ValidationReport rep;
  auto attempt = [&rep](const std::string& name, const std::function<std::string()>& fn) {
    try {
      rep.checks.push_back({name, "PASS", fn(), std::nullopt});
      return true;
    } catch (const Error& e) {
      rep.checks.push_back({name, "FAIL", e.what(), e.code()});
    } catch (const std::exception& e) {
      rep.checks.push_back({name, "FAIL", e.what(), ErrorCode::NumericalFailure});
    }
    return false;
  };
  auto skip = [&rep](const std::string& name) { rep.checks.push_back({name, "SKIP", "prerequisite failed", std::nullopt}); };

  GLESystem sys;
  bool ok = true;
  if (mf.thermo) {
    ok = attempt("thermophoresis model", [&] {
      sys = to_gle_system(*mf.thermo);
      for (const Vector& x : sys.probes) damping_and_noise(*mf.thermo, x(0));
      return std::string("D > 0 and T > 0 at the probes");
    });
  } else {
    const bool k_ok = attempt("kernel triple", [&] {
      sys.kernel = build_triple(mf.kernel, true, "kernel");
      std::ostringstream os;
      os << "positive stable, min Re(eig) = " << spectral_check(sys.kernel.Gamma).min_real_part;
      return os.str();
    });
    const bool n_ok = attempt("noise triple", [&] {
      sys.noise = build_triple(mf.noise, false, "noise");
      std::ostringstream os;
      os << "positive stable, min Re(eig) = " << spectral_check(sys.noise.Gamma).min_real_part;
      return os.str();
    });
    ok = k_ok && n_ok;
    if (ok)
      ok = attempt("coefficients", [&] {
        sys = build_system(mf);
        validate_system(sys);
        return std::string("shapes and finiteness at ") + std::to_string(sys.probes.size()) + " probes";
      });
    else
      skip("coefficients");
  }
  const std::vector<std::string> rest = {"effective constants", "theta invertible", "gamma_hat positive stable",
                                         "B_lambda invertibility", "derivatives", "fluctuation-dissipation"};
  if (!ok) {
    for (const auto& n : rest) skip(n);
    return rep;
  }
  Matrix K1;
  const bool k_ok = attempt("effective constants", [&] {
    const EffectiveConstants K = effective_constants(sys);
    K1 = K.K1;
    std::ostringstream os;
    os << "cond(K1) = " << condition_number(K.K1) << ", cond(K2) = " << condition_number(K.K2);
    return os.str();
  });
  if (!k_ok) {
    for (std::size_t i = 1; i < rest.size(); ++i) skip(rest[i]);
    return rep;
  }
  attempt("theta invertible", [&] {
    double worst = 0.0;
    for (const Vector& x : sys.probes) worst = std::max(worst, condition_number(theta(sys, x, K1)));
    std::ostringstream os;
    os << "max cond(theta) = " << worst;
    return os.str();
  });
  attempt("gamma_hat positive stable", [&] {
    double worst = std::numeric_limits<double>::infinity();
    for (const Vector& x : sys.probes) {
      const SpectralReport s = spectral_check(assemble_gamma_hat(sys, x));
      if (!s.positive_stable) {
        std::ostringstream os;
        os << "gamma_hat not positive stable at x = [" << x.transpose() << "]";
        throw Error(ErrorCode::NotPositiveStable, os.str());
      }
      worst = std::min(worst, s.min_real_part);
    }
    std::ostringstream os;
    os << "min Re(eig) = " << worst;
    return os.str();
  });
  attempt("B_lambda invertibility", [&] {
    const BLambdaReport b = check_b_lambda(sys, sys.probes);
    std::ostringstream os;
    os << "min singular value " << b.min_value << " over " << b.lambdas.size() << " lambdas (sampled)";
    if (!b.pass) throw Error(ErrorCode::ModelValidationError, os.str());
    return os.str();
  });
  attempt("derivatives", [&] {
    double worst = 0.0;
    for (const Vector& x : sys.probes) {
      const ProductDerivatives a = analytic_product_derivatives(sys, x, K1);
      const ProductDerivatives f = fd_product_derivatives(sys, x, K1);
      for (std::size_t l = 0; l < a.dP1.size(); ++l) {
        const auto rel = [](const Matrix& u, const Matrix& v) { return (u - v).norm() / (1.0 + v.norm()); };
        worst = std::max({worst, rel(a.dP1[l], f.dP1[l]), rel(a.dP2[l], f.dP2[l]), rel(a.dP3[l], f.dP3[l])});
      }
    }
    std::ostringstream os;
    os << "max relative mismatch vs central differences " << worst;
    if (!(worst <= 1e-6)) throw Error(ErrorCode::JacobianUnavailable, os.str());
    return os.str();
  });
  {
    const FdtReport f = check_fdt(sys);
    std::string detail = f.holds ? "holds" : "does not hold";
    for (const auto& s : f.failures) detail += "; " + s;
    rep.checks.push_back({"fluctuation-dissipation", "INFO", detail, std::nullopt});
  }
  return rep;
}

inline std::string format_report(const ValidationReport& rep) {
  std::ostringstream os;
  for (const auto& c : rep.checks) {
    os << c.status << "  " << c.name << ": " << c.detail;
    if (c.code) os << " [" << error_name(*c.code) << "]";
    os << "\n";
  }
  os << (rep.passed() ? "all checks passed" : "validation failed") << "\n";
  return os.str();
}

}  // namespace gleh
