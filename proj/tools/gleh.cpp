#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gleh/errors.hpp"
#include "gleh/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitModel = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(gleh::ErrorCode code) {
  switch (gleh::error_class(code)) {
    case gleh::ErrorClass::config:
      return kExitConfig;
    case gleh::ErrorClass::model:
      return kExitModel;
    case gleh::ErrorClass::numerical:
      return kExitNumerical;
  }
  return kExitNumerical;
}

int resolve_thread_flag(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("GLEH_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw gleh::Error(gleh::ErrorCode::ConfigParseError, "GLEH_THREADS must be a positive integer");
  }
  return 0;
}

/// Loads a model file directly, or the model referenced by an experiment config.
gleh::ModelFile load_model_for_validation(const std::filesystem::path& path) {
  const gleh::Json doc = gleh::read_json_file(path);
  if (doc.is_object() && doc.contains("experiment")) {
    if (!doc.contains("model")) throw gleh::Error(gleh::ErrorCode::ConfigParseError, path.string() + ": no model to validate");
    const gleh::Json& m = doc.at("model");
    if (m.is_string()) return gleh::load_model_file(path.parent_path() / m.get<std::string>());
    return gleh::parse_model(m, "model");
  }
  return gleh::parse_model(doc, path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized Langevin equations: homogenization, simulation and validation"};
  app.set_version_flag("--version", std::string(gleh::kVersion));
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "Run an experiment described by a config file");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "64-bit seed overriding the config");
  run->add_option("--threads", threads, "Worker threads (fallback: GLEH_THREADS)");

  CLI::App* validate = app.add_subcommand("validate", "Check the model assumptions and print a report");
  validate->add_option("--config", config, "Model file or experiment config (JSON)")->required();
  validate->add_option("--out", out, "Directory for validation.json");
  validate->add_option("--seed", seed, "Accepted for symmetry with run; unused");
  validate->add_option("--threads", threads, "Accepted for symmetry with run; unused");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      gleh::RunOverrides ov;
      if (!out.empty()) ov.out = out;
      ov.seed = seed;
      ov.threads = resolve_thread_flag(threads);
      gleh::ExperimentConfig cfg = gleh::load_experiment(config, ov);
      const gleh::Json manifest = gleh::run_experiment(cfg);
      std::cout << "wrote " << manifest.at("files").size() + 1 << " files to " << cfg.out.string() << "\n";
      return 0;
    }
    const gleh::ModelFile mf = load_model_for_validation(config);
    const gleh::ValidationReport rep = gleh::validate_model(mf);
    std::cout << gleh::format_report(rep);
    if (!out.empty()) gleh::write_text_file(std::filesystem::path(out) / "validation.json", rep.to_json().dump(2) + "\n");
    if (const auto code = rep.first_failure()) return exit_code_for(*code);
    return 0;
  } catch (const gleh::Error& e) {
    std::cerr << "error [" << gleh::error_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error [NumericalFailure]: " << e.what() << "\n";
    return kExitNumerical;
  }
}
