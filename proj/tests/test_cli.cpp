#include <sys/wait.h>

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "gleh/experiments.hpp"
#include "gleh/io.hpp"
#include "gleh/model_file.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(GLEH_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(GLEH_TEST_SCRATCH) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* kScalarModel = R"j({
  "dimension": 1,
  "kernel": KERNEL,
  "noise": {"type": "ou", "A": 1.0},
  "coefficients": {"F": "-x", "g": "sqrt(2 + sin(x))", "sigma": "1"}
})j";

std::string scalar_model(const std::string& kernel) {
  std::string s = kScalarModel;
  s.replace(s.find("KERNEL"), 6, kernel);
  return s;
}

}  // namespace

TEST(Csv, QuotesPerRfc4180) {
  EXPECT_EQ(gleh::csv_field("plain"), "plain");
  EXPECT_EQ(gleh::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(gleh::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(gleh::csv_field("two\nlines"), "\"two\nlines\"");
  gleh::CsvTable t({"x", "label"});
  t.add_row({"1", "p,q"});
  EXPECT_EQ(t.str(), "x,label\r\n1,\"p,q\"\r\n");
  EXPECT_THROW(t.add_row({"only one"}), gleh::Error);
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, -1.0 / 3.0, 6.02214076e23, 5e-324}) {
    const std::string s = gleh::format_number(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v) << s;
  }
  EXPECT_EQ(gleh::format_number(2.0), "2");
}

TEST(ModelFile, MalformedJsonReportsLineAndColumn) {
  try {
    gleh::parse_json_text("{\n  \"a\": 1,\n  \"b\": ]\n}", "bad.json");
    FAIL();
  } catch (const gleh::Error& e) {
    EXPECT_EQ(e.code(), gleh::ErrorCode::ConfigParseError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  }
}

TEST(ModelFile, ParsesBenchmarkAndBuildsSystem) {
  const auto mf = gleh::load_model_file(fs::path(GLEH_SOURCE_DIR) / "models" / "ou_benchmark.json");
  const auto sys = gleh::build_system(mf);
  EXPECT_EQ(sys.d(), 1);
  EXPECT_EQ(sys.family.kind, gleh::NoiseFamily::Kind::ou);
  const gleh::Vector x = gleh::Vector::Constant(1, 0.4);
  EXPECT_NEAR(sys.coeffs.g(x)(0, 0), std::sqrt(2 + std::sin(0.4)), 1e-15);
  EXPECT_NEAR(sys.coeffs.dg(x)[0](0, 0), std::cos(0.4) / (2 * std::sqrt(2 + std::sin(0.4))), 1e-15);
  EXPECT_NEAR(sys.coeffs.h(x)(0, 0), sys.coeffs.g(x)(0, 0), 0.0);
}

TEST(ModelFile, UnknownTripleTypeIsConfigError) {
  try {
    gleh::parse_model(gleh::parse_json_text(scalar_model(R"({"type": "bessel"})"), "m"), "m");
    FAIL();
  } catch (const gleh::Error& e) {
    EXPECT_EQ(e.code(), gleh::ErrorCode::ConfigParseError);
  }
}

TEST(Cli, MalformedConfigExitsTwo) {
  const auto dir = scratch("malformed");
  write(dir / "bad.json", "{ \"experiment\": \"homogenize\",\n  \"seed\": }");
  const auto o = run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(o.status, 2) << o.output;
  EXPECT_NE(o.output.find("line 2"), std::string::npos) << o.output;
}

TEST(Cli, MissingConfigFlagExitsTwo) { EXPECT_EQ(run_cli("run").status, 2); }

TEST(Cli, BadThreadEnvironmentExitsTwo) {
  const auto o = run_cli("run --config " + std::string(GLEH_SOURCE_DIR) + "/configs/homogenize_ou.json --out " +
                             scratch("threads").string(),
                         "GLEH_THREADS=zero");
  EXPECT_EQ(o.status, 2) << o.output;
}

TEST(Cli, ValidateUnstableGammaExitsThree) {
  const auto dir = scratch("unstable");
  write(dir / "m.json", scalar_model(R"({"type": "triple", "Gamma": [[-1]], "M": [[1]], "C": [[1]], "Sigma": [[1]]})"));
  const auto o = run_cli("validate --config " + (dir / "m.json").string());
  EXPECT_EQ(o.status, 3) << o.output;
  EXPECT_NE(o.output.find("FAIL  kernel triple"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("NotPositiveStable"), std::string::npos) << o.output;
}

TEST(Cli, ValidateRankDeficientReadoutNamesEffectiveConstant) {
  const auto dir = scratch("rankdef");
  write(dir / "m.json",
        scalar_model(R"({"type": "triple", "Gamma": [[1, 0], [0, 2]], "M": [[0.5, 0], [0, 0.25]], "C": [[0, 0]],
                        "Sigma": [[1, 0], [0, 1]]})"));
  const auto o = run_cli("validate --config " + (dir / "m.json").string() + " --out " + (dir / "report").string());
  EXPECT_EQ(o.status, 3) << o.output;
  EXPECT_NE(o.output.find("FAIL  effective constants"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("SingularEffectiveConstant"), std::string::npos) << o.output;
  EXPECT_TRUE(fs::exists(dir / "report" / "validation.json"));
}

TEST(Cli, ValidateBenchmarkPasses) {
  const auto o = run_cli("validate --config " + std::string(GLEH_SOURCE_DIR) + "/models/ou_benchmark.json");
  EXPECT_EQ(o.status, 0) << o.output;
  EXPECT_NE(o.output.find("all checks passed"), std::string::npos);
}

TEST(Cli, RunIsByteReproducible) {
  const std::string cfg = std::string(GLEH_SOURCE_DIR) + "/configs/homogenize_ou.json";
  const auto a = scratch("repro_a"), b = scratch("repro_b");
  ASSERT_EQ(run_cli("run --config " + cfg + " --out " + a.string() + " --threads 1").status, 0);
  ASSERT_EQ(run_cli("run --config " + cfg + " --out " + b.string(), "GLEH_THREADS=3").status, 0);
  for (const char* f : {"manifest.json", "homogenized.csv", "homogenize.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string manifest = slurp(a / "manifest.json");
  EXPECT_EQ(manifest.find("time"), std::string::npos);
  EXPECT_NE(manifest.find("\"seed\": 1"), std::string::npos) << manifest;
}

TEST(Cli, SeedFlagOverridesConfig) {
  const std::string cfg = std::string(GLEH_SOURCE_DIR) + "/configs/homogenize_ou.json";
  const auto a = scratch("seeded");
  ASSERT_EQ(run_cli("run --config " + cfg + " --out " + a.string() + " --seed 99").status, 0);
  EXPECT_NE(slurp(a / "manifest.json").find("\"seed\": 99"), std::string::npos);
}

TEST(Cli, NoiseStatsRunIsSeedDeterministic) {
  const auto dir = scratch("noise");
  write(dir / "cfg.json", R"({
  "experiment": "noise-stats",
  "seed": 5,
  "model": {"dimension": 1, "kernel": {"type": "ou", "A": 1.0}, "noise": {"type": "harmonic", "Omega": 1.5},
            "coefficients": {"F": "0", "g": "1", "sigma": "1"}},
  "noise-stats": {"paths": 200, "lags": [0, 1]}
})");
  ASSERT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --out " + (dir / "a").string()).status, 0);
  ASSERT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --out " + (dir / "b").string()).status, 0);
  EXPECT_EQ(slurp(dir / "a" / "covariance.csv"), slurp(dir / "b" / "covariance.csv"));
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
}

TEST(Experiments, UnknownKindIsConfigError) {
  const auto dir = scratch("unknown");
  write(dir / "cfg.json", R"({"experiment": "teleport", "seed": 1})");
  const auto o = run_cli("run --config " + (dir / "cfg.json").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(o.status, 2) << o.output;
}
