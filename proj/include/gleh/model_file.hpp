#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gleh/errors.hpp"
#include "gleh/expr.hpp"
#include "gleh/model.hpp"
#include "gleh/thermophoresis.hpp"

namespace gleh {

using Json = nlohmann::ordered_json;

/// Reads and parses a JSON document; syntax errors carry line and column.
inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    if (const auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
    throw Error(ErrorCode::ConfigParseError,
                source + ": line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

namespace detail {

[[noreturn]] inline void bad_field(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigParseError, where + ": " + what);
}

inline double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad_field(where, "expected a number");
  return j.get<double>();
}

inline double number_or(const Json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return get_number(obj.at(key), where + "." + key);
}

/// Numeric matrix from a number (1x1), a flat list (diagonal) or a list of rows.
inline Matrix get_matrix(const Json& j, const std::string& where, bool flat_is_diagonal = true) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) bad_field(where, "expected a number or a non-empty array");
  if (!j.front().is_array()) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], where);
    if (flat_is_diagonal) return v.asDiagonal();
    return v;
  }
  const std::size_t rows = j.size(), cols = j.front().size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) bad_field(where, "rows must be arrays of equal length");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = get_number(j[i][k], where);
  }
  return m;
}

inline Vector get_vector(const Json& j, const std::string& where) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) bad_field(where, "expected a number or an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], where);
  return v;
}

inline std::string expr_text(const Json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << j.get<double>();
    return os.str();
  }
  bad_field(where, "expected an expression string or a number");
}

/// Expression grid from a scalar, a flat list (column vector) or a list of rows.
inline std::vector<std::vector<std::string>> get_expr_grid(const Json& j, const std::string& where) {
  std::vector<std::vector<std::string>> out;
  if (!j.is_array()) return {{expr_text(j, where)}};
  if (j.empty()) bad_field(where, "empty array");
  if (!j.front().is_array()) {
    for (const auto& e : j) out.push_back({expr_text(e, where)});
    return out;
  }
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != j.front().size()) bad_field(where, "rows must be arrays of equal length");
    std::vector<std::string> r;
    for (const auto& e : row) r.push_back(expr_text(e, where));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Kernel or noise description: ou(A), harmonic(Omega, tau) or an explicit triple.
struct TripleSpec {
  enum class Type { ou, harmonic, triple };
  Type type = Type::ou;
  Matrix A;
  Matrix Omega;
  double tau = 1.0;
  Matrix Gamma, M, C;
  std::optional<Matrix> Sigma;
};

inline TripleSpec parse_triple_spec(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    detail::bad_field(where, "expected an object with a string field \"type\"");
  TripleSpec s;
  const std::string type = j.at("type").get<std::string>();
  if (type == "ou") {
    s.type = TripleSpec::Type::ou;
    if (!j.contains("A")) detail::bad_field(where, "ou needs \"A\"");
    s.A = detail::get_matrix(j.at("A"), where + ".A");
  } else if (type == "harmonic") {
    s.type = TripleSpec::Type::harmonic;
    if (!j.contains("Omega")) detail::bad_field(where, "harmonic needs \"Omega\"");
    s.Omega = detail::get_matrix(j.at("Omega"), where + ".Omega");
    s.tau = detail::number_or(j, "tau", 1.0, where);
  } else if (type == "triple") {
    s.type = TripleSpec::Type::triple;
    for (const char* key : {"Gamma", "M", "C"})
      if (!j.contains(key)) detail::bad_field(where, std::string("triple needs \"") + key + "\"");
    s.Gamma = detail::get_matrix(j.at("Gamma"), where + ".Gamma", false);
    s.M = detail::get_matrix(j.at("M"), where + ".M", false);
    s.C = detail::get_matrix(j.at("C"), where + ".C", false);
    if (s.C.cols() == 1 && s.Gamma.rows() > 1) s.C.transposeInPlace();
    if (j.contains("Sigma")) s.Sigma = detail::get_matrix(j.at("Sigma"), where + ".Sigma", false);
  } else {
    detail::bad_field(where, "unknown type \"" + type + "\" (ou, harmonic, triple)");
  }
  return s;
}

/// Builds the kernel (use_kernel) or noise triple; validation failures surface as model errors.
inline RealizationTriple build_triple(const TripleSpec& s, bool use_kernel, const std::string& name) {
  switch (s.type) {
    case TripleSpec::Type::ou: {
      const TriplePair p = ou_realization(s.A);
      return use_kernel ? p.kernel : p.noise;
    }
    case TripleSpec::Type::harmonic: {
      const TriplePair p = harmonic_realization(s.Omega, s.tau);
      return use_kernel ? p.kernel : p.noise;
    }
    case TripleSpec::Type::triple:
      return make_triple(s.Gamma, s.M, s.C, s.Sigma, name);
  }
  throw Error(ErrorCode::InvalidTriple, name + ": unknown triple type");
}

/// Parsed model file; build_system turns it into a GLESystem.
struct ModelFile {
  std::string source;
  Json document;
  int d = 1;
  double m0 = 1.0;
  double tau_kappa = 1.0;
  double tau_xi = 1.0;
  TripleSpec kernel;
  TripleSpec noise;
  std::map<std::string, double> constants;
  std::vector<std::string> variables;
  std::vector<std::vector<std::string>> F, g, h, sigma;
  bool h_is_g_transpose = false;
  std::optional<ThermoModel> thermo;
  Vector probe_lo, probe_hi;
  Vector x0;
};

inline NoiseFamily parse_thermo_noise(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type")) detail::bad_field(where, "expected {\"type\": \"ou\"|\"harmonic\", ...}");
  const std::string type = j.at("type").get<std::string>();
  if (type == "ou") return {NoiseFamily::Kind::ou, detail::number_or(j, "alpha", 1.0, where), 0.0};
  if (type == "harmonic") return {NoiseFamily::Kind::harmonic, 0.0, detail::number_or(j, "Omega", 1.0, where)};
  detail::bad_field(where, "unknown noise type \"" + type + "\"");
}

inline ThermoModel parse_thermo(const Json& j, const std::map<std::string, double>& constants, const std::string& where) {
  if (!j.is_object()) detail::bad_field(where, "expected an object");
  ThermoModel m;
  if (!j.contains("T")) detail::bad_field(where, "needs a temperature profile \"T\"");
  auto parse_x = [&](const char* key) { return Expr::parse(detail::expr_text(j.at(key), where + "." + key), {"x"}, constants); };
  try {
    m.T = parse_x("T");
    if (j.contains("D")) m.D = parse_x("D");
    if (j.contains("mu")) m.mu = Expr::parse(detail::expr_text(j.at("mu"), where + ".mu"), {"T"}, constants);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigParseError, where + ": " + e.what());
  }
  m.mu0 = detail::number_or(j, "mu0", 1.0, where);
  m.kB = detail::number_or(j, "kB", 1.0, where);
  if (j.contains("units")) {
    const std::string u = j.at("units").get<std::string>();
    if (u == "si") m.kB = kBoltzmannSI;
    else if (u != "reduced") detail::bad_field(where + ".units", "expected \"reduced\" or \"si\"");
  }
  m.R = detail::number_or(j, "R", 1.0, where);
  m.m0 = detail::number_or(j, "m0", 1.0, where);
  m.tau = detail::number_or(j, "tau", 1.0, where);
  if (j.contains("r")) m.tau = detail::get_number(j.at("r"), where + ".r") * m.m0;
  m.noise = parse_thermo_noise(j.contains("noise") ? j.at("noise") : Json::object({{"type", "ou"}}), where + ".noise");
  if (j.contains("interval")) {
    const Vector iv = detail::get_vector(j.at("interval"), where + ".interval");
    if (iv.size() != 2 || !(iv(0) < iv(1))) detail::bad_field(where + ".interval", "expected [a, b] with a < b");
    m.a = iv(0);
    m.b = iv(1);
  }
  return m;
}

inline ModelFile parse_model(const Json& doc, const std::string& source) {
  if (!doc.is_object()) detail::bad_field(source, "model file must be a JSON object");
  ModelFile mf;
  mf.source = source;
  mf.document = doc;
  if (doc.contains("constants")) {
    if (!doc.at("constants").is_object()) detail::bad_field(source + ".constants", "expected an object");
    for (const auto& [k, v] : doc.at("constants").items()) mf.constants[k] = detail::get_number(v, source + ".constants." + k);
  }
  if (doc.contains("thermophoresis")) {
    mf.thermo = parse_thermo(doc.at("thermophoresis"), mf.constants, source + ".thermophoresis");
    mf.d = 1;
    mf.variables = {"x"};
    mf.probe_lo = Vector::Constant(1, mf.thermo->a);
    mf.probe_hi = Vector::Constant(1, mf.thermo->b);
    mf.x0 = Vector::Constant(1, 0.5 * (mf.thermo->a + mf.thermo->b));
    if (doc.contains("x0")) mf.x0 = detail::get_vector(doc.at("x0"), source + ".x0");
    return mf;
  }
  const double dim = detail::number_or(doc, "dimension", 1.0, source);
  if (dim < 1 || dim != static_cast<int>(dim)) detail::bad_field(source + ".dimension", "expected a positive integer");
  mf.d = static_cast<int>(dim);
  mf.m0 = detail::number_or(doc, "m0", 1.0, source);
  mf.tau_kappa = detail::number_or(doc, "tau_kappa", 1.0, source);
  mf.tau_xi = detail::number_or(doc, "tau_xi", 1.0, source);
  for (const char* key : {"kernel", "noise", "coefficients"})
    if (!doc.contains(key)) detail::bad_field(source, std::string("missing \"") + key + "\"");
  mf.kernel = parse_triple_spec(doc.at("kernel"), source + ".kernel");
  mf.noise = parse_triple_spec(doc.at("noise"), source + ".noise");
  if (mf.d == 1) {
    mf.variables = {"x"};
  } else {
    for (int i = 1; i <= mf.d; ++i) mf.variables.push_back("x" + std::to_string(i));
  }
  const Json& co = doc.at("coefficients");
  const std::string cw = source + ".coefficients";
  if (!co.is_object()) detail::bad_field(cw, "expected an object");
  if (!co.contains("g") || !co.contains("sigma")) detail::bad_field(cw, "needs \"g\" and \"sigma\"");
  mf.g = detail::get_expr_grid(co.at("g"), cw + ".g");
  mf.sigma = detail::get_expr_grid(co.at("sigma"), cw + ".sigma");
  if (co.contains("h")) {
    mf.h = detail::get_expr_grid(co.at("h"), cw + ".h");
  } else {
    mf.h_is_g_transpose = true;
  }
  if (co.contains("F")) {
    mf.F = detail::get_expr_grid(co.at("F"), cw + ".F");
  } else {
    mf.F.assign(static_cast<std::size_t>(mf.d), {"0"});
  }
  mf.probe_lo = Vector::Constant(mf.d, -1.0);
  mf.probe_hi = Vector::Constant(mf.d, 1.0);
  if (doc.contains("probe_box")) {
    const Json& pb = doc.at("probe_box");
    if (!pb.is_object() || !pb.contains("lo") || !pb.contains("hi"))
      detail::bad_field(source + ".probe_box", "expected {\"lo\": [...], \"hi\": [...]}");
    mf.probe_lo = detail::get_vector(pb.at("lo"), source + ".probe_box.lo");
    mf.probe_hi = detail::get_vector(pb.at("hi"), source + ".probe_box.hi");
    if (mf.probe_lo.size() != mf.d || mf.probe_hi.size() != mf.d)
      detail::bad_field(source + ".probe_box", "bounds must have d entries");
  }
  mf.x0 = Vector::Zero(mf.d);
  if (doc.contains("x0")) mf.x0 = detail::get_vector(doc.at("x0"), source + ".x0");
  if (mf.x0.size() != mf.d) detail::bad_field(source + ".x0", "must have d entries");
  return mf;
}

inline ModelFile load_model_file(const std::filesystem::path& path) { return parse_model(read_json_file(path), path.string()); }

namespace detail {

struct ExprGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Expr> cells;  // row-major
};

inline ExprGrid compile_grid(const std::vector<std::vector<std::string>>& g, const ModelFile& mf, const std::string& name) {
  ExprGrid out;
  out.rows = static_cast<int>(g.size());
  out.cols = static_cast<int>(g.front().size());
  for (const auto& row : g)
    for (const auto& text : row) {
      try {
        out.cells.push_back(Expr::parse(text, mf.variables, mf.constants));
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigParseError, mf.source + ".coefficients." + name + ": " + e.what());
      }
    }
  return out;
}

inline Matrix eval_grid(const ExprGrid& g, const Vector& x) {
  Matrix m(g.rows, g.cols);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) m(i, j) = g.cells[static_cast<std::size_t>(i * g.cols + j)].eval(x.data());
  return m;
}

/// Forward-mode partial derivatives, one matrix per state component.
inline std::vector<Matrix> jacobian_grid(const ExprGrid& g, const Vector& x) {
  std::vector<Matrix> out;
  for (int l = 0; l < x.size(); ++l) {
    Matrix m(g.rows, g.cols);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) m(i, j) = g.cells[static_cast<std::size_t>(i * g.cols + j)].eval_dual(x.data(), l).d;
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<Matrix> transpose_all(std::vector<Matrix> v) {
  for (auto& m : v) m.transposeInPlace();
  return v;
}

}  // namespace detail

/// Closed-form family tag: scalar model whose kernel and noise share the OU rate or the harmonic Omega with tau = 1.
inline NoiseFamily infer_family(const ModelFile& mf) {
  if (mf.d != 1 || mf.kernel.type != mf.noise.type) return {};
  if (mf.kernel.type == TripleSpec::Type::ou && mf.kernel.A.size() == 1 && mf.kernel.A(0, 0) == mf.noise.A(0, 0))
    return {NoiseFamily::Kind::ou, mf.kernel.A(0, 0), 0.0};
  if (mf.kernel.type == TripleSpec::Type::harmonic && mf.kernel.Omega.size() == 1 &&
      mf.kernel.Omega(0, 0) == mf.noise.Omega(0, 0) && mf.kernel.tau == 1.0 && mf.noise.tau == 1.0)
    return {NoiseFamily::Kind::harmonic, 0.0, mf.kernel.Omega(0, 0)};
  return {};
}

/// Builds the GLESystem; triple construction may throw model-class errors.
inline GLESystem build_system(const ModelFile& mf) {
  if (mf.thermo) return to_gle_system(*mf.thermo);
  GLESystem sys;
  sys.kernel = build_triple(mf.kernel, true, "kernel");
  sys.noise = build_triple(mf.noise, false, "noise");
  sys.m0 = mf.m0;
  sys.tau_kappa = mf.tau_kappa;
  sys.tau_xi = mf.tau_xi;
  sys.family = infer_family(mf);
  auto& c = sys.coeffs;
  c.d = mf.d;
  c.q = static_cast<int>(sys.kernel.output_dim());
  c.r = static_cast<int>(sys.noise.output_dim());
  const auto F = detail::compile_grid(mf.F, mf, "F");
  const auto g = detail::compile_grid(mf.g, mf, "g");
  const auto s = detail::compile_grid(mf.sigma, mf, "sigma");
  if (F.cols != 1 || F.rows != mf.d) throw Error(ErrorCode::DimensionMismatch, "F must be a vector with d entries");
  c.F = [F](const Vector& x) -> Vector { return detail::eval_grid(F, x).col(0); };
  c.g = [g](const Vector& x) { return detail::eval_grid(g, x); };
  c.sigma = [s](const Vector& x) { return detail::eval_grid(s, x); };
  c.dg = [g](const Vector& x) { return detail::jacobian_grid(g, x); };
  c.dsigma = [s](const Vector& x) { return detail::jacobian_grid(s, x); };
  if (mf.h_is_g_transpose) {
    c.h = [g](const Vector& x) -> Matrix { return detail::eval_grid(g, x).transpose(); };
    c.dh = [g](const Vector& x) { return detail::transpose_all(detail::jacobian_grid(g, x)); };
  } else {
    const auto h = detail::compile_grid(mf.h, mf, "h");
    c.h = [h](const Vector& x) { return detail::eval_grid(h, x); };
    c.dh = [h](const Vector& x) { return detail::jacobian_grid(h, x); };
  }
  sys.probes = sobol_probes(mf.probe_lo, mf.probe_hi);
  return sys;
}

}  // namespace gleh
