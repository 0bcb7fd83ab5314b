#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "gleh/errors.hpp"

namespace gleh {

/// Value and first derivative along one seeded variable.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }

/// Scalar expression over named variables: numbers, + - * / ^, unary minus, parentheses,
/// exp log sin cos tan tanh sqrt abs, and constants pi and e plus user-supplied ones.
class Expr {
 public:
  Expr() = default;

  static Expr parse(std::string_view text, std::vector<std::string> variables = {"x"},
                    const std::map<std::string, double>& constants = {}) {
    Expr e;
    e.text_ = std::string(text);
    e.variables_ = std::move(variables);
    Parser p{e, text, 0, constants};
    e.root_ = p.parse_sum();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("unexpected character '" + std::string(1, text[p.pos]) + "'");
    return e;
  }

  static Expr constant(double value) {
    Expr e;
    e.text_ = std::to_string(value);
    e.nodes_.push_back({Op::num, value, -1, -1, 0});
    e.root_ = 0;
    return e;
  }

  const std::string& text() const { return text_; }
  std::size_t arity() const { return variables_.size(); }
  bool valid() const { return root_ >= 0; }
  bool depends_on_variables() const {
    for (const auto& n : nodes_)
      if (n.op == Op::var) return true;
    return false;
  }

  double eval(const double* x) const { return eval_dual(x, -1).v; }

  /// Evaluates with the derivative taken along variable `seed` (-1 for none).
  Dual eval_dual(const double* x, int seed) const { return eval_node(root_, x, seed); }

  double operator()(double x) const { return eval(&x); }
  double derivative(double x) const { return eval_dual(&x, 0).d; }

 private:
  enum class Op { num, var, add, sub, mul, div, pow, neg, fn };
  enum class Fn { exp, log, sin, cos, tan, tanh, sqrt, abs };

  struct Node {
    Op op;
    double value;
    int a;
    int b;
    int index;  // variable index or function id
  };

  struct Parser {
    Expr& e;
    std::string_view s;
    std::size_t pos;
    const std::map<std::string, double>& constants;

    [[noreturn]] void fail(const std::string& msg) const {
      throw Error(ErrorCode::ConfigParseError,
                  "expression '" + std::string(s) + "' column " + std::to_string(pos + 1) + ": " + msg);
    }
    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    int add(Node n) {
      e.nodes_.push_back(n);
      return static_cast<int>(e.nodes_.size()) - 1;
    }
    int parse_sum() {
      int lhs = parse_product();
      for (;;) {
        skip_ws();
        if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
          const Op op = s[pos] == '+' ? Op::add : Op::sub;
          ++pos;
          const int rhs = parse_product();
          lhs = add({op, 0.0, lhs, rhs, 0});
        } else {
          return lhs;
        }
      }
    }
    int parse_product() {
      int lhs = parse_unary();
      for (;;) {
        skip_ws();
        if (pos < s.size() && (s[pos] == '*' || s[pos] == '/')) {
          const Op op = s[pos] == '*' ? Op::mul : Op::div;
          ++pos;
          const int rhs = parse_unary();
          lhs = add({op, 0.0, lhs, rhs, 0});
        } else {
          return lhs;
        }
      }
    }
    int parse_unary() {
      skip_ws();
      if (pos < s.size() && s[pos] == '-') {
        ++pos;
        return add({Op::neg, 0.0, parse_unary(), -1, 0});
      }
      if (pos < s.size() && s[pos] == '+') {
        ++pos;
        return parse_unary();
      }
      return parse_power();
    }
    int parse_power() {
      const int base = parse_atom();
      skip_ws();
      if (pos < s.size() && s[pos] == '^') {
        ++pos;
        const int expo = parse_unary();
        return add({Op::pow, 0.0, base, expo, 0});
      }
      return base;
    }
    int parse_atom() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of expression");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        const int inner = parse_sum();
        skip_ws();
        if (pos >= s.size() || s[pos] != ')') fail("expected ')'");
        ++pos;
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const std::string rest(s.substr(pos));
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(rest, &used);
        } catch (const std::exception&) {
          fail("malformed number");
        }
        pos += used;
        return add({Op::num, v, -1, -1, 0});
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        const std::string name(s.substr(start, pos - start));
        skip_ws();
        if (pos < s.size() && s[pos] == '(') {
          static const std::map<std::string, Fn> fns = {{"exp", Fn::exp},   {"log", Fn::log},   {"sin", Fn::sin},
                                                        {"cos", Fn::cos},   {"tan", Fn::tan},   {"tanh", Fn::tanh},
                                                        {"sqrt", Fn::sqrt}, {"abs", Fn::abs}};
          const auto it = fns.find(name);
          if (it == fns.end()) {
            pos = start;
            fail("unknown function '" + name + "'");
          }
          ++pos;
          const int arg = parse_sum();
          skip_ws();
          if (pos >= s.size() || s[pos] != ')') fail("expected ')' after function argument");
          ++pos;
          return add({Op::fn, 0.0, arg, -1, static_cast<int>(it->second)});
        }
        for (std::size_t i = 0; i < e.variables_.size(); ++i)
          if (e.variables_[i] == name) return add({Op::var, 0.0, -1, -1, static_cast<int>(i)});
        if (const auto it = constants.find(name); it != constants.end()) return add({Op::num, it->second, -1, -1, 0});
        if (name == "pi") return add({Op::num, std::numbers::pi, -1, -1, 0});
        if (name == "e") return add({Op::num, std::numbers::e, -1, -1, 0});
        pos = start;
        fail("unknown identifier '" + name + "'");
      }
      fail("unexpected character '" + std::string(1, c) + "'");
    }
  };

  Dual eval_node(int i, const double* x, int seed) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::num: return {n.value, 0.0};
      case Op::var: return {x[n.index], n.index == seed ? 1.0 : 0.0};
      case Op::add: return eval_node(n.a, x, seed) + eval_node(n.b, x, seed);
      case Op::sub: return eval_node(n.a, x, seed) - eval_node(n.b, x, seed);
      case Op::mul: return eval_node(n.a, x, seed) * eval_node(n.b, x, seed);
      case Op::div: return eval_node(n.a, x, seed) / eval_node(n.b, x, seed);
      case Op::neg: return -eval_node(n.a, x, seed);
      case Op::pow: {
        const Dual b = eval_node(n.a, x, seed);
        const Dual p = eval_node(n.b, x, seed);
        const double v = std::pow(b.v, p.v);
        double d = 0.0;
        if (b.d != 0.0) d += p.v * std::pow(b.v, p.v - 1.0) * b.d;
        if (p.d != 0.0) d += v * std::log(b.v) * p.d;
        return {v, d};
      }
      case Op::fn: {
        const Dual u = eval_node(n.a, x, seed);
        switch (static_cast<Fn>(n.index)) {
          case Fn::exp: {
            const double v = std::exp(u.v);
            return {v, v * u.d};
          }
          case Fn::log: return {std::log(u.v), u.d / u.v};
          case Fn::sin: return {std::sin(u.v), std::cos(u.v) * u.d};
          case Fn::cos: return {std::cos(u.v), -std::sin(u.v) * u.d};
          case Fn::tan: {
            const double t = std::tan(u.v);
            return {t, (1.0 + t * t) * u.d};
          }
          case Fn::tanh: {
            const double t = std::tanh(u.v);
            return {t, (1.0 - t * t) * u.d};
          }
          case Fn::sqrt: {
            const double v = std::sqrt(u.v);
            return {v, u.d / (2.0 * v)};
          }
          case Fn::abs: return {std::abs(u.v), u.v < 0 ? -u.d : u.d};
        }
      }
    }
    return {};
  }

  std::string text_;
  std::vector<std::string> variables_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace gleh
