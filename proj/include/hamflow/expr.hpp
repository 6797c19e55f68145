#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hamflow/systems.hpp"

namespace hamflow {

/// Forward-mode dual number a + b e with e^2 = 0. Nesting Dual<Dual<double>>
/// gives second derivatives.
template <typename T>
struct Dual {
  T v{};
  T d{};
};

namespace expr {

struct Node;

/// Parsed arithmetic expression over named variables:
///   + - * / ^, unary minus, sin cos exp, numbers, parentheses.
/// Parameters are substituted as constants at parse time.
class Expression {
 public:
  Expression() = default;

  /// Throws ParseError with the offending column.
  static Expression parse(const std::string& text, const std::vector<std::string>& variables,
                          const std::map<std::string, double>& params = {});

  double eval(const Vec& x) const;
  /// Directional derivative along e_i.
  double partial(const Vec& x, int i) const;
  Vec gradient(const Vec& x) const;
  /// Second partial d^2 / dx_i dx_j.
  double second(const Vec& x, int i, int j) const;
  Mat hessian(const Vec& x) const;

  const std::string& text() const { return text_; }

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
  int nvars_ = 0;
};

}  // namespace expr

/// User system given by expressions in the state names:
///   f: n expressions, g: n rows of m expressions, h: one expression.
struct PluginSpec {
  std::string name = "plugin";
  std::vector<std::string> states;
  std::map<std::string, double> params;
  std::vector<std::string> f;
  std::vector<std::vector<std::string>> g;
  std::string h = "0";
};

/// Builds a system whose Jacobians come from dual-number evaluation.
ControlAffineSystem plugin_system(const PluginSpec& spec);

}  // namespace hamflow
