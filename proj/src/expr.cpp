#include "hamflow/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "hamflow/error.hpp"

namespace hamflow {

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

namespace expr {

// Scalar operations shared by double and (nested) duals.
template <typename T>
struct Ops;

template <>
struct Ops<double> {
  static double constant(double c) { return c; }
  static double sin(double a) { return std::sin(a); }
  static double cos(double a) { return std::cos(a); }
  static double exp(double a) { return std::exp(a); }
  static double log(double a) { return std::log(a); }
  static double powc(double a, double c) { return std::pow(a, c); }
  static double value(double a) { return a; }
};

template <typename T>
struct Ops<Dual<T>> {
  using D = Dual<T>;
  static D constant(double c) { return {Ops<T>::constant(c), Ops<T>::constant(0.0)}; }
  static D sin(const D& a) { return {Ops<T>::sin(a.v), Ops<T>::cos(a.v) * a.d}; }
  static D cos(const D& a) { return {Ops<T>::cos(a.v), -(Ops<T>::sin(a.v) * a.d)}; }
  static D exp(const D& a) {
    const T e = Ops<T>::exp(a.v);
    return {e, e * a.d};
  }
  static D log(const D& a) { return {Ops<T>::log(a.v), a.d / a.v}; }
  static D powc(const D& a, double c) {
    return {Ops<T>::powc(a.v, c), Ops<T>::constant(c) * Ops<T>::powc(a.v, c - 1.0) * a.d};
  }
  static double value(const D& a) { return Ops<T>::value(a.v); }
};

enum class Kind { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp };

struct Node {
  Kind kind = Kind::Num;
  double value = 0.0;
  int var = -1;
  std::shared_ptr<const Node> a, b;
};

namespace {

template <typename T>
T integer_power(T base, long k) {
  T result = Ops<T>::constant(1.0);
  const bool invert = k < 0;
  unsigned long e = invert ? -k : k;
  while (e) {
    if (e & 1) result = result * base;
    base = base * base;
    e >>= 1;
  }
  return invert ? Ops<T>::constant(1.0) / result : result;
}

template <typename T>
T eval_node(const Node& nd, const std::vector<T>& x) {
  switch (nd.kind) {
    case Kind::Num:
      return Ops<T>::constant(nd.value);
    case Kind::Var:
      return x[nd.var];
    case Kind::Neg:
      return -eval_node(*nd.a, x);
    case Kind::Add:
      return eval_node(*nd.a, x) + eval_node(*nd.b, x);
    case Kind::Sub:
      return eval_node(*nd.a, x) - eval_node(*nd.b, x);
    case Kind::Mul:
      return eval_node(*nd.a, x) * eval_node(*nd.b, x);
    case Kind::Div:
      return eval_node(*nd.a, x) / eval_node(*nd.b, x);
    case Kind::Pow: {
      const T base = eval_node(*nd.a, x);
      if (nd.b->kind == Kind::Num) {
        const double c = nd.b->value;
        if (c == std::round(c) && std::abs(c) < 1e6) return integer_power(base, static_cast<long>(c));
        return Ops<T>::powc(base, c);
      }
      return Ops<T>::exp(eval_node(*nd.b, x) * Ops<T>::log(base));
    }
    case Kind::Sin:
      return Ops<T>::sin(eval_node(*nd.a, x));
    case Kind::Cos:
      return Ops<T>::cos(eval_node(*nd.a, x));
    case Kind::Exp:
      return Ops<T>::exp(eval_node(*nd.a, x));
  }
  return Ops<T>::constant(0.0);
}

using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr number(double v) {
  auto n = std::make_shared<Node>();
  n->value = v;
  return n;
}

class Parser {
 public:
  Parser(const std::string& s, const std::vector<std::string>& vars,
         const std::map<std::string, double>& params)
      : s_(s), vars_(vars), params_(params) {}

  NodePtr parse() {
    NodePtr e = expression();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError,
                msg + " at column " + std::to_string(pos_ + 1) + " in '" + s_ + "'");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Kind::Add, lhs, term());
      } else if (accept('-')) {
        lhs = make(Kind::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make(Kind::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = make(Kind::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Kind::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  // Right associative: a^b^c = a^(b^c); -a^2 = -(a^2).
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Kind::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expression();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += end - begin;
      return number(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      const std::string id = s_.substr(start, pos_ - start);
      if (accept('(')) {
        Kind k;
        if (id == "sin") {
          k = Kind::Sin;
        } else if (id == "cos") {
          k = Kind::Cos;
        } else if (id == "exp") {
          k = Kind::Exp;
        } else {
          pos_ = start;
          fail("unknown function '" + id + "'");
        }
        NodePtr arg = expression();
        if (!accept(')')) fail("expected ')'");
        return make(k, arg);
      }
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == id) {
          auto n = std::make_shared<Node>();
          n->kind = Kind::Var;
          n->var = static_cast<int>(i);
          return n;
        }
      }
      if (auto it = params_.find(id); it != params_.end()) return number(it->second);
      if (id == "pi") return number(M_PI);
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& vars_;
  const std::map<std::string, double>& params_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables,
                             const std::map<std::string, double>& params) {
  Expression e;
  e.root_ = Parser(text, variables, params).parse();
  e.text_ = text;
  e.nvars_ = static_cast<int>(variables.size());
  return e;
}

double Expression::eval(const Vec& x) const {
  std::vector<double> v(x.data(), x.data() + x.size());
  return eval_node(*root_, v);
}

double Expression::partial(const Vec& x, int i) const {
  std::vector<Dual<double>> v(x.size());
  for (int k = 0; k < x.size(); ++k) v[k] = {x(k), k == i ? 1.0 : 0.0};
  return eval_node(*root_, v).d;
}

Vec Expression::gradient(const Vec& x) const {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) g(i) = partial(x, i);
  return g;
}

double Expression::second(const Vec& x, int i, int j) const {
  using DD = Dual<Dual<double>>;
  std::vector<DD> v(x.size());
  for (int k = 0; k < x.size(); ++k) {
    v[k].v = {x(k), k == j ? 1.0 : 0.0};
    v[k].d = {k == i ? 1.0 : 0.0, 0.0};
  }
  return eval_node(*root_, v).d.d;
}

Mat Expression::hessian(const Vec& x) const {
  const int n = static_cast<int>(x.size());
  Mat H(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      H(i, j) = second(x, i, j);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

}  // namespace expr

ControlAffineSystem plugin_system(const PluginSpec& spec) {
  const int n = static_cast<int>(spec.states.size());
  if (n == 0) throw Error(ErrorCode::ConfigError, "plugin declares no states");
  if (static_cast<int>(spec.f.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "plugin f has " + std::to_string(spec.f.size()) +
                                                  " components for " + std::to_string(n) + " states");
  }
  if (static_cast<int>(spec.g.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "plugin g must have one row per state");
  }
  const int m = spec.g.empty() ? 0 : static_cast<int>(spec.g.front().size());
  if (m == 0) throw Error(ErrorCode::DimensionMismatch, "plugin g has no input columns");
  for (const auto& row : spec.g) {
    if (static_cast<int>(row.size()) != m) {
      throw Error(ErrorCode::DimensionMismatch, "plugin g rows differ in length");
    }
  }

  using expr::Expression;
  auto fe = std::make_shared<std::vector<Expression>>();
  for (const auto& s : spec.f) fe->push_back(Expression::parse(s, spec.states, spec.params));
  auto ge = std::make_shared<std::vector<Expression>>();  // row major n x m
  for (const auto& row : spec.g) {
    for (const auto& s : row) ge->push_back(Expression::parse(s, spec.states, spec.params));
  }
  auto he = std::make_shared<Expression>(Expression::parse(spec.h, spec.states, spec.params));

  ControlAffineSystem sys;
  sys.name = spec.name;
  sys.n = n;
  sys.m = m;
  sys.f = [fe, n](const Vec& x) {
    Vec out(n);
    for (int i = 0; i < n; ++i) out(i) = (*fe)[i].eval(x);
    return out;
  };
  sys.g = [ge, n, m](const Vec& x) {
    Mat G(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) G(i, j) = (*ge)[i * m + j].eval(x);
    }
    return G;
  };
  sys.h = [he](const Vec& x) { return he->eval(x); };
  sys.Df = [fe, n](const Vec& x) {
    Mat J(n, n);
    for (int i = 0; i < n; ++i) J.row(i) = (*fe)[i].gradient(x).transpose();
    return J;
  };
  sys.Dg = [ge, n, m](const Vec& x) {
    std::vector<Mat> cols(m, Mat(n, n));
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) cols[j].row(i) = (*ge)[i * m + j].gradient(x).transpose();
    }
    return cols;
  };
  sys.Dh = [he](const Vec& x) { return he->gradient(x); };
  sys.D2h0 = he->hessian(Vec::Zero(n));
  return sys;
}

}  // namespace hamflow
