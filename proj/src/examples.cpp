#include <cmath>

#include "hamflow/error.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {
namespace {

Vec v1(double a) { return (Vec(1) << a).finished(); }

ControlAffineSystem scalar_example() {
  ControlAffineSystem sys;
  sys.name = "scalar";
  sys.n = 1;
  sys.m = 1;
  sys.f = [](const Vec& x) { return v1(-x(0) + x(0) * x(0)); };
  sys.g = [](const Vec&) { return Mat::Ones(1, 1).eval(); };
  sys.h = [](const Vec&) { return 0.0; };
  sys.Df = [](const Vec& x) { return Mat::Constant(1, 1, -1.0 + 2.0 * x(0)).eval(); };
  sys.Dg = [](const Vec&) { return std::vector<Mat>{Mat::Zero(1, 1)}; };
  sys.Dh = [](const Vec&) { return Vec::Zero(1).eval(); };
  sys.D2h0 = Mat::Zero(1, 1);
  return sys;
}

ControlAffineSystem generator_example(const GeneratorParams& gp) {
  ControlAffineSystem sys;
  sys.name = "generator";
  sys.n = 3;
  sys.m = 1;
  sys.f = [gp](const Vec& x) {
    Vec dx(3);
    dx(0) = x(1);
    dx(1) = -gp.a * ((1.0 + x(2)) * std::sin(x(0) + gp.delta) - std::sin(gp.delta)) - gp.b * x(1);
    dx(2) = -gp.c * x(2) + gp.d * (std::cos(x(0) + gp.delta) - std::cos(gp.delta));
    return dx;
  };
  sys.g = [](const Vec&) { return Vec::Unit(3, 2).eval(); };
  sys.Df = [gp](const Vec& x) {
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = 1.0;
    J(1, 0) = -gp.a * (1.0 + x(2)) * std::cos(x(0) + gp.delta);
    J(1, 1) = -gp.b;
    J(1, 2) = -gp.a * std::sin(x(0) + gp.delta);
    J(2, 0) = -gp.d * std::sin(x(0) + gp.delta);
    J(2, 2) = -gp.c;
    return J;
  };
  sys.Dg = [](const Vec&) { return std::vector<Mat>{Mat::Zero(3, 3)}; };
  return with_quadratic_penalty(std::move(sys), Mat::Identity(3, 3));
}

ControlAffineSystem pendulum_example(double eps) {
  ControlAffineSystem sys;
  sys.name = "pendulum";
  sys.n = 2;
  sys.m = 1;
  sys.f = [](const Vec& x) {
    const double s = std::sin(x(0)), c = std::cos(x(0));
    const double den = 1.0 + s * s;
    return Vec((Vec(2) << x(1), (s - x(1) * x(1) * s * c) / den).finished());
  };
  sys.g = [](const Vec& x) {
    const double s = std::sin(x(0)), c = std::cos(x(0));
    return Mat((Mat(2, 1) << 0.0, -c / (1.0 + s * s)).finished());
  };
  sys.Df = [](const Vec& x) {
    const double s = std::sin(x(0)), c = std::cos(x(0));
    const double den = 1.0 + s * s;
    const double num = s - x(1) * x(1) * s * c;
    const double dnum = c - x(1) * x(1) * (c * c - s * s);
    Mat J = Mat::Zero(2, 2);
    J(0, 1) = 1.0;
    J(1, 0) = (dnum * den - num * 2.0 * s * c) / (den * den);
    J(1, 1) = -2.0 * x(1) * s * c / den;
    return J;
  };
  sys.Dg = [](const Vec& x) {
    const double s = std::sin(x(0)), c = std::cos(x(0));
    const double den = 1.0 + s * s;
    Mat J = Mat::Zero(2, 2);
    J(1, 0) = s * (den + 2.0 * c * c) / (den * den);
    return std::vector<Mat>{J};
  };
  sys.h = [eps](const Vec& x) { return eps * x.squaredNorm(); };
  sys.Dh = [eps](const Vec& x) { return Vec(2.0 * eps * x); };
  sys.D2h0 = 2.0 * eps * Mat::Identity(2, 2);
  return sys;
}

ControlAffineSystem zero_dynamics_example() {
  ControlAffineSystem sys;
  sys.name = "zero_dynamics";
  sys.n = 3;
  sys.m = 1;
  sys.f = [](const Vec& x) {
    return Vec((Vec(3) << -x(0) + x(0) * x(0) * x(1), x(2), 0.0).finished());
  };
  sys.g = [](const Vec&) { return Vec::Unit(3, 2).eval(); };
  sys.Df = [](const Vec& x) {
    Mat J = Mat::Zero(3, 3);
    J(0, 0) = -1.0 + 2.0 * x(0) * x(1);
    J(0, 1) = x(0) * x(0);
    J(1, 2) = 1.0;
    return J;
  };
  sys.Dg = [](const Vec&) { return std::vector<Mat>{Mat::Zero(3, 3)}; };
  return with_quadratic_penalty(std::move(sys), Mat::Identity(3, 3));
}

}  // namespace

const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names = {"scalar", "generator", "pendulum",
                                                 "zero_dynamics", "backstepping"};
  return names;
}

ControlAffineSystem example_system(const std::string& name, const ExampleOptions& options) {
  ControlAffineSystem sys;
  if (name == "scalar") {
    sys = scalar_example();
  } else if (name == "generator") {
    sys = generator_example(options.generator);
  } else if (name == "pendulum") {
    sys = pendulum_example(options.epsilon);
  } else if (name == "zero_dynamics") {
    sys = zero_dynamics_example();
  } else if (name == "backstepping") {
    sys = to_system(backstepping_cascade());
  } else {
    throw Error(ErrorCode::UnknownExample, "no built-in example named '" + name + "'");
  }
  if (options.penalty_Q) sys = with_quadratic_penalty(std::move(sys), *options.penalty_Q);
  return sys;
}

CascadeSystem backstepping_cascade() {
  CascadeSystem c;
  c.name = "backstepping";
  c.block = 1;
  c.f1 = [](const Vec& x1) { return v1(x1(0) * x1(0)); };
  c.g1 = [](const Vec& x1) { return Mat::Constant(1, 1, 1.0 + x1(0) * x1(0)).eval(); };
  c.Df1 = [](const Vec& x1) { return Mat::Constant(1, 1, 2.0 * x1(0)).eval(); };
  c.Dg1 = [](const Vec& x1) { return std::vector<Mat>{Mat::Constant(1, 1, 2.0 * x1(0))}; };
  c.f2 = [](const Vec& x) { return v1(x(1) * x(1)); };
  c.g2 = [](const Vec&) { return Mat::Ones(1, 1).eval(); };
  c.Df2 = [](const Vec& x) { return Mat((Mat(1, 2) << 0.0, 2.0 * x(1)).finished()); };
  c.Dg2 = [](const Vec&) { return std::vector<Mat>{Mat::Zero(1, 2)}; };
  c.h = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
  c.Dh = [](const Vec& x) { return x; };
  c.D2h0 = Mat::Identity(2, 2);
  return c;
}

ControlAffineSystem to_system(const CascadeSystem& c) {
  const int b = c.block;
  ControlAffineSystem sys;
  sys.name = c.name;
  sys.n = 2 * b;
  sys.m = b;
  sys.f = [c, b](const Vec& x) {
    const Vec x1 = x.head(b), x2 = x.tail(b);
    Vec dx(2 * b);
    dx.head(b) = c.f1(x1) + c.g1(x1) * x2;
    dx.tail(b) = c.f2(x);
    return dx;
  };
  sys.g = [c, b](const Vec& x) {
    Mat G = Mat::Zero(2 * b, b);
    G.bottomRows(b) = c.g2(x);
    return G;
  };
  sys.Df = [c, b](const Vec& x) {
    const Vec x1 = x.head(b), x2 = x.tail(b);
    Mat J = Mat::Zero(2 * b, 2 * b);
    Mat top = c.Df1(x1);
    const auto dg1 = c.Dg1(x1);
    for (int j = 0; j < b; ++j) top += x2(j) * dg1[j];
    J.topLeftCorner(b, b) = top;
    J.topRightCorner(b, b) = c.g1(x1);
    J.bottomRows(b) = c.Df2(x);
    return J;
  };
  sys.Dg = [c, b](const Vec& x) {
    const auto dg2 = c.Dg2(x);
    std::vector<Mat> out;
    for (int j = 0; j < b; ++j) {
      Mat J = Mat::Zero(2 * b, 2 * b);
      J.bottomRows(b) = dg2[j];
      out.push_back(J);
    }
    return out;
  };
  sys.h = c.h;
  sys.Dh = c.Dh;
  sys.D2h0 = c.D2h0;
  return sys;
}

}  // namespace hamflow
