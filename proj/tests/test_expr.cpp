#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fplab/errors.hpp"
#include "fplab/expr.hpp"

using fplab::EvalFault;
using fplab::ParseError;
using fplab::expr::Expression;

namespace {

double at(const std::string& text, std::vector<double> x) {
  return Expression::parse(text, static_cast<int>(x.size())).eval(x);
}

}  // namespace

TEST(Parse, HalfSquare) { EXPECT_EQ(at("x1^2/2", {3.0}), 4.5); }

TEST(Parse, Product) { EXPECT_EQ(at("x1*x2", {2.0, 3.0}), 6.0); }

TEST(Parse, VariableAboveDimension) {
  try {
    Expression::parse("x3", 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("exceeds dimension"), std::string::npos);
  }
}

TEST(Parse, Precedence) {
  EXPECT_EQ(at("-x1^2", {3.0}), -9.0);
  EXPECT_EQ(at("2^3^2", {0.0}), 512.0);
  EXPECT_EQ(at("2^-1", {0.0}), 0.5);
  EXPECT_EQ(at("1 + 2*3 - 4/2", {0.0}), 5.0);
  EXPECT_EQ(at("(1 + 2)*3", {0.0}), 9.0);
  EXPECT_DOUBLE_EQ(at("2*pi", {0.0}), 2.0 * M_PI);
  EXPECT_DOUBLE_EQ(at("1.5e-1 + .5", {0.0}), 0.65);
}

TEST(Parse, Errors) {
  EXPECT_THROW(Expression::parse("", 1), ParseError);
  EXPECT_THROW(Expression::parse("x1 +", 1), ParseError);
  EXPECT_THROW(Expression::parse("foo(x1)", 1), ParseError);
  EXPECT_THROW(Expression::parse("(x1", 1), ParseError);
  EXPECT_THROW(Expression::parse("x1 x1", 1), ParseError);
  EXPECT_THROW(Expression::parse("x0", 1), ParseError);
  try {
    Expression::parse("x1 + * 2", 1);
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 5u);
  }
}

TEST(Eval, Identities) {
  EXPECT_EQ(at("exp(0)", {0.0}), 1.0);
  EXPECT_EQ(at("ln(1) + sin(0) + tanh(0)", {0.0}), 0.0);
  EXPECT_EQ(at("cos(0) + sqrt(4) + abs(-3)", {0.0}), 6.0);
}

TEST(Eval, DomainFaultsCarryPoint) {
  const auto e = Expression::parse("ln(x1)", 1);
  const std::vector<double> x{-1.0};
  try {
    e.eval(x);
    FAIL() << "expected EvalFault";
  } catch (const EvalFault& f) {
    ASSERT_EQ(f.point().size(), 1u);
    EXPECT_EQ(f.point()[0], -1.0);
  }
  EXPECT_THROW(at("1/x1", {0.0}), EvalFault);
  EXPECT_THROW(at("sqrt(x1)", {-1.0}), EvalFault);
  EXPECT_THROW(at("x1^0.5", {-2.0}), EvalFault);
  EXPECT_THROW(at("exp(x1)", {1000.0}), EvalFault);
  EXPECT_EQ(at("x1^3", {-2.0}), -8.0);
}

TEST(Eval, BitwiseDeterministic) {
  const auto e = Expression::parse("exp(sin(x1)*x2) / (1 + x1^2) - tanh(x2)", 2);
  const std::vector<double> x{0.3, -1.7};
  const double a = e.eval(x);
  const double b = Expression::parse(e.to_string(), 2).eval(x);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a), std::bit_cast<std::uint64_t>(b));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a), std::bit_cast<std::uint64_t>(e.eval(x)));
}

TEST(Jet, Bilinear) {
  const auto j = Expression::parse("x1*x2", 2).eval_jet(std::vector<double>{2.0, 3.0});
  EXPECT_EQ(j.value, 6.0);
  EXPECT_EQ(j.gradient[0], 3.0);
  EXPECT_EQ(j.gradient[1], 2.0);
  EXPECT_EQ(j.hessian[0][0], 0.0);
  EXPECT_EQ(j.hessian[0][1], 1.0);
  EXPECT_EQ(j.hessian[1][0], 1.0);
  EXPECT_EQ(j.hessian[1][1], 0.0);
}

TEST(Jet, HalfSquareHessian) {
  const auto e = Expression::parse("x1^2/2", 1);
  for (double x : {-3.0, 0.0, 0.7, 11.0}) {
    EXPECT_EQ(e.eval_jet(std::vector<double>{x}).hessian[0][0], 1.0);
  }
}

TEST(Jet, Exponential) {
  const auto j = Expression::parse("exp(x1)", 1).eval_jet(std::vector<double>{0.0});
  EXPECT_EQ(j.value, 1.0);
  EXPECT_EQ(j.gradient[0], 1.0);
  EXPECT_EQ(j.hessian[0][0], 1.0);
}

TEST(Jet, LinearHasZeroHessian) {
  const auto j = Expression::parse("3*x1 - 2*x2 + 7", 2).eval_jet(std::vector<double>{1.3, -0.2});
  for (auto& row : j.hessian) {
    for (double h : row) EXPECT_EQ(h, 0.0);
  }
}

namespace {

// Random expressions over a grammar that stays finite on [-1,1]^2.
class RandomExpr {
 public:
  explicit RandomExpr(std::uint64_t seed) : rng_(seed) {}

  std::string make(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 11);
    switch (pick(rng_)) {
      case 0:
        return "x1";
      case 1:
        return "x2";
      case 2:
        return literal();
      case 3:
        return "(" + make(depth - 1) + " + " + make(depth - 1) + ")";
      case 4:
        return "(" + make(depth - 1) + " - " + make(depth - 1) + ")";
      case 5:
        return "(" + make(depth - 1) + " * " + make(depth - 1) + ")";
      case 6:
        return "(" + make(depth - 1) + ") / (1.5 + sin(" + make(depth - 1) + "))";
      case 7:
        return "exp(tanh(" + make(depth - 1) + "))";
      case 8:
        return "sin(" + make(depth - 1) + ")";
      case 9:
        return "ln(2 + cos(" + make(depth - 1) + "))";
      case 10:
        return "sqrt(1 + (" + make(depth - 1) + ")^2)";
      default:
        return "(" + make(depth - 1) + ")^" + std::to_string(std::uniform_int_distribution<int>(2, 3)(rng_));
    }
  }

  std::vector<double> point() {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return {u(rng_), u(rng_)};
  }

 private:
  std::string literal() {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::abs(u(rng_)));
    return buf;
  }

  std::mt19937_64 rng_;
};

}  // namespace

TEST(Jet, AgreesWithFiniteDifferencesOnRandomTrees) {
  RandomExpr gen(20240611);
  int tested = 0;
  while (tested < 100) {
    const auto e = Expression::parse(gen.make(4), 2);
    const auto x = gen.point();
    const auto jet = e.eval_jet(x);
    for (int i = 0; i < 2; ++i) {
      const double hi = 1e-5 * (1.0 + std::abs(x[i]));
      auto shifted = [&](int k, double s) {
        auto y = x;
        y[k] += s;
        return y;
      };
      const double fd = (e.eval(shifted(i, hi)) - e.eval(shifted(i, -hi))) / (2.0 * hi);
      EXPECT_NEAR(jet.gradient[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << e.to_string();
      for (int j = 0; j < 2; ++j) {
        const double hj = 1e-5 * (1.0 + std::abs(x[j]));
        // Second derivative as a central difference of the jet gradient.
        const double fd2 = (e.eval_jet(shifted(j, hj)).gradient[i] -
                            e.eval_jet(shifted(j, -hj)).gradient[i]) / (2.0 * hj);
        EXPECT_NEAR(jet.hessian[i][j], fd2, 1e-6 * std::max(1.0, std::abs(fd2))) << e.to_string();
      }
    }
    EXPECT_EQ(jet.hessian[0][1], jet.hessian[1][0]);
    ++tested;
  }
}

TEST(Jet, HessianMatchesSecondDifferencesOfEval) {
  RandomExpr gen(99);
  for (int n = 0; n < 100; ++n) {
    const auto e = Expression::parse(gen.make(3), 2);
    const auto x = gen.point();
    const auto jet = e.eval_jet(x);
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-3;
      auto y = x, z = x;
      y[i] += h;
      z[i] -= h;
      const double fd = (e.eval(y) - 2.0 * e.eval(x) + e.eval(z)) / (h * h);
      EXPECT_NEAR(jet.hessian[i][i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << e.to_string();
    }
  }
}

TEST(Print, RoundTripIsIdempotent) {
  RandomExpr gen(7);
  for (int n = 0; n < 200; ++n) {
    const auto a = Expression::parse(gen.make(5), 2);
    const auto b = Expression::parse(a.to_string(), 2);
    EXPECT_TRUE(a == b) << a.to_string();
    EXPECT_EQ(a.to_string(), b.to_string());
  }
  for (const char* s : {"-x1^2", "2^3^2", "x1 - (x2 - 1)", "1/(x1*x2)", "-(-x1)", "1e-300*x1"}) {
    const auto a = Expression::parse(s, 2);
    EXPECT_TRUE(a == Expression::parse(a.to_string(), 2)) << s;
  }
}

TEST(Print, LiteralsSurviveBitwise) {
  const auto a = Expression::parse("0.1 + 1/3", 1);
  const auto b = Expression::parse(a.to_string(), 1);
  const std::vector<double> x{0.0};
  EXPECT_EQ(a.eval(x), b.eval(x));
}

TEST(Constant, Detection) {
  EXPECT_TRUE(Expression::parse("2*pi + ln(3)", 1).is_constant());
  EXPECT_FALSE(Expression::parse("0*x1", 1).is_constant());
  EXPECT_TRUE(Expression::constant(2.5, 2).is_constant());
  EXPECT_EQ(Expression::constant(2.5, 2).eval(std::vector<double>{1.0, 2.0}), 2.5);
}
