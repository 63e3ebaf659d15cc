#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cvp/expr.hpp"
#include "cvp/rng.hpp"

using cvp::differentiate;
using cvp::parse;

TEST(Expr, ParsesAndEvaluates) {
    const std::vector<double> p{1.0, 0.0};
    EXPECT_DOUBLE_EQ(parse("x1^2 + sin(x2)", 2)(p), 1.0);
    EXPECT_DOUBLE_EQ(parse("3", 1)(std::vector<double>{7.0}), 3.0);
    EXPECT_DOUBLE_EQ(parse("exp(0)", 1)(std::vector<double>{123.0}), 1.0);
    EXPECT_DOUBLE_EQ(parse("x1*x2", 2)(std::vector<double>{2.0, 3.0}), 6.0);
}

TEST(Expr, Precedence) {
    const std::vector<double> x{2.0};
    EXPECT_DOUBLE_EQ(parse("-x1^2", 1)(x), -4.0);
    EXPECT_DOUBLE_EQ(parse("2^3^2", 1)(x), 512.0);
    EXPECT_DOUBLE_EQ(parse("2^-1", 1)(x), 0.5);
    EXPECT_DOUBLE_EQ(parse("8/2/2", 1)(x), 2.0);
    EXPECT_DOUBLE_EQ(parse("1 - 2 - 3", 1)(x), -4.0);
    EXPECT_DOUBLE_EQ(parse("1 + 2 * 3", 1)(x), 7.0);
    EXPECT_DOUBLE_EQ(parse("min(x1, 1) + max(x1, 1)", 1)(x), 3.0);
    EXPECT_DOUBLE_EQ(parse("step(x1) + step(-x1)", 1)(x), 1.0);
    EXPECT_DOUBLE_EQ(parse("step(0)", 1)(x), 0.0);
    EXPECT_DOUBLE_EQ(parse("1.5e1 + .5", 1)(x), 15.5);
}

TEST(Expr, SyntaxErrorsCarryOffsets) {
    try {
        parse("x1 +", 1);
        FAIL();
    } catch (const cvp::ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    try {
        parse("2x1", 1);
        FAIL() << "implicit multiplication must be rejected";
    } catch (const cvp::ParseError& e) {
        EXPECT_EQ(e.offset(), 1u);
    }
    EXPECT_THROW(parse("x3", 2), cvp::ParseError);
    EXPECT_THROW(parse("x0", 2), cvp::ParseError);
    EXPECT_THROW(parse("foo(x1)", 1), cvp::ParseError);
    EXPECT_THROW(parse("sin(x1, x1)", 1), cvp::ParseError);
    EXPECT_THROW(parse("min(x1)", 1), cvp::ParseError);
    EXPECT_THROW(parse("(x1", 1), cvp::ParseError);
    EXPECT_THROW(parse("", 1), cvp::ParseError);
    EXPECT_THROW(parse("   ", 1), cvp::ParseError);
    EXPECT_THROW(parse("x1 x1", 1), cvp::ParseError);
}

TEST(Expr, DomainErrorsAreReported) {
    const std::vector<double> zero{0.0};
    EXPECT_THROW(parse("1/x1", 1)(zero), cvp::EvalError);
    EXPECT_THROW(parse("log(x1)", 1)(zero), cvp::EvalError);
    EXPECT_THROW(parse("sqrt(x1 - 1)", 1)(zero), cvp::EvalError);
    EXPECT_THROW(parse("(x1 - 1)^0.5", 1)(zero), cvp::EvalError);
    EXPECT_THROW(parse("exp(1000)", 1)(zero), cvp::EvalError);
    try {
        parse("2 + log(x1)", 1)(zero);
        FAIL();
    } catch (const cvp::EvalError& e) {
        EXPECT_EQ(e.subexpression(), "log(x1)");
    }
}

TEST(Expr, DerivativeExamples) {
    EXPECT_DOUBLE_EQ(differentiate(parse("x1^2", 1), 0)(std::vector<double>{3.0}), 6.0);
    const auto dx2 = differentiate(parse("x1", 2), 1);
    EXPECT_TRUE(dx2.is_constant());
    EXPECT_DOUBLE_EQ(dx2(std::vector<double>{5.0, -2.0}), 0.0);
    EXPECT_DOUBLE_EQ(differentiate(parse("sin(x1)", 1), 0)(std::vector<double>{0.0}), 1.0);
}

TEST(Expr, StepDerivativeWarnsAtKink) {
    const auto e = parse("step(x1) * x2", 2);
    const auto d1 = differentiate(e, 0);
    EXPECT_DOUBLE_EQ(d1(std::vector<double>{0.3, 2.0}), 0.0);
    EXPECT_TRUE(cvp::kink_warnings(e, 0, std::vector<double>{0.3, 2.0}).empty());
    const auto w = cvp::kink_warnings(e, 0, std::vector<double>{0.0, 2.0});
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0], "step(x1)");
    // x2 does not enter the step argument.
    EXPECT_TRUE(cvp::kink_warnings(e, 1, std::vector<double>{0.0, 2.0}).empty());
}

TEST(Expr, ConstantDetection) {
    EXPECT_TRUE(parse("3 * exp(1)", 2).is_constant());
    EXPECT_FALSE(parse("3 * x2", 2).is_constant());
    EXPECT_TRUE(parse("3 * x2", 2).depends_on(1));
    EXPECT_FALSE(parse("3 * x2", 2).depends_on(0));
}

namespace {

// Random smooth expressions over x1..x3 whose values and derivatives stay
// moderate on [-1, 1]^3, so central differences are a sharp oracle.
std::string random_expr(cvp::RngStream& rng, int depth) {
    const auto pick = [&](int n) { return static_cast<int>(rng.uniform() * n); };
    if (depth == 0 || rng.uniform() < 0.25) {
        if (rng.uniform() < 0.7) return "x" + std::to_string(1 + pick(3));
        return std::to_string(std::round((rng.uniform() * 4.0 - 2.0) * 100.0) / 100.0);
    }
    const std::string a = random_expr(rng, depth - 1);
    const std::string b = random_expr(rng, depth - 1);
    switch (pick(12)) {
        case 0: return "(" + a + " + " + b + ")";
        case 1: return "(" + a + " - " + b + ")";
        case 2: return "(" + a + " * " + b + ")";
        case 3: return "(" + a + ") / (2 + sin(" + b + "))";
        case 4: return "sin(" + a + ")";
        case 5: return "cos(" + a + ")";
        case 6: return "exp(tanh(" + a + "))";
        case 7: return "tanh(" + a + ")";
        case 8: return "(" + a + ")^2";
        case 9: return "sqrt(1 + (" + a + ")^2)";
        case 10: return "log(2 + cos(" + a + "))";
        default: return "-(" + a + ")^3";
    }
}

}  // namespace

TEST(Expr, SymbolicDerivativeMatchesCentralDifferences) {
    cvp::RngStream rng(2024, 0);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto e = parse(random_expr(rng, 4), 3);
        std::vector<double> x{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
        for (int i = 0; i < 3; ++i) {
            const double h = 1e-5;
            auto xp = x, xm = x;
            xp[static_cast<std::size_t>(i)] += h;
            xm[static_cast<std::size_t>(i)] -= h;
            const double fd = (e(xp) - e(xm)) / (2 * h);
            const double sym = differentiate(e, i)(x);
            EXPECT_LE(std::abs(sym - fd), 1e-6 * (1 + std::abs(sym))) << e.to_string() << " d/dx" << i + 1;
            ++checked;
        }
    }
    EXPECT_EQ(checked, 600);
}

TEST(Expr, PrintParseRoundTrip) {
    cvp::RngStream rng(7, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto e = parse(random_expr(rng, 4), 3);
        const auto back = parse(e.to_string(), 3);
        std::vector<double> x{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
        EXPECT_EQ(e(x), back(x)) << e.to_string();
        // Derivative trees (which contain sgn/step and negative constants) round-trip too.
        const auto d = differentiate(e, 0);
        EXPECT_EQ(d(x), parse(d.to_string(), 3)(x)) << d.to_string();
    }
}

TEST(Expr, VectorExpressionChecksDimension) {
    EXPECT_THROW(cvp::VectorExpression::parse({"x1"}, 2), cvp::ConfigError);
    const auto v = cvp::VectorExpression::parse({"x1", "2*x2"}, 2);
    std::vector<double> out(2);
    v.evaluate(std::vector<double>{1.0, 3.0}, out);
    EXPECT_DOUBLE_EQ(out[1], 6.0);
    EXPECT_TRUE(cvp::VectorExpression::zero(3).is_zero());
}
