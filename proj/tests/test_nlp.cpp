#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fourwire/complex_expr.hpp"
#include "fourwire/curve.hpp"
#include "fourwire/nlp.hpp"

using namespace fourwire;
using namespace fourwire::nlp;

namespace {

// gradient of a single-row problem at x
std::vector<double> row_gradient(const Problem& p, const std::vector<double>& x) {
  const SparseMatrix j = p.jacobian(x);
  std::vector<double> g(p.num_variables(), 0.0);
  for (std::size_t k = j.row_start[0]; k < j.row_start[1]; ++k) g[j.col[k]] += j.val[k];
  return g;
}

}  // namespace

TEST(Nlp, ConstantObjective) {
  Problem p;
  p.add_variable("x", 0.0);
  p.set_objective(p.constant(4.25));
  p.finalize();
  EXPECT_EQ(p.eval(std::vector<double>{-3.0}).objective, 4.25);
  EXPECT_EQ(p.eval(std::vector<double>{17.0}).objective, 4.25);
}

TEST(Nlp, MissingObjectiveIsZero) {
  Problem p;
  p.add_variable("x", 0.0);
  p.finalize();
  EXPECT_EQ(p.eval_objective(std::vector<double>{2.0}), 0.0);
}

TEST(Nlp, SimpleResidual) {
  Problem p;
  auto x = p.add_variable("x0", 0.0);
  p.add_equality(p.var(x) - 1.0, "r");
  p.finalize();
  EXPECT_EQ(p.eval(std::vector<double>{1.0}).equalities[0], 0.0);
}

TEST(Nlp, DimensionMismatch) {
  Problem p;
  p.add_variable("x", 0.0);
  p.add_variable("y", 0.0);
  p.finalize();
  EXPECT_THROW(p.eval(std::vector<double>{1.0}), DimensionMismatch);
  EXPECT_THROW(p.jacobian(std::vector<double>{1.0, 2.0, 3.0}), DimensionMismatch);
}

TEST(Nlp, ProductAndSquareDerivatives) {
  Problem p;
  auto a = p.add_variable("x0", 0.0);
  auto b = p.add_variable("x1", 0.0);
  p.add_equality(p.var(a) * p.var(b), "prod");
  p.finalize();
  const auto g = row_gradient(p, {2.0, 3.0});
  EXPECT_EQ(g[0], 3.0);
  EXPECT_EQ(g[1], 2.0);

  Problem q;
  auto x = q.add_variable("x0", 0.0);
  q.add_equality(square(q.var(x)), "sq");
  q.finalize();
  EXPECT_EQ(row_gradient(q, {5.0})[0], 10.0);
}

// Each primitive against its symbolic first and second derivatives.
TEST(Nlp, PrimitiveRulesMatchSymbolic) {
  struct Case {
    const char* name;
    std::function<Expr(Problem&, Expr)> build;
    std::function<double(double)> f, df, d2f;
  };
  const std::vector<Case> cases{
      {"constant", [](Problem& p, Expr) { return p.constant(2.5); }, [](double) { return 2.5; },
       [](double) { return 0.0; }, [](double) { return 0.0; }},
      {"variable", [](Problem&, Expr x) { return x; }, [](double x) { return x; }, [](double) { return 1.0; },
       [](double) { return 0.0; }},
      {"sum", [](Problem&, Expr x) { return x + x + 3.0; }, [](double x) { return 2 * x + 3; },
       [](double) { return 2.0; }, [](double) { return 0.0; }},
      {"product", [](Problem&, Expr x) { return x * x * x; }, [](double x) { return x * x * x; },
       [](double x) { return 3 * x * x; }, [](double x) { return 6 * x; }},
      {"negation", [](Problem&, Expr x) { return -square(x); }, [](double x) { return -x * x; },
       [](double x) { return -2 * x; }, [](double) { return -2.0; }},
      {"square", [](Problem&, Expr x) { return square(x); }, [](double x) { return x * x; },
       [](double x) { return 2 * x; }, [](double) { return 2.0; }},
      {"reciprocal", [](Problem&, Expr x) { return reciprocal(x); }, [](double x) { return 1 / x; },
       [](double x) { return -1 / (x * x); }, [](double x) { return 2 / (x * x * x); }},
  };
  for (const auto& c : cases) {
    for (double x0 : {-1.7, 0.4, 2.3}) {
      Problem p;
      auto v = p.add_variable("x", 0.0);
      p.set_objective(c.build(p, p.var(v)));
      p.finalize();
      const std::vector<double> x{x0};
      EXPECT_NEAR(p.eval_objective(x), c.f(x0), 1e-14) << c.name;
      EXPECT_NEAR(p.objective_gradient(x)[0], c.df(x0), 1e-13) << c.name;
      EXPECT_NEAR(p.lagrangian_hessian(x, 1.0, {}, {})(0, 0), c.d2f(x0), 1e-12) << c.name;
    }
  }
}

TEST(Nlp, CurveNodeUsesTaylorData) {
  auto curve = std::make_shared<const PwlCurve>(default_volt_var_points());
  for (double v : {0.85, 0.9005, 0.93, 0.9565, 1.0, 1.08, 1.1217, 1.2}) {
    Problem p;
    auto x = p.add_variable("v", 0.0);
    p.set_objective(apply_function(curve, p.var(x)));
    p.finalize();
    const auto t = curve->taylor(v);
    const std::vector<double> xv{v};
    EXPECT_EQ(p.eval_objective(xv), t.f);
    EXPECT_EQ(p.objective_gradient(xv)[0], t.df);
    EXPECT_EQ(p.lagrangian_hessian(xv, 1.0, {}, {})(0, 0), t.d2f);
  }
}

TEST(Nlp, HessianOfMixedExpression) {
  // f = x*y + y^2 / x at (2, 3)
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  p.set_objective(p.var(x) * p.var(y) + square(p.var(y)) * reciprocal(p.var(x)));
  p.finalize();
  const std::vector<double> pt{2.0, 3.0};
  const auto h = p.lagrangian_hessian(pt, 1.0, {}, {});
  // f_xx = 2 y^2 / x^3, f_xy = 1 - 2 y / x^2, f_yy = 2 / x
  EXPECT_NEAR(h(0, 0), 2.0 * 9.0 / 8.0, 1e-14);
  EXPECT_NEAR(h(0, 1), 1.0 - 6.0 / 4.0, 1e-14);
  EXPECT_NEAR(h(1, 0), h(0, 1), 1e-15);
  EXPECT_NEAR(h(1, 1), 1.0, 1e-14);
}

TEST(Nlp, LagrangianWeightsRows) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  p.set_objective(square(p.var(x)));
  p.add_equality(p.var(x) * p.var(x) * p.var(x), "cube");
  p.add_inequality(reciprocal(p.var(x)), "recip");
  p.finalize();
  const std::vector<double> pt{1.5};
  const double y = 0.7, z = 0.3;
  const auto h = p.lagrangian_hessian(pt, 2.0, std::vector<double>{y}, std::vector<double>{z});
  EXPECT_NEAR(h(0, 0), 2.0 * 2.0 + y * 6.0 * 1.5 + z * 2.0 / (1.5 * 1.5 * 1.5), 1e-13);
  EXPECT_THROW(p.lagrangian_hessian(pt, 1.0, {}, std::vector<double>{z}), DimensionMismatch);
}

TEST(Nlp, EvaluationIndependentOfInsertionOrder) {
  auto build = [](bool reversed) {
    Problem p;
    auto x = p.add_variable("x", 0.0);
    auto y = p.add_variable("y", 0.0);
    const Expr a = square(p.var(x)) * p.var(y);
    const Expr b = p.var(y) - 2.0 * p.var(x);
    p.add_equality(reversed ? b + a : a + b, "r");
    p.finalize();
    return p;
  };
  const Problem p1 = build(false), p2 = build(true);
  const std::vector<double> pt{0.3, -1.1};
  EXPECT_EQ(p1.eval(pt).equalities[0], p2.eval(pt).equalities[0]);
  EXPECT_EQ(row_gradient(p1, pt), row_gradient(p2, pt));
}

TEST(Nlp, SharedSubexpressionsAreLinearInSize) {
  // a chain that doubles its references at every level
  Problem p;
  auto x = p.add_variable("x", 0.0);
  Expr e = p.var(x);
  for (int i = 0; i < 60; ++i) e = e * 0.5 + e * 0.5;
  p.add_equality(e, "chain");
  p.finalize();
  EXPECT_NEAR(p.eval(std::vector<double>{3.0}).equalities[0], 3.0, 1e-12);
  EXPECT_NEAR(row_gradient(p, {3.0})[0], 1.0, 1e-12);
}

TEST(Nlp, JacobianPatternIsStable) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  auto z = p.add_variable("z", 0.0);
  p.add_equality(p.var(x) * p.var(y), "xy");
  p.add_inequality(square(p.var(z)) - p.var(x), "zx");
  p.finalize();
  const SparseMatrix pat = p.jacobian_pattern();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int i = 0; i < 5; ++i) {
    const SparseMatrix j = p.jacobian(std::vector<double>{d(rng), d(rng), d(rng)});
    EXPECT_EQ(j.row_start, pat.row_start);
    EXPECT_EQ(j.col, pat.col);
  }
  // the pattern covers the zero at x = 0
  const SparseMatrix j0 = p.jacobian(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_EQ(j0.nnz(), 4u);
}

TEST(Nlp, CheckDerivativesOnLinearProblem) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  p.add_equality(3.0 * p.var(x) - 2.0 * p.var(y) + 1.0, "lin");
  p.set_objective(p.var(x) + p.var(y));
  p.finalize();
  const auto rep = p.check_derivatives(std::vector<double>{0.4, -7.0}, 1e-6);
  EXPECT_EQ(rep.entries_checked, 4u);
  EXPECT_LT(rep.max_rel_error, 1e-9);
  EXPECT_TRUE(rep.flagged.empty());
}

TEST(Nlp, CheckDerivativesNearCurveBreakpoint) {
  auto curve = std::make_shared<const PwlCurve>(default_volt_var_points());
  Problem p;
  auto v = p.add_variable("v", 0.0);
  p.add_equality(apply_function(curve, p.var(v)), "vv");
  p.finalize();
  for (double x : {0.9565 - 0.0015, 0.9565, 0.9565 + 0.0011, 1.0435 - 0.0019, 1.1217 + 0.0005}) {
    const auto rep = p.check_derivatives(std::vector<double>{x}, 1e-7);
    EXPECT_LT(rep.max_rel_error, 1e-5) << x;
  }
}

TEST(Nlp, CorruptedRuleIsFlagged) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  p.add_equality(p.var(x) * p.var(y) - 1.0, "prod");
  p.finalize();
  const std::vector<double> pt{1.3, 0.8};
  EXPECT_TRUE(p.check_derivatives(pt, 1e-6).flagged.empty());
  p.set_derivative_fault(NodeKind::product);
  const auto rep = p.check_derivatives(pt, 1e-6);
  ASSERT_FALSE(rep.flagged.empty());
  EXPECT_EQ(rep.flagged.front().row, "prod");
  EXPECT_GT(rep.max_rel_error, 0.1);
}

TEST(Nlp, ComplexLoweringProducesTwoRows) {
  Problem p;
  const CVar u = add_complex_variable(p, "u", {1.0, 0.5});
  const CVar i = add_complex_variable(p, "i", {0.2, -0.1});
  add_complex_equality(p, mul_conj(cvar(p, u), cvar(p, i)) - Complex{0.3, 0.2}, "s");
  p.finalize();
  ASSERT_EQ(p.num_equalities(), 2u);
  EXPECT_EQ(p.equality_label(0), "s.re");
  EXPECT_EQ(p.equality_label(1), "s.im");
  const std::vector<double> x{1.0, 0.5, 0.2, -0.1};
  const Complex s = Complex(1.0, 0.5) * std::conj(Complex(0.2, -0.1)) - Complex(0.3, 0.2);
  const auto e = p.eval(x);
  EXPECT_NEAR(e.equalities[0], s.real(), 1e-15);
  EXPECT_NEAR(e.equalities[1], s.imag(), 1e-15);
}

TEST(Nlp, InitIsClampedToBounds) {
  Problem p;
  auto x = p.add_variable("x", 5.0, {0.0, 1.0});
  p.finalize();
  EXPECT_EQ(p.initial_point()[x.index], 1.0);
  Problem q;
  EXPECT_THROW(q.add_variable("bad", 0.0, {2.0, 1.0}), std::invalid_argument);
}

TEST(Nlp, FinalizedProblemIsFrozen) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  p.finalize();
  EXPECT_THROW(p.add_variable("y", 0.0), std::logic_error);
  EXPECT_THROW(p.add_equality(p.var(x), "r"), std::logic_error);
}

TEST(Nlp, DumpIsStructured) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  p.add_equality(square(p.var(x)) - 2.0, "r");
  p.finalize();
  std::ostringstream os;
  p.dump(os);
  const auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j["schema"], "fourwire-graph/1");
  EXPECT_EQ(j["rows"][0]["label"], "r");
  EXPECT_EQ(j["rows"][0]["columns"][0], 0);
}

TEST(Curve, MatchesExactOutsideBlends) {
  const PwlCurve c(default_volt_var_points());
  for (double v = 0.8; v <= 1.25; v += 0.0007) {
    bool near_bp = false;
    for (const auto& pt : c.points()) near_bp = near_bp || std::abs(v - pt.v) < c.smoothing();
    if (!near_bp) {
      EXPECT_NEAR(c(v), c.exact(v), 1e-15) << v;
    }
    EXPECT_LE(std::abs(c(v) - c.exact(v)), c.smoothing() * c.max_slope_change() + 1e-15) << v;
  }
}

TEST(Curve, DeviationAtBreakpointIsQuarterSlopeChange) {
  const PwlCurve c(default_volt_watt_points());
  const auto& p = c.points();
  const double s = (p[1].y - p[0].y) / (p[1].v - p[0].v);
  EXPECT_NEAR(std::abs(c(p[0].v) - c.exact(p[0].v)), std::abs(s) * c.smoothing() / 4.0, 1e-15);
}

TEST(Curve, IsContinuouslyDifferentiable) {
  const PwlCurve c(default_volt_var_points());
  for (const auto& pt : c.points()) {
    for (double side : {-1.0, 1.0}) {
      const double edge = pt.v + side * c.smoothing();
      const auto in = c.taylor(edge - side * 1e-12);
      const auto out = c.taylor(edge + side * 1e-12);
      EXPECT_NEAR(in.f, out.f, 1e-10);
      EXPECT_NEAR(in.df, out.df, 1e-8);
    }
  }
}

TEST(Curve, NonIncreasingVoltVarStaysMonotone) {
  const PwlCurve c(default_volt_var_points());
  double prev = c(0.8);
  for (double v = 0.8; v <= 1.25; v += 1e-4) {
    const double y = c(v);
    EXPECT_LE(y, prev + 1e-15) << v;
    prev = y;
  }
}

TEST(Curve, RejectsBadInput) {
  EXPECT_THROW(PwlCurve({}), std::invalid_argument);
  EXPECT_THROW(PwlCurve({{1.0, 0.0}, {0.9, 1.0}}), std::invalid_argument);
  EXPECT_THROW(PwlCurve({{1.0, 0.0}, {1.003, 1.0}}), std::invalid_argument);
  EXPECT_THROW(PwlCurve({{1.0, 0.0}}, 0.0), std::invalid_argument);
}
