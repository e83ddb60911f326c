#include <gtest/gtest.h>

#include <sstream>

#include "fourwire/ipm.hpp"
#include "fourwire/newton.hpp"
#include "fourwire/scenario.hpp"

using namespace fourwire;
using namespace fourwire::nlp;

TEST(Ipm, BoundActiveAtOptimum) {
  Problem p;
  auto x = p.add_variable("x", 0.5, {0.0, 1.0});
  p.set_objective(square(p.var(x) - 2.0));
  p.finalize();
  const SolveResult r = ipm_solve(p);
  ASSERT_TRUE(r.converged()) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-7);
  EXPECT_NEAR(r.objective, 1.0, 1e-7);
}

TEST(Ipm, EqualityConstrainedQuadratic) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  p.set_objective(square(p.var(x)) + square(p.var(y)));
  p.add_equality(p.var(x) + p.var(y) - 1.0, "sum");
  p.finalize();
  const SolveResult r = ipm_solve(p);
  ASSERT_TRUE(r.converged()) << r.message;
  EXPECT_NEAR(r.x[0], 0.5, 1e-8);
  EXPECT_NEAR(r.x[1], 0.5, 1e-8);
  EXPECT_NEAR(r.y[0], -1.0, 1e-6);
}

TEST(Ipm, NonconvexInequality) {
  // min x + y s.t. x^2 + y^2 <= 2: optimum (-1, -1)
  Problem p;
  auto x = p.add_variable("x", 0.3);
  auto y = p.add_variable("y", 0.1);
  p.set_objective(p.var(x) + p.var(y));
  p.add_inequality(square(p.var(x)) + square(p.var(y)) - 2.0, "disc");
  p.finalize();
  const SolveResult r = ipm_solve(p);
  ASSERT_TRUE(r.converged()) << r.message;
  EXPECT_NEAR(r.x[0], -1.0, 1e-7);
  EXPECT_NEAR(r.x[1], -1.0, 1e-7);
  EXPECT_NEAR(r.z[0], 0.5, 1e-6);
}

TEST(Ipm, Hs071) {
  Problem p;
  std::vector<VarRef> v;
  const double x0[4] = {1.0, 5.0, 5.0, 1.0};
  for (int i = 0; i < 4; ++i) v.push_back(p.add_variable("x" + std::to_string(i), x0[i], {1.0, 5.0}));
  auto X = [&](int i) { return p.var(v[static_cast<std::size_t>(i)]); };
  p.set_objective(X(0) * X(3) * (X(0) + X(1) + X(2)) + X(2));
  p.add_inequality(25.0 - X(0) * X(1) * X(2) * X(3), "prod");
  p.add_equality(square(X(0)) + square(X(1)) + square(X(2)) + square(X(3)) - 40.0, "norm");
  p.finalize();
  const SolveResult r = ipm_solve(p);
  ASSERT_TRUE(r.converged()) << r.message;
  EXPECT_NEAR(r.objective, 17.0140173, 1e-6);
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 4.7429994, 1e-6);
  EXPECT_NEAR(r.x[2], 3.8211503, 1e-6);
  EXPECT_NEAR(r.x[3], 1.3794082, 1e-6);
}

TEST(Ipm, InfeasibleIsDetected) {
  Problem p;
  auto x = p.add_variable("x", 0.5);
  p.add_equality(square(p.var(x)) + 1.0, "neg");
  p.finalize();
  SolveOptions o;
  o.max_iter = 100;
  const SolveResult r = ipm_solve(p, o);
  EXPECT_FALSE(r.converged());
  EXPECT_NE(r.status, SolveStatus::converged);
}

TEST(Ipm, LogsOneJsonLinePerIteration) {
  Problem p;
  auto x = p.add_variable("x", 0.5, {0.0, 1.0});
  p.set_objective(square(p.var(x) - 2.0));
  p.finalize();
  std::ostringstream log;
  SolveOptions o;
  o.log = &log;
  const SolveResult r = ipm_solve(p, o);
  std::istringstream in(log.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["iter"], n);
    for (const char* k : {"objective", "inf_pr", "inf_du", "mu", "alpha_pr", "alpha_du", "regularization"})
      EXPECT_TRUE(j.contains(k)) << k;
    ++n;
  }
  EXPECT_EQ(n, r.iterations + 1);
}

TEST(Ipm, WarmStartTakesFewerIterations) {
  auto build = [](double rhs) {
    Problem p;
    auto x = p.add_variable("x", 0.3);
    auto y = p.add_variable("y", 0.1);
    p.set_objective(p.var(x) + 2.0 * p.var(y));
    p.add_inequality(square(p.var(x)) + square(p.var(y)) - rhs, "disc");
    p.finalize();
    return p;
  };
  const Problem a = build(2.0);
  const SolveResult cold = ipm_solve(a);
  ASSERT_TRUE(cold.converged());
  const Problem b = build(2.02);
  const SolveResult cold_b = ipm_solve(b);
  SolveOptions o;
  o.warm = warm_start_from(cold);
  const SolveResult warm_b = ipm_solve(b, o);
  ASSERT_TRUE(warm_b.converged()) << warm_b.message;
  EXPECT_LT(warm_b.iterations, cold_b.iterations);
  EXPECT_NEAR(warm_b.objective, cold_b.objective, 1e-7);
}

TEST(Ipm, RejectsNonPositiveTolerance) {
  Problem p;
  p.add_variable("x", 0.0);
  p.finalize();
  SolveOptions o;
  o.tol = 0.0;
  EXPECT_THROW(ipm_solve(p, o), std::invalid_argument);
  EXPECT_THROW(newton_solve(p, o), std::invalid_argument);
}

TEST(Newton, LinearSystemInOneIteration) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto y = p.add_variable("y", 0.0);
  p.add_equality(2.0 * p.var(x) + p.var(y) - 3.0, "a");
  p.add_equality(p.var(x) - p.var(y), "b");
  p.finalize();
  const SolveResult r = newton_solve(p);
  ASSERT_TRUE(r.converged());
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.x[0], 1.0, 1e-14);
  EXPECT_NEAR(r.x[1], 1.0, 1e-14);
}

TEST(Newton, QuadraticConvergence) {
  Problem p;
  auto x = p.add_variable("x", 1.0);
  p.add_equality(square(p.var(x)) - 2.0, "sqrt2");
  p.finalize();
  std::ostringstream log;
  SolveOptions o;
  o.tol = 1e-14;
  o.log = &log;
  const SolveResult r = newton_solve(p, o);
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.x[0], std::sqrt(2.0), 1e-15);
  EXPECT_LE(r.iterations, 6);
}

TEST(Newton, FixedVariablesAreNotUnknowns) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  auto k = p.add_variable("k", 3.0, {3.0, 3.0});
  p.add_equality(p.var(x) * p.var(k) - 6.0, "r");
  p.finalize();
  const SolveResult r = newton_solve(p);
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.x[0], 2.0, 1e-14);
  EXPECT_EQ(r.x[1], 3.0);
}

TEST(Newton, NotSquare) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  p.add_variable("y", 0.0);
  p.add_equality(p.var(x), "r");
  p.finalize();
  EXPECT_THROW(newton_solve(p), NotSquare);
}

TEST(Newton, SingularJacobianNamesVariable) {
  Problem p;
  auto x = p.add_variable("x", 1.0);
  auto y = p.add_variable("dangling", 1.0);
  p.add_equality(p.var(x) - 2.0, "a");
  p.add_equality(2.0 * p.var(x) - 4.0 + 0.0 * p.var(y), "b");
  p.finalize();
  try {
    newton_solve(p);
    FAIL() << "expected SingularJacobian";
  } catch (const SingularJacobian& e) {
    EXPECT_EQ(e.rank(), 1u);
    EXPECT_EQ(e.variable(), "dangling");
  }
}

TEST(Newton, ViolatedInequalityReported) {
  Problem p;
  auto x = p.add_variable("x", 0.0);
  p.add_equality(p.var(x) - 2.0, "a");
  p.add_inequality(p.var(x) - 1.0, "cap");
  p.finalize();
  const SolveResult r = newton_solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible_detected);
  EXPECT_NEAR(r.max_ineq_violation, 1.0, 1e-12);
}

TEST(Ldl, InertiaOfSaddleMatrix) {
  Eigen::MatrixXd k(3, 3);
  k << 2, 0, 1, 0, 3, 1, 1, 1, 0;
  linalg::LdlFactor f(k);
  EXPECT_EQ(f.inertia().positive, 2);
  EXPECT_EQ(f.inertia().negative, 1);
  EXPECT_EQ(f.inertia().zero, 0);
  const Eigen::VectorXd b = Eigen::Vector3d(1, 2, 3);
  EXPECT_LT((k * f.solve(b) - b).norm(), 1e-13);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
  s(0, 0) = 1.0;
  EXPECT_EQ(linalg::LdlFactor(s).inertia().zero, 1);
}

namespace {

Network bundled(const std::string& name) { return load_case(std::string(FOURWIRE_DATA_DIR) + "/cases/" + name); }

Network with(const Network& net, nlohmann::json fields) {
  return apply_overrides(net, {{net.inverters[0].id, std::move(fields)}});
}

Assembled assemble(const Network& net, Objective o) {
  AssembleOptions ao;
  ao.objective = o;
  return assemble_network(net, ao);
}

ojson solve(const Network& net, Objective o, Method m = Method::automatic) {
  const RunOutput r = execute(net, {"t", o, {}}, SolveOptions{}, m);
  EXPECT_TRUE(r.solve.converged()) << r.solve.message;
  return r.result;
}

}  // namespace

TEST(Network, TwoBusCensus) {
  const Network net = bundled("2bus_tableIII.json");
  const Assembled four = assemble(net, Objective::loss);
  EXPECT_EQ(four.problem.num_variables(), 64u);
  EXPECT_EQ(four.problem.num_equalities(), 52u);
  EXPECT_EQ(four.problem.num_inequalities(), 14u);
  const Assembled three = assemble(with(net, {{"topology", "three_leg"}}), Objective::loss);
  EXPECT_EQ(three.problem.num_variables(), 56u);
  EXPECT_EQ(three.problem.num_equalities(), 46u);
  EXPECT_EQ(three.problem.num_inequalities(), 13u);
}

TEST(Network, BalancedCaseStaysBalanced) {
  const ojson r = solve(bundled("2bus_balanced.json"), Objective::loss);
  for (const auto& b : r["buses"]) {
    EXPECT_LT(b["u_seq"]["zero"].get<double>(), 1e-6);
    EXPECT_LT(b["u_seq"]["negative"].get<double>(), 1e-6);
  }
  const auto& s = r["inverters"][0]["s_g"];
  for (const char* ph : {"b", "c"}) {
    EXPECT_NEAR(s[ph]["p_kw"].get<double>(), s["a"]["p_kw"].get<double>(), 1e-7);
    EXPECT_NEAR(s[ph]["q_kvar"].get<double>(), s["a"]["q_kvar"].get<double>(), 1e-7);
  }
}

TEST(Network, NewtonPowerFlowConvergesFast) {
  const Network net = with(bundled("2bus_voltvar.json"),
                           {{"control_laws", {{{"type", "volt_var"}, {"variant", "phase_to_neutral"}},
                                              {{"type", "equal_active_power"}}}}});
  const Assembled a = assemble(net, Objective::none);
  const SolveResult n = newton_solve(a.problem);
  ASSERT_TRUE(n.converged()) << n.message;
  EXPECT_LT(n.iterations, 10);
  const SolveResult i = ipm_solve(a.problem);
  ASSERT_TRUE(i.converged()) << i.message;
  double worst = 0.0;
  for (std::size_t k = 0; k < n.x.size(); ++k) worst = std::max(worst, std::abs(n.x[k] - i.x[k]));
  EXPECT_LT(worst, 1e-7);
}

TEST(Network, WarmStartResolvesQuickly) {
  const Assembled a = assemble(bundled("2bus_tableIII.json"), Objective::loss);
  const SolveResult cold = ipm_solve(a.problem);
  ASSERT_TRUE(cold.converged()) << cold.message;
  SolveOptions o;
  o.warm = warm_start_from(cold);
  const SolveResult warm = ipm_solve(a.problem, o);
  ASSERT_TRUE(warm.converged()) << warm.message;
  EXPECT_LE(warm.iterations, 3);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-8);
}

TEST(Network, ThreeLegInjectsNoZeroSequence) {
  const ojson r = solve(with(bundled("2bus_tableIII.json"), {{"topology", "three_leg"}}), Objective::loss);
  EXPECT_LT(r["inverters"][0]["i_g_seq"]["zero"].get<double>(), 1e-9);
  EXPECT_FALSE(r["inverters"][0]["i_g"].contains("n"));
}

TEST(Network, FourLegLossNotAboveThreeLeg) {
  const Network net = bundled("2bus_tableIII.json");
  const double four = solve(net, Objective::loss)["objective_value"]["value"].get<double>();
  const double three = solve(with(net, {{"topology", "three_leg"}}), Objective::loss)["objective_value"]["value"];
  EXPECT_LE(four, three + 1e-8);
}

TEST(Network, GfmFormulationsReachTheSameOptimum) {
  const Network net = bundled("2bus_tableIII.json");
  const ojson ma = solve(with(net, {{"mode", "gfm"}, {"gfm_voltage_mode", "equal"}, {"gfm_formulation", "magnitude_angle"}}),
                         Objective::cost);
  const ojson ps = solve(
      with(net, {{"mode", "gfm"}, {"gfm_voltage_mode", "equal"}, {"gfm_formulation", "positive_sequence"}}),
      Objective::cost);
  EXPECT_NEAR(ma["objective_value"]["value"].get<double>(), ps["objective_value"]["value"].get<double>(), 1e-6);
}

TEST(Network, NegativeSequenceObjectiveCancelsGridI2) {
  const ojson r = solve(bundled("2bus_tableIII.json"), Objective::negseq);
  // grid current magnitude in A; 1e-6 pu of a 43.5 A base
  EXPECT_LT(r["sources"][0]["i_seq"]["negative"].get<double>(), 1e-6 * 43.478);
}
