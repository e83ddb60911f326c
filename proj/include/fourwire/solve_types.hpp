#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fourwire/nlp.hpp"

namespace fourwire {

enum class InitStrategy { flat_120, warm };

/// Iterate of a previous solve used to warm-start the interior point method.
struct WarmStart {
  std::vector<double> x, y, z, s;
  double mu = 1e-9;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double mu_init = 0.1;
  double mu_min = 1e-11;
  double regularization = 1e-8;   // dual regularization base for the KKT matrix
  InitStrategy init_strategy = InitStrategy::flat_120;
  std::optional<WarmStart> warm;
  std::ostream* log = nullptr;    // one JSON object per iteration when set
};

enum class SolveStatus { converged, infeasible_detected, iteration_limit, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::infeasible_detected: return "infeasible_detected";
    case SolveStatus::iteration_limit: return "iteration_limit";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  std::string message;
  std::vector<double> x;
  std::vector<double> y, z, s;  // multipliers and slacks (interior point only)
  double mu = 0.0;
  double objective = 0.0;
  double max_eq_residual = 0.0;
  double max_ineq_violation = 0.0;  // includes variable bounds
  int iterations = 0;

  bool converged() const { return status == SolveStatus::converged; }
};

/// Independent evaluation of residuals and violations at x.
struct Verification {
  double objective = 0.0;
  double max_eq_residual = 0.0;
  double max_ineq_violation = 0.0;
};

inline Verification verify(const nlp::Problem& p, std::span<const double> x) {
  const nlp::EvalResult e = p.eval(x);
  Verification v;
  v.objective = e.objective;
  for (double r : e.equalities) v.max_eq_residual = std::max(v.max_eq_residual, std::abs(r));
  for (double g : e.inequalities) v.max_ineq_violation = std::max(v.max_ineq_violation, g);
  for (std::size_t i = 0; i < p.num_variables(); ++i) {
    const auto& b = p.variable(i).bounds;
    v.max_ineq_violation = std::max({v.max_ineq_violation, b.lo - x[i], x[i] - b.hi});
  }
  if (!std::isfinite(v.max_eq_residual)) v.max_eq_residual = nlp::kInf;
  return v;
}

}  // namespace fourwire
