#pragma once

// Damped Newton method for square systems of equalities.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fourwire/solve_types.hpp"

namespace fourwire {

class NotSquare : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularJacobian : public std::runtime_error {
 public:
  SingularJacobian(const std::string& msg, std::size_t rank, double min_pivot, std::string variable)
      : std::runtime_error(msg), rank_(rank), min_pivot_(min_pivot), variable_(std::move(variable)) {}
  std::size_t rank() const { return rank_; }
  double min_pivot() const { return min_pivot_; }
  const std::string& variable() const { return variable_; }

 private:
  std::size_t rank_;
  double min_pivot_;
  std::string variable_;
};

/// Solves c(x) = 0 over the free variables (fixed variables stay at their
/// value; other variable bounds and inequality rows are not enforced during
/// the iteration but are checked at the end).
inline SolveResult newton_solve(const nlp::Problem& p, const SolveOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw std::invalid_argument("newton_solve: tol must be positive");
  std::vector<std::size_t> free;
  std::vector<double> x = opts.warm ? opts.warm->x : p.initial_point();
  for (std::size_t i = 0; i < p.num_variables(); ++i) {
    const auto& b = p.variable(i).bounds;
    if (b.fixed())
      x[i] = b.lo;
    else
      free.push_back(i);
  }
  const std::size_t m = p.num_equalities();
  if (m != free.size())
    throw NotSquare("newton_solve: " + std::to_string(m) + " equalities for " + std::to_string(free.size()) +
                    " free variables");
  std::vector<long> col_of(p.num_variables(), -1);
  for (std::size_t j = 0; j < free.size(); ++j) col_of[free[j]] = static_cast<long>(j);

  auto residual = [&](const std::vector<double>& xx) {
    const auto e = p.eval(xx);
    return Eigen::Map<const Eigen::VectorXd>(e.equalities.data(), static_cast<Eigen::Index>(m)).eval();
  };

  SolveResult res;
  Eigen::VectorXd r = residual(x);
  int it = 0;
  for (;; ++it) {
    const double rinf = m ? r.cwiseAbs().maxCoeff() : 0.0;
    if (opts.log)
      *opts.log << "{\"iter\":" << it << ",\"residual\":" << rinf << "}\n";
    if (!std::isfinite(rinf)) {
      res.status = SolveStatus::numerical_failure;
      res.message = "non-finite residual";
      break;
    }
    if (rinf <= opts.tol) {
      res.status = SolveStatus::converged;
      break;
    }
    if (it >= opts.max_iter) {
      res.status = SolveStatus::iteration_limit;
      res.message = "iteration limit";
      break;
    }
    const nlp::SparseMatrix js = p.jacobian(x);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(free.size()));
    for (std::size_t row = 0; row < m; ++row)
      for (std::size_t k = js.row_start[row]; k < js.row_start[row + 1]; ++k)
        if (col_of[js.col[k]] >= 0) j(static_cast<Eigen::Index>(row), col_of[js.col[k]]) += js.val[k];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
      // the last pivot column of the full-pivot elimination names a
      // variable in the null space
      const auto rank = static_cast<std::size_t>(lu.rank());
      const auto col = static_cast<std::size_t>(lu.permutationQ().indices()(static_cast<Eigen::Index>(rank)));
      const double piv = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
      std::ostringstream os;
      os << "singular Jacobian at iteration " << it << ": rank " << rank << " of " << free.size()
         << ", smallest pivot " << piv << ", dependent variable " << p.variable(free[col]).name;
      throw SingularJacobian(os.str(), rank, piv, p.variable(free[col]).name);
    }
    const Eigen::VectorXd dx = lu.solve(-r);
    const double r0 = r.norm();
    double alpha = 1.0;
    std::vector<double> xt(x);
    Eigen::VectorXd rt;
    for (;;) {
      for (std::size_t k = 0; k < free.size(); ++k) xt[free[k]] = x[free[k]] + alpha * dx(static_cast<Eigen::Index>(k));
      rt = residual(xt);
      if ((std::isfinite(rt.norm()) && rt.norm() <= (1.0 - 1e-4 * alpha) * r0) || alpha < 1e-6) break;
      alpha *= 0.5;
    }
    x.swap(xt);
    r = rt;
  }
  res.iterations = it;
  res.x = std::move(x);
  const Verification v = verify(p, res.x);
  res.objective = v.objective;
  res.max_eq_residual = v.max_eq_residual;
  res.max_ineq_violation = v.max_ineq_violation;
  if (res.status == SolveStatus::converged && v.max_ineq_violation > opts.tol) {
    res.status = SolveStatus::infeasible_detected;
    res.message = "equilibrium violates an inequality or bound by " + std::to_string(v.max_ineq_violation);
  }
  return res;
}

}  // namespace fourwire
