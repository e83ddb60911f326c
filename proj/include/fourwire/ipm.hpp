#pragma once

// Primal-dual interior point method with slack variables, a logarithmic
// barrier, fraction-to-boundary steps, monotone barrier reduction, inertia
// corrected KKT solves and a filter line search.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fourwire/linalg.hpp"
#include "fourwire/solve_types.hpp"

namespace fourwire {

namespace detail {

class Ipm {
 public:
  Ipm(const nlp::Problem& p, const SolveOptions& o) : p_(p), o_(o) {
    const std::size_t nv = p.num_variables();
    col_of_.assign(nv, -1);
    for (std::size_t i = 0; i < nv; ++i) {
      const auto& b = p.variable(i).bounds;
      if (b.fixed()) continue;
      col_of_[i] = static_cast<long>(free_.size());
      free_.push_back(i);
    }
    for (std::size_t j = 0; j < free_.size(); ++j) {
      const auto& b = p.variable(free_[j]).bounds;
      if (std::isfinite(b.lo)) bound_rows_.push_back({j, -1.0, b.lo});
      if (std::isfinite(b.hi)) bound_rows_.push_back({j, 1.0, b.hi});
    }
    n_ = static_cast<Eigen::Index>(free_.size());
    me_ = static_cast<Eigen::Index>(p.num_equalities());
    mg_ = static_cast<Eigen::Index>(p.num_inequalities());
    mi_ = mg_ + static_cast<Eigen::Index>(bound_rows_.size());
  }

  SolveResult run();

 private:
  struct BoundRow {
    std::size_t col;
    double sign;   // -1: lo - x <= 0, +1: x - hi <= 0
    double bound;
  };
  struct Point {
    std::vector<double> x;  // full
    Eigen::VectorXd y, z, s;
  };
  struct Eval {
    double f = 0.0;
    Eigen::VectorXd c, g;  // g: all inequality rows including bounds
  };

  Eval evaluate(const std::vector<double>& x) const {
    const nlp::EvalResult e = p_.eval(x);
    Eval out;
    out.f = e.objective;
    out.c = Eigen::Map<const Eigen::VectorXd>(e.equalities.data(), me_);
    out.g.resize(mi_);
    for (Eigen::Index i = 0; i < mg_; ++i) out.g(i) = e.inequalities[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < bound_rows_.size(); ++k) {
      const auto& b = bound_rows_[k];
      const double xv = x[free_[b.col]];
      out.g(mg_ + static_cast<Eigen::Index>(k)) = b.sign < 0 ? b.bound - xv : xv - b.bound;
    }
    return out;
  }

  void derivatives(const std::vector<double>& x, Eigen::VectorXd& grad, Eigen::MatrixXd& jc,
                   Eigen::MatrixXd& jg) const {
    const auto gf = p_.objective_gradient(x);
    grad.resize(n_);
    for (Eigen::Index j = 0; j < n_; ++j) grad(j) = gf[free_[static_cast<std::size_t>(j)]];
    const nlp::SparseMatrix js = p_.jacobian(x);
    jc = Eigen::MatrixXd::Zero(me_, n_);
    jg = Eigen::MatrixXd::Zero(mi_, n_);
    for (std::size_t r = 0; r < js.rows; ++r)
      for (std::size_t k = js.row_start[r]; k < js.row_start[r + 1]; ++k) {
        const long c = col_of_[js.col[k]];
        if (c < 0) continue;
        if (static_cast<Eigen::Index>(r) < me_)
          jc(static_cast<Eigen::Index>(r), c) += js.val[k];
        else
          jg(static_cast<Eigen::Index>(r) - me_, c) += js.val[k];
      }
    for (std::size_t k = 0; k < bound_rows_.size(); ++k)
      jg(mg_ + static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bound_rows_[k].col)) = bound_rows_[k].sign;
  }

  Eigen::MatrixXd hessian(const std::vector<double>& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z) const {
    std::vector<double> yy(y.data(), y.data() + y.size());
    std::vector<double> zz(z.data(), z.data() + mg_);
    const Eigen::MatrixXd full = p_.lagrangian_hessian(x, 1.0, yy, zz);
    Eigen::MatrixXd h(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j)
        h(i, j) = full(static_cast<Eigen::Index>(free_[static_cast<std::size_t>(i)]),
                       static_cast<Eigen::Index>(free_[static_cast<std::size_t>(j)]));
    return h;
  }

  static double theta(const Eval& e, const Eigen::VectorXd& s) {
    return e.c.lpNorm<1>() + (e.g + s).lpNorm<1>();
  }
  double barrier(const Eval& e, const Eigen::VectorXd& s, double mu) const {
    return e.f - mu * s.array().log().sum();
  }
  bool filter_ok(double th, double ph) const {
    for (const auto& [ft, fp] : filter_)
      if (th >= ft && ph >= fp) return false;
    return true;
  }
  static double fraction_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double tau) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (dv(i) < 0.0) a = std::min(a, -tau * v(i) / dv(i));
    return a;
  }

  // Solves the reduced KKT system with inertia correction; returns false on
  // failure to obtain the right inertia.
  bool solve_kkt(const Eigen::MatrixXd& w, const Eigen::MatrixXd& jc, const Eigen::VectorXd& r1,
                 const Eigen::VectorXd& r2, double mu, Eigen::VectorXd& dx, Eigen::VectorXd& dy) {
    const Eigen::Index dim = n_ + me_;
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(dim, dim);
    k.topLeftCorner(n_, n_) = w;
    k.bottomLeftCorner(me_, n_) = jc;
    k.topRightCorner(n_, me_) = jc.transpose();
    Eigen::VectorXd rhs(dim);
    rhs << r1, r2;
    double dw = 0.0, dc = 0.0;
    auto attempt = [&]() -> std::optional<Eigen::VectorXd> {
      Eigen::MatrixXd kk = k;
      kk.topLeftCorner(n_, n_).diagonal().array() += dw;
      kk.bottomRightCorner(me_, me_).diagonal().array() -= dc;
      linalg::LdlFactor f = dc > 0.0 ? linalg::LdlFactor(kk, 0.1 * dc, true) : linalg::LdlFactor(kk);
      const auto& in = f.inertia();
      last_zero_ = in.zero > 0;
      if (in.zero > 0 || in.positive != n_ || in.negative != me_) return std::nullopt;
      Eigen::VectorXd sol = f.solve(rhs);
      for (int refine = 0; refine < 2; ++refine) sol += f.solve(rhs - kk * sol);
      if (!sol.allFinite()) return std::nullopt;
      return sol;
    };
    auto sol = attempt();
    if (!sol && last_zero_) {
      dc = o_.regularization * std::pow(mu, 0.25);
      sol = attempt();
    }
    if (!sol) {
      dw = last_dw_ == 0.0 ? 1e-4 : std::max(1e-20, last_dw_ / 3.0);
      for (;;) {
        sol = attempt();
        if (sol) break;
        if (last_zero_ && dc == 0.0) dc = o_.regularization * std::pow(mu, 0.25);
        dw *= last_dw_ == 0.0 ? 100.0 : 8.0;
        if (dw > 1e40) return false;
      }
      last_dw_ = dw;
    }
    reg_ = dw;
    dx = sol->head(n_);
    dy = sol->tail(me_);
    return true;
  }

  Eigen::VectorXd least_squares_y(const Eigen::MatrixXd& jc, const Eigen::VectorXd& rhs) const {
    if (me_ == 0) return Eigen::VectorXd(0);
    Eigen::MatrixXd a = jc * jc.transpose();
    a.diagonal().array() += 1e-10;
    Eigen::VectorXd y = a.ldlt().solve(-(jc * rhs));
    if (!y.allFinite() || y.lpNorm<Eigen::Infinity>() > 1e3) y.setZero();
    return y;
  }

  // Minimum-norm steps on [c; g + s] = 0 until the point is acceptable to
  // the filter. Returns false when no progress is possible.
  bool restore(Point& pt, double mu, double tau) {
    for (int it = 0; it < 50; ++it) {
      const Eval e = evaluate(pt.x);
      const double th = theta(e, pt.s);
      Eigen::VectorXd grad;
      Eigen::MatrixXd jc, jg;
      derivatives(pt.x, grad, jc, jg);
      // A = [[Jc, 0], [Jg, I]], W = diag(I, S^-2): step = -W^-1 A^T (A W^-1 A^T)^-1 r
      const Eigen::Index m = me_ + mi_;
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n_ + mi_);
      a.topLeftCorner(me_, n_) = jc;
      a.bottomLeftCorner(mi_, n_) = jg;
      a.bottomRightCorner(mi_, mi_).setIdentity();
      Eigen::VectorXd winv(n_ + mi_);
      winv.head(n_).setOnes();
      winv.tail(mi_) = pt.s.array().square();
      Eigen::MatrixXd awa = a * winv.asDiagonal() * a.transpose();
      awa.diagonal().array() += 1e-10 * std::max(1.0, awa.diagonal().maxCoeff());
      Eigen::VectorXd r(m);
      r << e.c, e.g + pt.s;
      const Eigen::VectorXd lam = awa.ldlt().solve(r);
      const Eigen::VectorXd step = -(winv.asDiagonal() * (a.transpose() * lam));
      const Eigen::VectorXd dx = step.head(n_), ds = step.tail(mi_);
      double alpha = fraction_to_boundary(pt.s, ds, tau);
      bool moved = false;
      for (; alpha > 1e-10; alpha *= 0.5) {
        std::vector<double> xt = pt.x;
        for (Eigen::Index j = 0; j < n_; ++j) xt[free_[static_cast<std::size_t>(j)]] += alpha * dx(j);
        const Eigen::VectorXd st = pt.s + alpha * ds;
        const Eval et = evaluate(xt);
        const double tht = theta(et, st);
        if (std::isfinite(tht) && tht <= (1.0 - 1e-4 * alpha) * th) {
          pt.x = std::move(xt);
          pt.s = st;
          moved = true;
          if (filter_ok(tht, barrier(et, st, mu)) && tht <= 0.9 * theta_entry_) {
            pt.z = (mu / pt.s.array()).matrix();
            Eigen::VectorXd g2;
            Eigen::MatrixXd jc2, jg2;
            derivatives(pt.x, g2, jc2, jg2);
            pt.y = least_squares_y(jc2, g2 + jg2.transpose() * pt.z);
            return true;
          }
          break;
        }
      }
      if (!moved) return false;
    }
    return false;
  }

  const nlp::Problem& p_;
  const SolveOptions& o_;
  std::vector<std::size_t> free_;
  std::vector<long> col_of_;
  std::vector<BoundRow> bound_rows_;
  Eigen::Index n_ = 0, me_ = 0, mg_ = 0, mi_ = 0;
  std::vector<std::pair<double, double>> filter_;
  double last_dw_ = 0.0, reg_ = 0.0, theta_entry_ = 0.0;
  bool last_zero_ = false;
};

inline SolveResult Ipm::run() {
  constexpr double kappa_eps = 10.0, kappa_mu = 0.2, theta_mu = 1.5, s_max = 100.0, kappa_sigma = 1e10;
  constexpr double gamma_theta = 1e-5, gamma_phi = 1e-8, delta = 1.0, s_theta = 1.1, s_phi = 2.3, eta = 1e-4;
  const double tol = o_.tol;
  SolveResult res;

  Point pt;
  double mu = o_.mu_init;
  pt.x = p_.initial_point();
  for (std::size_t i = 0; i < pt.x.size(); ++i)
    if (p_.variable(i).bounds.fixed()) pt.x[i] = p_.variable(i).bounds.lo;
  const bool warm = o_.warm.has_value() && o_.warm->x.size() == pt.x.size();
  if (warm) {
    for (std::size_t i = 0; i < pt.x.size(); ++i)
      if (!p_.variable(i).bounds.fixed()) pt.x[i] = o_.warm->x[i];
    mu = o_.warm->mu;
  }
  Eval e = evaluate(pt.x);
  if (warm && o_.warm->s.size() == static_cast<std::size_t>(mi_) && o_.warm->z.size() == static_cast<std::size_t>(mi_) &&
      o_.warm->y.size() == static_cast<std::size_t>(me_)) {
    pt.s = Eigen::Map<const Eigen::VectorXd>(o_.warm->s.data(), mi_);
    pt.z = Eigen::Map<const Eigen::VectorXd>(o_.warm->z.data(), mi_);
    pt.y = Eigen::Map<const Eigen::VectorXd>(o_.warm->y.data(), me_);
  } else {
    pt.s = (-e.g).cwiseMax(1e-2);
    pt.z = (mu / pt.s.array()).matrix();
    Eigen::VectorXd grad;
    Eigen::MatrixXd jc, jg;
    derivatives(pt.x, grad, jc, jg);
    pt.y = least_squares_y(jc, grad + jg.transpose() * pt.z);
  }

  const double th0 = theta(e, pt.s);
  const double theta_max = 1e4 * std::max(1.0, th0);
  const double theta_min = 1e-4 * std::max(1.0, th0);
  double tau = std::max(0.99, 1.0 - mu);
  int resets = 0;
  int it = 0;
  double alpha_pr = 0.0, alpha_du = 0.0;

  for (;; ++it) {
    e = evaluate(pt.x);
    Eigen::VectorXd grad;
    Eigen::MatrixXd jc, jg;
    derivatives(pt.x, grad, jc, jg);
    const Eigen::VectorXd rd = grad + jc.transpose() * pt.y + jg.transpose() * pt.z;
    const Eigen::VectorXd rg = e.g + pt.s;
    const double inf_pr = std::max(me_ ? e.c.lpNorm<Eigen::Infinity>() : 0.0, mi_ ? rg.lpNorm<Eigen::Infinity>() : 0.0);
    const double m_all = static_cast<double>(me_ + mi_);
    const double sd = m_all > 0 ? std::max(s_max, (pt.y.lpNorm<1>() + pt.z.lpNorm<1>()) / m_all) / s_max : 1.0;
    const double sc = mi_ > 0 ? std::max(s_max, pt.z.lpNorm<1>() / static_cast<double>(mi_)) / s_max : 1.0;
    const double inf_du = n_ ? rd.lpNorm<Eigen::Infinity>() : 0.0;
    auto compl_err = [&](double m) {
      return mi_ ? (pt.z.array() * pt.s.array() - m).abs().maxCoeff() : 0.0;
    };
    const double e0 = std::max({inf_du / sd, inf_pr, compl_err(0.0) / sc});
    if (o_.log)
      *o_.log << "{\"iter\":" << it << ",\"objective\":" << e.f << ",\"inf_pr\":" << inf_pr << ",\"inf_du\":" << inf_du
              << ",\"mu\":" << mu << ",\"alpha_pr\":" << alpha_pr << ",\"alpha_du\":" << alpha_du
              << ",\"regularization\":" << reg_ << "}\n";
    if (!std::isfinite(e0)) {
      res.status = SolveStatus::numerical_failure;
      res.message = "non-finite iterate";
      break;
    }
    if (e0 <= tol) {
      res.status = SolveStatus::converged;
      break;
    }
    if (it >= o_.max_iter) {
      res.status = SolveStatus::iteration_limit;
      res.message = "iteration limit";
      break;
    }
    const double mu_floor = std::max(o_.mu_min, tol / 10.0);
    while (mu > mu_floor && std::max({inf_du / sd, inf_pr, compl_err(mu) / sc}) <= kappa_eps * mu) {
      mu = std::max(mu_floor, std::min(kappa_mu * mu, std::pow(mu, theta_mu)));
      tau = std::max(0.99, 1.0 - mu);
      filter_.clear();
    }

    // Newton step on the barrier subproblem
    const Eigen::VectorXd sigma = (pt.z.array() / pt.s.array()).matrix();
    Eigen::MatrixXd w = hessian(pt.x, pt.y, pt.z);
    if (mi_) w.noalias() += jg.transpose() * sigma.asDiagonal() * jg;
    const Eigen::VectorXd comp = ((mu - pt.z.array() * pt.s.array()) / pt.s.array()).matrix();
    Eigen::VectorXd r1 = -rd;
    if (mi_) r1 -= jg.transpose() * (comp + sigma.cwiseProduct(rg));
    const Eigen::VectorXd r2 = -e.c;
    Eigen::VectorXd dx, dy;
    if (!solve_kkt(w, jc, r1, r2, mu, dx, dy)) {
      res.status = SolveStatus::numerical_failure;
      res.message = "KKT inertia correction failed";
      break;
    }
    const Eigen::VectorXd ds = -rg - jg * dx;
    const Eigen::VectorXd dz = comp + sigma.cwiseProduct(rg) + sigma.cwiseProduct(jg * dx);

    const double a_max = mi_ ? fraction_to_boundary(pt.s, ds, tau) : 1.0;
    const double a_z = mi_ ? fraction_to_boundary(pt.z, dz, tau) : 1.0;

    // filter line search
    const double th = theta(e, pt.s);
    const double ph = barrier(e, pt.s, mu);
    const double gphi = grad.dot(dx) - (mi_ ? mu * (ds.array() / pt.s.array()).sum() : 0.0);
    double a_min = 0.05 * gamma_theta;
    if (gphi < 0.0)
      a_min = 0.05 * std::min({gamma_theta, gamma_phi * th / -gphi, delta * std::pow(th, s_theta) / std::pow(-gphi, s_phi)});
    bool accepted = false;
    double alpha = a_max;
    std::vector<double> xt;
    Eigen::VectorXd st;
    for (; alpha >= a_min || alpha == a_max; alpha *= 0.5) {
      xt = pt.x;
      for (Eigen::Index j = 0; j < n_; ++j) xt[free_[static_cast<std::size_t>(j)]] += alpha * dx(j);
      st = pt.s + alpha * ds;
      const Eval et = evaluate(xt);
      const double tht = theta(et, st);
      const double pht = barrier(et, st, mu);
      if (!std::isfinite(tht) || !std::isfinite(pht) || tht > theta_max || !filter_ok(tht, pht)) {
        if (alpha < 1e-16) break;
        continue;
      }
      const bool switching = gphi < 0.0 && alpha * std::pow(-gphi, s_phi) > delta * std::pow(th, s_theta);
      if (th <= theta_min && switching) {
        if (pht <= ph + eta * alpha * gphi) {
          accepted = true;
          break;
        }
      } else if (tht <= (1.0 - gamma_theta) * th || pht <= ph - gamma_phi * th) {
        filter_.emplace_back((1.0 - gamma_theta) * th, ph - gamma_phi * th);
        accepted = true;
        break;
      }
      if (alpha < 1e-16) break;
    }
    if (accepted) {
      resets = 0;
      pt.x = std::move(xt);
      pt.s = st;
      pt.y += alpha * dy;
      pt.z += a_z * dz;
      alpha_pr = alpha;
      alpha_du = a_z;
    } else {
      theta_entry_ = th;
      filter_.emplace_back((1.0 - gamma_theta) * th, ph - gamma_phi * th);
      if (th > 10.0 * tol && restore(pt, mu, tau)) {
        alpha_pr = alpha_du = 0.0;
        continue;
      }
      if (th > 10.0 * tol) {
        res.status = SolveStatus::infeasible_detected;
        res.message = "feasibility restoration stalled at constraint violation " + std::to_string(th);
        break;
      }
      // nearly feasible but no acceptable step: restart the filter and take
      // the fraction-to-boundary step
      if (++resets > 5) {
        res.status = SolveStatus::numerical_failure;
        res.message = "line search failed repeatedly";
        break;
      }
      filter_.clear();
      for (Eigen::Index j = 0; j < n_; ++j) pt.x[free_[static_cast<std::size_t>(j)]] += a_max * dx(j);
      pt.s += a_max * ds;
      pt.y += a_max * dy;
      pt.z += a_z * dz;
      alpha_pr = a_max;
      alpha_du = a_z;
    }
    // keep z close to mu / s
    for (Eigen::Index i = 0; i < mi_; ++i) {
      const double c = mu / pt.s(i);
      pt.z(i) = std::max(std::min(pt.z(i), kappa_sigma * c), c / kappa_sigma);
    }
  }

  res.iterations = it;
  res.mu = mu;
  res.x = pt.x;
  res.y.assign(pt.y.data(), pt.y.data() + pt.y.size());
  res.z.assign(pt.z.data(), pt.z.data() + pt.z.size());
  res.s.assign(pt.s.data(), pt.s.data() + pt.s.size());
  const Verification v = verify(p_, res.x);
  res.objective = v.objective;
  res.max_eq_residual = v.max_eq_residual;
  res.max_ineq_violation = v.max_ineq_violation;
  if (res.status == SolveStatus::converged && (v.max_eq_residual > tol || v.max_ineq_violation > tol)) {
    res.status = SolveStatus::numerical_failure;
    res.message = "KKT test passed but the independent check did not";
  }
  return res;
}

}  // namespace detail

/// Interior point solve of min f s.t. c(x) = 0, g(x) <= 0, lo <= x <= hi.
inline SolveResult ipm_solve(const nlp::Problem& p, const SolveOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw std::invalid_argument("ipm_solve: tol must be positive");
  if (!p.finalized()) throw std::logic_error("ipm_solve: problem not finalized");
  detail::Ipm ipm(p, opts);
  return ipm.run();
}

/// Warm start data from a previous result.
inline WarmStart warm_start_from(const SolveResult& r) {
  return {r.x, r.y, r.z, r.s, std::max(r.mu, 1e-11)};
}

}  // namespace fourwire
