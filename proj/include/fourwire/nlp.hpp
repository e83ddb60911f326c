#pragma once

// Scalar expression graph over registered variables. Residuals, Jacobians
// and Lagrangian Hessians are evaluated by forward-mode differentiation with
// dual numbers seeded on each expression's own variable support, so the
// cost per expression scales with its size times its (small) support.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace fourwire::nlp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Bounds {
  double lo = -kInf;
  double hi = kInf;

  bool fixed() const { return lo == hi; }
  bool bounded() const { return std::isfinite(lo) || std::isfinite(hi); }
};

struct VarRef {
  std::uint32_t index = 0;
};

struct VariableInfo {
  std::string name;
  Bounds bounds;
  double init = 0.0;
};

enum class NodeKind : std::uint8_t {
  constant,
  variable,
  sum,
  product,
  negation,
  square,
  reciprocal,
  curve
};

inline const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::constant: return "constant";
    case NodeKind::variable: return "variable";
    case NodeKind::sum: return "sum";
    case NodeKind::product: return "product";
    case NodeKind::negation: return "negation";
    case NodeKind::square: return "square";
    case NodeKind::reciprocal: return "reciprocal";
    case NodeKind::curve: return "curve";
  }
  return "?";
}

/// A once-differentiable scalar function usable as a graph node.
class ScalarFunction {
 public:
  virtual ~ScalarFunction() = default;
  struct Taylor {
    double f, df, d2f;
  };
  virtual Taylor taylor(double x) const = 0;
  virtual std::string describe() const = 0;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  NodeKind kind;
  std::uint32_t a = 0;  // variable index, first child, args offset, or function index
  std::uint32_t b = 0;  // second child, args count, or curve argument
  double c = 0.0;       // constant value
};

struct Pool {
  std::vector<Node> nodes;
  std::vector<std::uint32_t> args;
  std::vector<std::shared_ptr<const ScalarFunction>> functions;

  std::uint32_t push(Node n) {
    nodes.push_back(n);
    return static_cast<std::uint32_t>(nodes.size() - 1);
  }
};

}  // namespace detail

/// Handle to a node of a problem's expression pool.
class Expr {
 public:
  Expr() = default;
  Expr(detail::Pool* pool, std::uint32_t id) : pool_(pool), id_(id) {}

  std::uint32_t id() const { return id_; }
  detail::Pool* pool() const { return pool_; }
  bool valid() const { return pool_ != nullptr; }

  friend Expr operator+(const Expr& x, const Expr& y) { return sum({x, y}); }
  friend Expr operator-(const Expr& x, const Expr& y) { return sum({x, -y}); }
  friend Expr operator*(const Expr& x, const Expr& y) {
    auto* p = common(x, y);
    return {p, p->push({NodeKind::product, x.id_, y.id_})};
  }
  friend Expr operator/(const Expr& x, const Expr& y) { return x * reciprocal(y); }
  friend Expr operator-(const Expr& x) {
    return {x.pool_, x.pool_->push({NodeKind::negation, x.id_})};
  }

  friend Expr operator+(const Expr& x, double k) { return x + x.constant(k); }
  friend Expr operator+(double k, const Expr& x) { return x.constant(k) + x; }
  friend Expr operator-(const Expr& x, double k) { return x + x.constant(-k); }
  friend Expr operator-(double k, const Expr& x) { return x.constant(k) - x; }
  friend Expr operator*(const Expr& x, double k) { return x * x.constant(k); }
  friend Expr operator*(double k, const Expr& x) { return x.constant(k) * x; }
  friend Expr operator/(const Expr& x, double k) { return x * x.constant(1.0 / k); }

  Expr& operator+=(const Expr& y) { return *this = *this + y; }
  Expr& operator-=(const Expr& y) { return *this = *this - y; }

  friend Expr square(const Expr& x) { return {x.pool_, x.pool_->push({NodeKind::square, x.id_})}; }
  friend Expr reciprocal(const Expr& x) {
    return {x.pool_, x.pool_->push({NodeKind::reciprocal, x.id_})};
  }
  friend Expr apply_function(std::shared_ptr<const ScalarFunction> f, const Expr& x) {
    auto* p = x.pool_;
    p->functions.push_back(std::move(f));
    return {p, p->push({NodeKind::curve, static_cast<std::uint32_t>(p->functions.size() - 1), x.id_})};
  }

  /// N-ary sum; all terms must share a pool.
  static Expr sum(std::initializer_list<Expr> terms) { return sum(std::span<const Expr>(terms.begin(), terms.size())); }
  static Expr sum(std::span<const Expr> terms) {
    if (terms.empty()) throw std::invalid_argument("empty sum");
    detail::Pool* p = terms.front().pool_;
    const auto offset = static_cast<std::uint32_t>(p->args.size());
    for (const Expr& t : terms) {
      if (t.pool_ != p) throw std::invalid_argument("expressions from different problems");
      p->args.push_back(t.id_);
    }
    return {p, p->push({NodeKind::sum, offset, static_cast<std::uint32_t>(terms.size())})};
  }

  Expr constant(double k) const { return {pool_, pool_->push({NodeKind::constant, 0, 0, k})}; }

 private:
  static detail::Pool* common(const Expr& x, const Expr& y) {
    if (x.pool_ != y.pool_ || x.pool_ == nullptr)
      throw std::invalid_argument("expressions from different problems");
    return x.pool_;
  }

  detail::Pool* pool_ = nullptr;
  std::uint32_t id_ = 0;
};

inline Expr sum(std::span<const Expr> terms) { return Expr::sum(terms); }
Expr square(const Expr& x);
Expr reciprocal(const Expr& x);
Expr apply_function(std::shared_ptr<const ScalarFunction> f, const Expr& x);

/// Row-compressed sparse matrix.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> row_start{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_start[r]; k < row_start[r + 1]; ++k) m(r, col[k]) += val[k];
    return m;
  }
};

struct EvalResult {
  double objective = 0.0;
  std::vector<double> equalities;
  std::vector<double> inequalities;
};

/// One entry of a derivative check.
struct DerivativeEntry {
  std::string row;
  std::string variable;
  double analytic = 0.0;
  double finite_difference = 0.0;
  double rel_error = 0.0;
};

struct DerivativeReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::vector<DerivativeEntry> flagged;
};

/// Variables, constraints and objective of a nonlinear program.
///
/// Equalities are residuals r(x) = 0, inequalities residuals g(x) <= 0. The
/// problem is frozen by finalize(); evaluation methods are const and can be
/// called concurrently.
class Problem {
 public:
  Problem() : pool_(std::make_unique<detail::Pool>()) {}
  Problem(Problem&&) noexcept = default;
  Problem& operator=(Problem&&) noexcept = default;

  VarRef add_variable(std::string name, double init, Bounds bounds = {}) {
    require_open();
    if (bounds.lo > bounds.hi) throw std::invalid_argument("variable " + name + ": lo > hi");
    if (std::isfinite(bounds.lo)) init = std::max(init, bounds.lo);
    if (std::isfinite(bounds.hi)) init = std::min(init, bounds.hi);
    vars_.push_back({std::move(name), bounds, init});
    const auto idx = static_cast<std::uint32_t>(vars_.size() - 1);
    var_nodes_.push_back(pool_->push({NodeKind::variable, idx}));
    return {idx};
  }

  Expr var(VarRef v) const { return {pool_.get(), var_nodes_.at(v.index)}; }
  Expr constant(double k) const { return {pool_.get(), pool_->push({NodeKind::constant, 0, 0, k})}; }

  std::size_t add_equality(Expr e, std::string label) {
    require_open();
    check_owned(e);
    eqs_.push_back({e.id(), std::move(label)});
    return eqs_.size() - 1;
  }
  std::size_t add_inequality(Expr e, std::string label) {
    require_open();
    check_owned(e);
    ineqs_.push_back({e.id(), std::move(label)});
    return ineqs_.size() - 1;
  }
  void set_objective(Expr e) {
    require_open();
    check_owned(e);
    objective_ = e.id();
  }
  bool has_objective() const { return objective_.has_value(); }

  void set_init(VarRef v, double value) { vars_.at(v.index).init = value; }
  void set_bounds(VarRef v, Bounds b) {
    require_open();
    vars_.at(v.index).bounds = b;
  }

  std::size_t num_variables() const { return vars_.size(); }
  std::size_t num_equalities() const { return eqs_.size(); }
  std::size_t num_inequalities() const { return ineqs_.size(); }
  std::size_t num_nodes() const { return pool_->nodes.size(); }
  const VariableInfo& variable(std::size_t i) const { return vars_.at(i); }
  const std::string& equality_label(std::size_t i) const { return eqs_.at(i).label; }
  const std::string& inequality_label(std::size_t i) const { return ineqs_.at(i).label; }

  std::vector<double> initial_point() const {
    std::vector<double> x(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) x[i] = vars_[i].init;
    return x;
  }

  /// Freeze counts and build the per-expression tapes and sparsity pattern.
  void finalize() {
    if (finalized_) return;
    if (!objective_) objective_ = pool_->push({NodeKind::constant, 0, 0, 0.0});
    objective_tape_ = build_tape(*objective_);
    eq_tapes_.clear();
    ineq_tapes_.clear();
    for (const auto& r : eqs_) eq_tapes_.push_back(build_tape(r.node));
    for (const auto& r : ineqs_) ineq_tapes_.push_back(build_tape(r.node));
    finalized_ = true;
  }
  bool finalized() const { return finalized_; }

  EvalResult eval(std::span<const double> x) const {
    require_final();
    check_dim(x);
    EvalResult out;
    Workspace ws;
    out.objective = forward0(objective_tape_, x, ws);
    out.equalities.reserve(eq_tapes_.size());
    for (const auto& t : eq_tapes_) out.equalities.push_back(forward0(t, x, ws));
    out.inequalities.reserve(ineq_tapes_.size());
    for (const auto& t : ineq_tapes_) out.inequalities.push_back(forward0(t, x, ws));
    return out;
  }

  /// Residual of a single constraint row (equalities first, then inequalities).
  double eval_row(std::size_t row, std::span<const double> x) const {
    require_final();
    check_dim(x);
    Workspace ws;
    return forward0(row_tape(row), x, ws);
  }

  /// Value of any expression of this problem at x.
  double value(const Expr& e, std::span<const double> x) const {
    check_owned(e);
    check_dim(x);
    Workspace ws;
    return forward0(build_tape(e.id()), x, ws);
  }

  double eval_objective(std::span<const double> x) const {
    require_final();
    check_dim(x);
    Workspace ws;
    return forward0(objective_tape_, x, ws);
  }

  /// d(constraint)/dx; rows are equalities followed by inequalities.
  SparseMatrix jacobian(std::span<const double> x) const {
    require_final();
    check_dim(x);
    SparseMatrix j;
    j.rows = eq_tapes_.size() + ineq_tapes_.size();
    j.cols = vars_.size();
    j.row_start.reserve(j.rows + 1);
    Workspace ws;
    for (std::size_t r = 0; r < j.rows; ++r) {
      const Tape& t = row_tape(r);
      forward_derivatives(t, x, ws, false);
      const std::size_t k = t.support.size();
      const double* g = ws.grad.data() + (t.instrs.size() - 1) * k;
      for (std::size_t i = 0; i < k; ++i) {
        j.col.push_back(t.support[i]);
        j.val.push_back(g[i]);
      }
      j.row_start.push_back(j.col.size());
    }
    return j;
  }

  /// Sparsity pattern of the constraint Jacobian (values zero).
  SparseMatrix jacobian_pattern() const {
    require_final();
    SparseMatrix j;
    j.rows = eq_tapes_.size() + ineq_tapes_.size();
    j.cols = vars_.size();
    for (std::size_t r = 0; r < j.rows; ++r) {
      for (auto v : row_tape(r).support) {
        j.col.push_back(v);
        j.val.push_back(0.0);
      }
      j.row_start.push_back(j.col.size());
    }
    return j;
  }

  std::vector<double> objective_gradient(std::span<const double> x) const {
    require_final();
    check_dim(x);
    std::vector<double> g(vars_.size(), 0.0);
    Workspace ws;
    forward_derivatives(objective_tape_, x, ws, false);
    const std::size_t k = objective_tape_.support.size();
    const double* gr = ws.grad.data() + (objective_tape_.instrs.size() - 1) * k;
    for (std::size_t i = 0; i < k; ++i) g[objective_tape_.support[i]] += gr[i];
    return g;
  }

  /// Dense Hessian of sigma*f + sum_i y_i c_i + sum_j z_j g_j.
  Eigen::MatrixXd lagrangian_hessian(std::span<const double> x, double sigma,
                                     std::span<const double> y, std::span<const double> z) const {
    require_final();
    check_dim(x);
    if (y.size() != eq_tapes_.size() || z.size() != ineq_tapes_.size())
      throw DimensionMismatch("multiplier dimension mismatch");
    const auto n = static_cast<Eigen::Index>(vars_.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Workspace ws;
    auto accumulate = [&](const Tape& t, double w) {
      if (w == 0.0 || !t.nonlinear) return;
      forward_derivatives(t, x, ws, true);
      const std::size_t k = t.support.size();
      const double* hh = ws.hess.data() + (t.instrs.size() - 1) * k * k;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) h(t.support[i], t.support[j]) += w * hh[i * k + j];
    };
    accumulate(objective_tape_, sigma);
    for (std::size_t i = 0; i < eq_tapes_.size(); ++i) accumulate(eq_tapes_[i], y[i]);
    for (std::size_t i = 0; i < ineq_tapes_.size(); ++i) accumulate(ineq_tapes_[i], z[i]);
    return h;
  }

  /// Test hook: scale the first-derivative rule of one node kind by 1.5.
  void set_derivative_fault(std::optional<NodeKind> kind) { fault_ = kind; }

  /// Central-difference comparison of every structural Jacobian entry and
  /// the objective gradient. Relative error is |ad - fd| / max(1, |fd|).
  DerivativeReport check_derivatives(std::span<const double> x, double h,
                                     double flag_threshold = 1e-6) const {
    require_final();
    check_dim(x);
    if (!(h > 0.0)) throw std::invalid_argument("check_derivatives: h must be positive");
    DerivativeReport rep;
    std::vector<double> xp(x.begin(), x.end());
    const SparseMatrix jac = jacobian(x);
    const std::vector<double> grad = objective_gradient(x);
    double total = 0.0;
    Workspace ws;
    auto check = [&](const std::string& row, const Tape& t, std::uint32_t v, double ad) {
      const double step = h * std::max(1.0, std::abs(x[v]));
      xp[v] = x[v] + step;
      const double fp = forward0(t, xp, ws);
      xp[v] = x[v] - step;
      const double fm = forward0(t, xp, ws);
      xp[v] = x[v];
      const double fd = (fp - fm) / (2.0 * step);
      const double rel = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      total += rel;
      ++rep.entries_checked;
      if (rel > flag_threshold) rep.flagged.push_back({row, vars_[v].name, ad, fd, rel});
    };
    for (std::size_t r = 0; r < jac.rows; ++r)
      for (std::size_t k = jac.row_start[r]; k < jac.row_start[r + 1]; ++k)
        check(row_label(r), row_tape(r), jac.col[k], jac.val[k]);
    for (auto v : objective_tape_.support) check("objective", objective_tape_, v, grad[v]);
    rep.mean_rel_error = rep.entries_checked ? total / static_cast<double>(rep.entries_checked) : 0.0;
    return rep;
  }

  std::string row_label(std::size_t row) const {
    return row < eqs_.size() ? eqs_[row].label : ineqs_.at(row - eqs_.size()).label;
  }

  /// Debug dump of the graph and Jacobian sparsity as JSON.
  void dump(std::ostream& os) const {
    require_final();
    nlohmann::json j;
    j["schema"] = "fourwire-graph/1";
    auto& vars = j["variables"] = nlohmann::json::array();
    for (const auto& v : vars_)
      vars.push_back({{"name", v.name}, {"lo", v.bounds.lo}, {"hi", v.bounds.hi}, {"init", v.init}});
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : pool_->nodes) {
      nlohmann::json e{{"kind", node_kind_name(n.kind)}};
      switch (n.kind) {
        case NodeKind::constant: e["value"] = n.c; break;
        case NodeKind::variable: e["var"] = n.a; break;
        case NodeKind::sum:
          e["args"] = std::vector<std::uint32_t>(pool_->args.begin() + n.a, pool_->args.begin() + n.a + n.b);
          break;
        case NodeKind::product: e["args"] = {n.a, n.b}; break;
        case NodeKind::curve:
          e["args"] = {n.b};
          e["function"] = pool_->functions[n.a]->describe();
          break;
        default: e["args"] = {n.a}; break;
      }
      nodes.push_back(std::move(e));
    }
    auto rows = nlohmann::json::array();
    for (std::size_t r = 0; r < eqs_.size() + ineqs_.size(); ++r)
      rows.push_back({{"label", row_label(r)},
                      {"type", r < eqs_.size() ? "eq" : "ineq"},
                      {"root", r < eqs_.size() ? eqs_[r].node : ineqs_[r - eqs_.size()].node},
                      {"columns", row_tape(r).support}});
    j["rows"] = std::move(rows);
    j["objective"] = {{"root", *objective_}, {"columns", objective_tape_.support}};
    os << j.dump(1) << '\n';
  }

 private:
  struct Root {
    std::uint32_t node;
    std::string label;
  };

  struct Instr {
    NodeKind kind;
    std::uint32_t a = 0, b = 0;  // local slots / local var index / args offset+count
    double c = 0.0;
    const ScalarFunction* fn = nullptr;
  };

  struct Tape {
    std::vector<Instr> instrs;          // topological; last is the root
    std::vector<std::uint32_t> args;    // local slots for sums
    std::vector<std::uint32_t> support; // sorted global variable indices
    bool nonlinear = false;
  };

  struct Workspace {
    std::vector<double> val, grad, hess;
  };

  void require_open() const {
    if (finalized_) throw std::logic_error("problem already finalized");
  }
  void require_final() const {
    if (!finalized_) throw std::logic_error("problem not finalized");
  }
  void check_dim(std::span<const double> x) const {
    if (x.size() != vars_.size())
      throw DimensionMismatch("point has " + std::to_string(x.size()) + " entries, problem has " +
                              std::to_string(vars_.size()) + " variables");
  }
  void check_owned(const Expr& e) const {
    if (e.pool() != pool_.get()) throw std::invalid_argument("expression belongs to another problem");
  }

  const Tape& row_tape(std::size_t row) const {
    return row < eq_tapes_.size() ? eq_tapes_[row] : ineq_tapes_.at(row - eq_tapes_.size());
  }

  Tape build_tape(std::uint32_t root) const {
    const auto& nodes = pool_->nodes;
    // collect reachable nodes; ids are topological since children precede parents
    std::vector<std::uint32_t> stack{root}, reach;
    std::unordered_set<std::uint32_t> seen{root};
    auto visit = [&](std::uint32_t c) {
      if (seen.insert(c).second) stack.push_back(c);
    };
    while (!stack.empty()) {
      const auto id = stack.back();
      stack.pop_back();
      reach.push_back(id);
      const auto& n = nodes[id];
      switch (n.kind) {
        case NodeKind::constant:
        case NodeKind::variable: break;
        case NodeKind::sum:
          for (std::uint32_t i = 0; i < n.b; ++i) visit(pool_->args[n.a + i]);
          break;
        case NodeKind::product:
          visit(n.a);
          visit(n.b);
          break;
        case NodeKind::curve: visit(n.b); break;
        default: visit(n.a); break;
      }
    }
    std::sort(reach.begin(), reach.end());

    Tape t;
    auto local = [&](std::uint32_t id) {
      return static_cast<std::uint32_t>(std::lower_bound(reach.begin(), reach.end(), id) - reach.begin());
    };
    for (auto id : reach)
      if (nodes[id].kind == NodeKind::variable) t.support.push_back(nodes[id].a);
    std::sort(t.support.begin(), t.support.end());
    t.support.erase(std::unique(t.support.begin(), t.support.end()), t.support.end());

    for (auto id : reach) {
      const auto& n = nodes[id];
      Instr in{n.kind};
      switch (n.kind) {
        case NodeKind::constant: in.c = n.c; break;
        case NodeKind::variable:
          in.a = static_cast<std::uint32_t>(std::lower_bound(t.support.begin(), t.support.end(), n.a) -
                                            t.support.begin());
          break;
        case NodeKind::sum:
          in.a = static_cast<std::uint32_t>(t.args.size());
          in.b = n.b;
          for (std::uint32_t i = 0; i < n.b; ++i) t.args.push_back(local(pool_->args[n.a + i]));
          break;
        case NodeKind::product:
          in.a = local(n.a);
          in.b = local(n.b);
          t.nonlinear = true;
          break;
        case NodeKind::curve:
          in.fn = pool_->functions[n.a].get();
          in.a = local(n.b);
          t.nonlinear = true;
          break;
        case NodeKind::negation: in.a = local(n.a); break;
        case NodeKind::square:
        case NodeKind::reciprocal:
          in.a = local(n.a);
          t.nonlinear = true;
          break;
      }
      t.instrs.push_back(in);
    }
    return t;
  }

  double forward0(const Tape& t, std::span<const double> x, Workspace& ws) const {
    ws.val.resize(t.instrs.size());
    double* v = ws.val.data();
    for (std::size_t i = 0; i < t.instrs.size(); ++i) {
      const Instr& in = t.instrs[i];
      switch (in.kind) {
        case NodeKind::constant: v[i] = in.c; break;
        case NodeKind::variable: v[i] = x[t.support[in.a]]; break;
        case NodeKind::sum: {
          double s = 0.0;
          for (std::uint32_t k = 0; k < in.b; ++k) s += v[t.args[in.a + k]];
          v[i] = s;
          break;
        }
        case NodeKind::product: v[i] = v[in.a] * v[in.b]; break;
        case NodeKind::negation: v[i] = -v[in.a]; break;
        case NodeKind::square: v[i] = v[in.a] * v[in.a]; break;
        case NodeKind::reciprocal: v[i] = 1.0 / v[in.a]; break;
        case NodeKind::curve: v[i] = in.fn->taylor(v[in.a]).f; break;
      }
    }
    return v[t.instrs.size() - 1];
  }

  // Values, gradients (k per node) and optionally Hessians (k*k per node)
  // over the tape's local variable support.
  void forward_derivatives(const Tape& t, std::span<const double> x, Workspace& ws, bool second) const {
    const std::size_t n = t.instrs.size();
    const std::size_t k = t.support.size();
    const std::size_t kk = k * k;
    ws.val.assign(n, 0.0);
    ws.grad.assign(n * k, 0.0);
    if (second) ws.hess.assign(n * kk, 0.0);
    double* v = ws.val.data();
    auto G = [&](std::size_t i) { return ws.grad.data() + i * k; };
    auto H = [&](std::size_t i) { return ws.hess.data() + i * kk; };

    for (std::size_t i = 0; i < n; ++i) {
      const Instr& in = t.instrs[i];
      const double fault = (fault_ && *fault_ == in.kind) ? 1.5 : 1.0;
      double* gi = G(i);
      switch (in.kind) {
        case NodeKind::constant: v[i] = in.c; break;
        case NodeKind::variable:
          v[i] = x[t.support[in.a]];
          gi[in.a] = fault;
          break;
        case NodeKind::sum: {
          double s = 0.0;
          for (std::uint32_t m = 0; m < in.b; ++m) {
            const auto c = t.args[in.a + m];
            s += v[c];
            const double* gc = G(c);
            for (std::size_t q = 0; q < k; ++q) gi[q] += fault * gc[q];
            if (second) {
              const double* hc = H(c);
              double* hi = H(i);
              for (std::size_t q = 0; q < kk; ++q) hi[q] += hc[q];
            }
          }
          v[i] = s;
          break;
        }
        case NodeKind::product: {
          const double va = v[in.a], vb = v[in.b];
          const double* ga = G(in.a);
          const double* gb = G(in.b);
          v[i] = va * vb;
          for (std::size_t q = 0; q < k; ++q) gi[q] = fault * (va * gb[q] + vb * ga[q]);
          if (second) {
            const double* ha = H(in.a);
            const double* hb = H(in.b);
            double* hi = H(i);
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t q = 0; q < k; ++q)
                hi[p * k + q] = va * hb[p * k + q] + vb * ha[p * k + q] + ga[p] * gb[q] + gb[p] * ga[q];
          }
          break;
        }
        case NodeKind::negation: {
          const double* ga = G(in.a);
          v[i] = -v[in.a];
          for (std::size_t q = 0; q < k; ++q) gi[q] = -fault * ga[q];
          if (second) {
            const double* ha = H(in.a);
            double* hi = H(i);
            for (std::size_t q = 0; q < kk; ++q) hi[q] = -ha[q];
          }
          break;
        }
        case NodeKind::square:
        case NodeKind::reciprocal:
        case NodeKind::curve: {
          const double a = v[in.a];
          double f, df, d2f;
          if (in.kind == NodeKind::square) {
            f = a * a, df = 2.0 * a, d2f = 2.0;
          } else if (in.kind == NodeKind::reciprocal) {
            f = 1.0 / a, df = -f * f, d2f = 2.0 * f * f * f;
          } else {
            const auto tay = in.fn->taylor(a);
            f = tay.f, df = tay.df, d2f = tay.d2f;
          }
          v[i] = f;
          const double* ga = G(in.a);
          for (std::size_t q = 0; q < k; ++q) gi[q] = fault * df * ga[q];
          if (second) {
            const double* ha = H(in.a);
            double* hi = H(i);
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t q = 0; q < k; ++q) hi[p * k + q] = df * ha[p * k + q] + d2f * ga[p] * ga[q];
          }
          break;
        }
      }
    }
  }

  std::unique_ptr<detail::Pool> pool_;
  std::vector<VariableInfo> vars_;
  std::vector<std::uint32_t> var_nodes_;
  std::vector<Root> eqs_, ineqs_;
  std::optional<std::uint32_t> objective_;
  Tape objective_tape_;
  std::vector<Tape> eq_tapes_, ineq_tapes_;
  std::optional<NodeKind> fault_;
  bool finalized_ = false;
};

}  // namespace fourwire::nlp
