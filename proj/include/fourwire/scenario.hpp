#pragma once

// Scenarios: a case file, per-inverter overrides, an objective and solver
// options. A scenario may list several runs that share the case.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fourwire/case_io.hpp"
#include "fourwire/ipm.hpp"
#include "fourwire/newton.hpp"
#include "fourwire/results.hpp"

namespace fourwire {

inline constexpr const char* kScenarioSchema = "fourwire-scenario/1";

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { automatic, newton, ipm };

/// Fields replaced on one inverter, in case-file form.
struct InverterOverride {
  std::string inverter;
  nlohmann::json fields;
};

struct Run {
  std::string name;
  Objective objective = Objective::none;
  std::vector<InverterOverride> overrides;
};

struct Scenario {
  std::string name;
  std::filesystem::path case_path;
  std::vector<Run> runs;
  SolveOptions solver;
  Method method = Method::automatic;
  bool plotdata = false;
};

namespace detail {

inline Method parse_method(const std::string& s) {
  if (s == "auto") return Method::automatic;
  if (s == "newton") return Method::newton;
  if (s == "ipm") return Method::ipm;
  throw ScenarioError("unknown solver method " + s);
}

inline std::vector<InverterOverride> parse_overrides(const nlohmann::json& j) {
  std::vector<InverterOverride> out;
  if (!j.is_array()) throw ScenarioError("overrides must be an array");
  for (const auto& o : j) {
    if (!o.is_object() || !o.contains("inverter") || !o["inverter"].is_string())
      throw ScenarioError("override without an inverter id");
    nlohmann::json f = o;
    f.erase("inverter");
    out.push_back({o["inverter"].get<std::string>(), f});
  }
  return out;
}

inline Objective objective_of(const nlohmann::json& j) {
  try {
    return parse_objective(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ScenarioError(e.what());
  }
}

}  // namespace detail

/// Parses a scenario document; relative case paths resolve against base_dir.
inline Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const std::set<std::string> keys{"schema", "name", "case", "objective", "overrides", "runs", "solver", "plotdata"};
  if (!j.is_object()) throw ScenarioError("scenario must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw ScenarioError("unknown scenario field " + it.key());
  if (j.value("schema", std::string()) != kScenarioSchema)
    throw ScenarioError(std::string("scenario schema must be ") + kScenarioSchema);
  Scenario s;
  s.name = j.value("name", std::string("scenario"));
  if (!j.contains("case") || !j["case"].is_string()) throw ScenarioError("scenario needs a case path");
  s.case_path = j["case"].get<std::string>();
  if (s.case_path.is_relative()) s.case_path = base_dir / s.case_path;
  s.plotdata = j.value("plotdata", false);
  if (j.contains("solver")) {
    const auto& o = j["solver"];
    s.solver.tol = o.value("tol", s.solver.tol);
    s.solver.max_iter = o.value("max_iter", s.solver.max_iter);
    s.solver.mu_init = o.value("mu_init", s.solver.mu_init);
    if (o.contains("method")) s.method = detail::parse_method(o["method"].get<std::string>());
  }
  const Objective base = j.contains("objective") ? detail::objective_of(j["objective"]) : Objective::none;
  const auto shared = j.contains("overrides") ? detail::parse_overrides(j["overrides"]) : std::vector<InverterOverride>{};
  if (j.contains("runs")) {
    for (const auto& r : j["runs"]) {
      Run run;
      run.name = r.value("name", s.name + "_" + std::to_string(s.runs.size()));
      run.objective = r.contains("objective") ? detail::objective_of(r["objective"]) : base;
      run.overrides = shared;
      if (r.contains("overrides")) {
        auto more = detail::parse_overrides(r["overrides"]);
        run.overrides.insert(run.overrides.end(), more.begin(), more.end());
      }
      s.runs.push_back(std::move(run));
    }
  } else {
    s.runs.push_back({s.name, base, shared});
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
  return parse_scenario(j, path.parent_path());
}

/// Applies overrides by rewriting the case document; topology changes trim
/// or extend the per-conductor arrays.
inline Network apply_overrides(const Network& net, const std::vector<InverterOverride>& overrides) {
  if (overrides.empty()) return net;
  nlohmann::json doc = emit_case(net);
  for (const auto& o : overrides) {
    auto& invs = doc["inverters"];
    auto it = std::find_if(invs.begin(), invs.end(), [&](const auto& g) { return g["id"] == o.inverter; });
    if (it == invs.end()) throw ScenarioError("override references unknown inverter " + o.inverter);
    for (auto f = o.fields.begin(); f != o.fields.end(); ++f) (*it)[f.key()] = f.value();
    const std::size_t nc = (*it).value("topology", std::string("four_leg")) == "three_leg" ? 3 : 4;
    for (const char* key : {"i_rating", "r_filter", "x_filter", "b_shunt"}) {
      auto& arr = (*it)[key];
      if (!arr.is_array() || arr.empty()) continue;
      while (arr.size() > nc) arr.erase(arr.size() - 1);
      while (arr.size() < nc) arr.push_back(arr[0]);
    }
  }
  return parse_case(doc);
}

struct RunOutput {
  std::string name;
  SolveResult solve;
  ojson result;
};

/// Assembles and solves one run. Runs without an objective go to Newton,
/// everything else to the interior point method.
inline RunOutput execute(const Network& net, const Run& run, const SolveOptions& opts, Method method) {
  const Network case_net = apply_overrides(net, run.overrides);
  AssembleOptions ao;
  ao.objective = run.objective;
  Assembled a = assemble_network(case_net, ao);
  const bool newton = method == Method::newton || (method == Method::automatic && run.objective == Objective::none);
  RunOutput out;
  out.name = run.name;
  out.solve = newton ? newton_solve(a.problem, opts) : ipm_solve(a.problem, opts);
  out.result = make_result(a, out.solve, {run.name, newton ? "newton" : "ipm", opts.tol});
  return out;
}

/// Field-by-field numeric comparison of two result documents.
inline ojson compare(const ojson& a, const ojson& b, double threshold) {
  if (a.value("schema", "") != kResultSchema || b.value("schema", "") != kResultSchema)
    throw ScenarioError("compare: both documents must be " + std::string(kResultSchema));
  ojson fields = ojson::array();
  std::size_t flagged = 0;
  double max_abs = 0.0;
  auto walk = [&](auto&& self, const ojson& x, const ojson& y, const std::string& path) -> void {
    if (x.is_number() && y.is_number()) {
      const double u = x.get<double>(), v = y.get<double>();
      const double d = v - u;
      const double rel = std::max(std::abs(u), std::abs(v)) > 0.0 ? std::abs(d) / std::max(std::abs(u), std::abs(v)) : 0.0;
      const bool flag = std::abs(d) > threshold || (threshold == 0.0 && d != 0.0);
      if (flag) ++flagged;
      max_abs = std::max(max_abs, std::abs(d));
      fields.push_back({{"path", path}, {"a", u}, {"b", v}, {"abs", std::abs(d)}, {"rel", rel}, {"flagged", flag}});
      return;
    }
    if (x.is_object() && y.is_object()) {
      for (auto it = x.begin(); it != x.end(); ++it)
        if (y.contains(it.key())) self(self, it.value(), y[it.key()], path + "/" + it.key());
      return;
    }
    if (x.is_array() && y.is_array()) {
      for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) self(self, x[i], y[i], path + "/" + std::to_string(i));
    }
  };
  walk(walk, a, b, "");
  ojson out;
  out["schema"] = "fourwire-diff/1";
  out["a"] = a.value("name", "");
  out["b"] = b.value("name", "");
  out["threshold"] = threshold;
  out["max_abs"] = max_abs;
  out["flagged"] = flagged;
  out["fields"] = fields;
  return out;
}

/// Plot-ready tab-separated tables: per-conductor current phasors at each
/// bus with devices, and per-bus sequence voltage magnitudes.
inline std::string emit_plotdata(const ojson& result) {
  if (result.value("schema", "") != kResultSchema) throw ScenarioError("plotdata: not a result document");
  if (result["solver"]["status"] != "converged") throw ScenarioError("plotdata: result did not converge");
  if (result["buses"].empty()) throw ScenarioError("plotdata: empty network");
  std::ostringstream os;
  os << std::setprecision(12);
  os << "# currents\nbus\tconductor\tdevice\tre_a\tim_a\n";
  for (const auto& b : result["current_balance"])
    for (const char* dev : {"grid", "inverter", "load"})
      for (auto it = b[dev].begin(); it != b[dev].end(); ++it)
        os << b["bus"].get<std::string>() << '\t' << it.key() << '\t' << dev << '\t' << it.value()["re"].get<double>()
           << '\t' << it.value()["im"].get<double>() << '\n';
  os << "\n# sequence voltages\nbus\tu0_pu\tu1_pu\tu2_pu\n";
  for (const auto& b : result["buses"])
    os << b["id"].get<std::string>() << '\t' << b["u_seq"]["zero"].get<double>() << '\t'
       << b["u_seq"]["positive"].get<double>() << '\t' << b["u_seq"]["negative"].get<double>() << '\n';
  return os.str();
}

}  // namespace fourwire
