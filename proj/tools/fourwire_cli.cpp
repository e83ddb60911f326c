// fourwire_cli: run scenarios, solve case files, compare result documents.
//
// Exit codes: 0 ok, 1 usage, 2 parse failure, 3 validation failure,
// 4 non-convergence.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fourwire/fourwire.hpp"

namespace fs = std::filesystem;
using namespace fourwire;

namespace {

enum Exit { ok = 0, usage = 1, parse = 2, validation = 3, no_convergence = 4 };

struct Failure {
  Exit code;
  std::string message;
};

nlohmann::ordered_json read_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{parse, "cannot open " + path};
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Failure{parse, path + ": " + e.what()};
  }
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Failure{usage, "cannot write " + path.string()};
    out << text;
  }
  fs::rename(tmp, path);
}

template <class F>
auto classify(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Failure&) {
    throw;
  } catch (const CaseError& e) {
    throw Failure{e.kind() == CaseErrorKind::schema ? parse : validation, e.what()};
  } catch (const ScenarioError& e) {
    throw Failure{parse, e.what()};
  } catch (const InvalidControlLaw& e) {
    throw Failure{validation, e.what()};
  } catch (const NotSquare& e) {
    throw Failure{validation, e.what()};
  } catch (const std::invalid_argument& e) {
    throw Failure{validation, e.what()};
  }
}

struct Options {
  std::string scenario, case_path, objective, out = ".";
  std::vector<std::string> compare;
  std::optional<double> tol;
  double threshold = 0.0;
  bool log_iterations = false;
};

int run_scenario(const Options& o) {
  Scenario s = classify([&] {
    if (!o.scenario.empty()) return load_scenario(o.scenario);
    Scenario d;
    d.name = fs::path(o.case_path).stem().string();
    d.runs.push_back({d.name, Objective::none, {}});
    return d;
  });
  if (!o.case_path.empty()) s.case_path = o.case_path;
  if (!o.objective.empty()) {
    const Objective obj = classify([&] { return parse_objective(o.objective); });
    for (auto& r : s.runs) r.objective = obj;
  }
  if (o.tol) s.solver.tol = *o.tol;
  if (!(s.solver.tol > 0.0)) throw Failure{usage, "--tol must be positive"};
  const Network net = classify([&] { return load_case(s.case_path.string()); });

  struct Done {
    RunOutput out;
    std::string log;
  };
  std::vector<std::future<Done>> jobs;
  for (const auto& run : s.runs)
    jobs.push_back(std::async(std::launch::async, [&, run] {
      std::ostringstream log;
      SolveOptions opts = s.solver;
      if (o.log_iterations) opts.log = &log;
      Done d{classify([&] { return execute(net, run, opts, s.method); }), ""};
      d.log = log.str();
      return d;
    }));
  std::vector<Done> done;
  std::optional<Failure> first;
  for (auto& j : jobs) {
    try {
      done.push_back(j.get());
    } catch (const Failure& f) {
      if (!first) first = f;
    }
  }
  if (first) throw *first;

  bool all = true;
  for (const auto& d : done) {
    const auto& r = d.out.solve;
    std::cout << d.out.name << " " << to_string(r.status) << " objective=" << d.out.result["objective_value"]["value"]
              << " iterations=" << r.iterations << "\n";
    if (!r.converged()) {
      all = false;
      std::cerr << d.out.name << ": " << r.message << "\n";
    }
  }
  if (!all) return no_convergence;

  fs::create_directories(o.out);
  for (const auto& d : done) {
    write_atomic(fs::path(o.out) / (d.out.name + ".json"), d.out.result.dump(2) + "\n");
    if (s.plotdata) write_atomic(fs::path(o.out) / (d.out.name + ".plot.tsv"), emit_plotdata(d.out.result));
    if (o.log_iterations) write_atomic(fs::path(o.out) / (d.out.name + ".iterations.jsonl"), d.log);
  }
  return ok;
}

int run_compare(const Options& o) {
  const auto a = read_result(o.compare[0]);
  const auto b = read_result(o.compare[1]);
  ojson diff;
  try {
    diff = compare(a, b, o.threshold);
  } catch (const ScenarioError& e) {
    throw Failure{parse, e.what()};
  }
  std::cout << "fields=" << diff["fields"].size() << " flagged=" << diff["flagged"] << " max_abs=" << diff["max_abs"]
            << "\n";
  if (o.out != ".") {
    fs::create_directories(o.out);
    write_atomic(fs::path(o.out) / "diff.json", diff.dump(2) + "\n");
  } else {
    for (const auto& f : diff["fields"])
      if (f["flagged"].get<bool>()) std::cout << f["path"].get<std::string>() << " " << f["a"] << " " << f["b"] << "\n";
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Four-wire unbalanced power flow and OPF with inverter models"};
  Options o;
  auto* run = app.add_subcommand("run", "Run a scenario file");
  run->add_option("scenario", o.scenario, "Scenario file")->required();
  for (CLI::App* a : {static_cast<CLI::App*>(&app), run}) {
    a->add_option("--case", o.case_path, "Case file (replaces the scenario's case)");
    a->add_option("--objective", o.objective, "loss|negseq|cost|pf")
        ->check(CLI::IsMember({"loss", "negseq", "cost", "pf", "none"}));
    a->add_option("--tol", o.tol, "Solver tolerance");
    a->add_option("--out", o.out, "Output directory");
    a->add_flag("--log-iterations", o.log_iterations, "Write the solver iteration log");
  }
  app.add_option("--compare", o.compare, "Compare two result documents")->expected(2);
  app.add_option("--threshold", o.threshold, "Flag deltas above this value")->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }
  try {
    if (!o.compare.empty()) return run_compare(o);
    if (run->parsed() || !o.case_path.empty()) return run_scenario(o);
    std::cerr << app.help();
    return usage;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  }
}
