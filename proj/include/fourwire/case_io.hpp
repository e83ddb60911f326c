#pragma once

// Case files: JSON documents tagged "fourwire-case/1", physical units
// (V, kVA, kW, kvar, A, ohm, S). Complex numbers are [re, im].

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fourwire/netmodel.hpp"

namespace fourwire {

inline constexpr const char* kCaseSchema = "fourwire-case/1";

namespace detail {

using json = nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<std::string>& defaults) : defaults_(defaults) {}

  [[noreturn]] static void fail(const std::string& where, const std::string& msg,
                                CaseErrorKind kind = CaseErrorKind::schema) {
    throw CaseError(kind, where.empty() ? "/" : where, msg);
  }

  static void only(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) fail(where, "expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!ok.count(it.key())) fail(where + "/" + it.key(), "unknown field");
  }

  static const json& need(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) fail(where + "/" + key, "missing required field");
    return j.at(key);
  }

  static double number(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    return j.get<double>();
  }

  static std::string text(const json& j, const std::string& where) {
    if (!j.is_string()) fail(where, "expected a string");
    return j.get<std::string>();
  }

  static Complex complex(const json& j, const std::string& where) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (!j.is_array() || j.size() != 2) fail(where, "expected [re, im]");
    return {number(j[0], where + "/0"), number(j[1], where + "/1")};
  }

  double number_or(const json& j, const std::string& where, const char* key, double def) {
    if (!j.contains(key)) {
      record(where + "/" + key, def);
      return def;
    }
    return number(j.at(key), where + "/" + key);
  }

  /// A scalar broadcast to n entries, or an array of exactly n.
  static std::vector<double> per_conductor(const json& j, const std::string& where, std::size_t n) {
    if (j.is_number()) return std::vector<double>(n, j.get<double>());
    if (!j.is_array()) fail(where, "expected a number or an array");
    if (j.size() != n)
      fail(where, "expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()),
           CaseErrorKind::invalid_value);
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(number(j[i], where + "/" + std::to_string(i)));
    return out;
  }

  static std::array<double, 3> triple(const json& j, const std::string& where) {
    const auto v = per_conductor(j, where, 3);
    return {v[0], v[1], v[2]};
  }

  void record(const std::string& where, double v) {
    std::ostringstream os;
    os << where << " = " << v;
    defaults_.push_back(os.str());
  }
  void record(const std::string& where, const std::string& v) { defaults_.push_back(where + " = " + v); }

 private:
  std::vector<std::string>& defaults_;
};

template <typename E, std::size_t N>
E parse_enum(const json& j, const std::string& where, const std::array<E, N>& values) {
  const std::string s = Reader::text(j, where);
  for (E e : values)
    if (s == to_string(e)) return e;
  Reader::fail(where, "unknown value \"" + s + "\"", CaseErrorKind::invalid_value);
}

inline Conductor parse_conductor(const json& j, const std::string& where) {
  const std::string s = Reader::text(j, where);
  for (std::size_t k = 0; k < 4; ++k)
    if (s == conductor_name(static_cast<Conductor>(k))) return static_cast<Conductor>(k);
  Reader::fail(where, "unknown node \"" + s + "\"", CaseErrorKind::invalid_value);
}

inline std::vector<CurvePoint> parse_curve(const json& j, const std::string& where) {
  if (!j.is_array()) Reader::fail(where, "expected an array of [v, y] points");
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].size() != 2) Reader::fail(w, "expected [v, y]");
    out.push_back({Reader::number(j[i][0], w + "/0"), Reader::number(j[i][1], w + "/1")});
  }
  return out;
}

inline ControlLaw parse_law(Reader& rd, const json& j, const std::string& w, InverterSpec& inv) {
  const std::string type = Reader::text(Reader::need(j, w, "type"), w + "/type");
  auto curve_law = [&](auto law) {
    Reader::only(j, w, {"type", "variant", "curve", "smoothing"});
    law.variant = parse_enum(Reader::need(j, w, "variant"), w + "/variant", kCurveVariants);
    if (j.contains("curve"))
      law.curve = parse_curve(j.at("curve"), w + "/curve");
    else
      rd.record(w + "/curve", "default");
    law.smoothing = rd.number_or(j, w, "smoothing", PwlCurve::kDefaultSmoothing);
    try {
      PwlCurve(law.curve, law.smoothing);
    } catch (const std::invalid_argument& e) {
      Reader::fail(w + "/curve", e.what(), CaseErrorKind::invalid_value);
    }
    return ControlLaw{law};
  };
  if (type == "droop") {
    Reader::only(j, w, {"type"});
    return law::Droop{};
  }
  if (type == "volt_var") return curve_law(law::VoltVar{});
  if (type == "volt_watt") return curve_law(law::VoltWatt{});
  if (type == "power_sharing") {
    Reader::only(j, w, {"type"});
    return law::PowerSharing{};
  }
  if (type == "equal_active_power") {
    Reader::only(j, w, {"type"});
    return law::EqualActivePower{};
  }
  if (type == "const_pf") {
    Reader::only(j, w, {"type", "pf"});
    law::ConstPf l;
    if (j.contains("pf"))
      l.pf = Reader::number(j.at("pf"), w + "/pf");
    else if (inv.pf)
      l.pf = *inv.pf;
    else
      Reader::fail(w + "/pf", "const_pf needs pf here or on the inverter");
    return l;
  }
  if (type == "seq_limit") {
    Reader::only(j, w, {"type", "caps"});
    law::SeqLimit l;
    if (j.contains("caps"))
      l.caps = Reader::triple(j.at("caps"), w + "/caps");
    else if (inv.seq_current_caps)
      l.caps = *inv.seq_current_caps;
    else
      Reader::fail(w + "/caps", "seq_limit needs caps here or seq_current_caps on the inverter");
    return l;
  }
  if (type == "legacy_converter") {
    Reader::only(j, w, {"type", "s_rating", "i_rating", "status", "z", "s_ext", "q_int"});
    law::LegacyConverter l;
    l.s_rating = Reader::triple(Reader::need(j, w, "s_rating"), w + "/s_rating");
    l.i_rating = Reader::triple(Reader::need(j, w, "i_rating"), w + "/i_rating");
    l.status = static_cast<int>(rd.number_or(j, w, "status", 1.0));
    if (j.contains("z")) {
      const json& z = j.at("z");
      if (!z.is_array() || z.size() != 3) Reader::fail(w + "/z", "expected 3 complex impedances");
      for (std::size_t k = 0; k < 3; ++k) l.z[k] = Reader::complex(z[k], w + "/z/" + std::to_string(k));
    } else {
      rd.record(w + "/z", 0.0);
    }
    if (j.contains("s_ext")) l.s_ext = Reader::complex(j.at("s_ext"), w + "/s_ext");
    if (j.contains("q_int") && !j.at("q_int").is_null()) l.q_int = Reader::number(j.at("q_int"), w + "/q_int");
    return l;
  }
  Reader::fail(w + "/type", "unknown control law \"" + type + "\"", CaseErrorKind::control_law);
}

inline InverterSpec parse_inverter(Reader& rd, const json& j, const std::string& w) {
  Reader::only(j, w,
               {"id", "bus", "topology", "mode", "s_rating", "i_rating", "r_filter", "x_filter", "b_shunt",
                "prime_p_min", "prime_p_max", "q_slack_bounds", "control_laws", "droop", "pf", "gfm_voltage_mode",
                "gfm_voltage_setpoint", "gfm_formulation", "seq_current_caps"});
  InverterSpec g;
  g.id = Reader::text(Reader::need(j, w, "id"), w + "/id");
  g.bus = Reader::text(Reader::need(j, w, "bus"), w + "/bus");
  g.topology = parse_enum(Reader::need(j, w, "topology"), w + "/topology",
                          std::array{Topology::four_leg, Topology::three_leg});
  g.mode = parse_enum(Reader::need(j, w, "mode"), w + "/mode", std::array{InverterMode::gfl, InverterMode::gfm});
  g.s_rating = Reader::number(Reader::need(j, w, "s_rating"), w + "/s_rating");
  const std::size_t nc = g.conductor_count();
  g.i_rating = Reader::per_conductor(Reader::need(j, w, "i_rating"), w + "/i_rating", nc);
  g.r_filter = Reader::per_conductor(Reader::need(j, w, "r_filter"), w + "/r_filter", nc);
  g.x_filter = Reader::per_conductor(Reader::need(j, w, "x_filter"), w + "/x_filter", nc);
  if (j.contains("b_shunt")) {
    g.b_shunt = Reader::per_conductor(j.at("b_shunt"), w + "/b_shunt", nc);
  } else {
    g.b_shunt.assign(nc, 0.0);
    rd.record(w + "/b_shunt", 0.0);
  }
  g.prime_p_min = rd.number_or(j, w, "prime_p_min", 0.0);
  g.prime_p_max = Reader::number(Reader::need(j, w, "prime_p_max"), w + "/prime_p_max");
  if (j.contains("q_slack_bounds")) {
    const auto& b = j.at("q_slack_bounds");
    if (!b.is_array() || b.size() != 2) Reader::fail(w + "/q_slack_bounds", "expected [lo, hi]");
    g.q_slack_min = Reader::number(b[0], w + "/q_slack_bounds/0");
    g.q_slack_max = Reader::number(b[1], w + "/q_slack_bounds/1");
  } else {
    rd.record(w + "/q_slack_bounds", "[-1000, 1000]");
  }
  if (j.contains("droop")) {
    const std::string d = w + "/droop";
    const json& dj = j.at("droop");
    Reader::only(dj, d, {"dp", "dq", "u_set", "p_set", "q_set"});
    DroopParams p;
    p.dp = Reader::number(Reader::need(dj, d, "dp"), d + "/dp");
    p.dq = Reader::number(Reader::need(dj, d, "dq"), d + "/dq");
    p.u_set = rd.number_or(dj, d, "u_set", 1.0);
    if (dj.contains("p_set"))
      p.p_set = Reader::triple(dj.at("p_set"), d + "/p_set");
    else
      rd.record(d + "/p_set", 0.0);
    if (dj.contains("q_set"))
      p.q_set = Reader::triple(dj.at("q_set"), d + "/q_set");
    else
      rd.record(d + "/q_set", 0.0);
    g.droop = p;
  }
  if (j.contains("pf")) g.pf = Reader::number(j.at("pf"), w + "/pf");
  if (j.contains("seq_current_caps")) g.seq_current_caps = Reader::triple(j.at("seq_current_caps"), w + "/seq_current_caps");
  if (j.contains("gfm_voltage_mode")) {
    std::string m = Reader::text(j.at("gfm_voltage_mode"), w + "/gfm_voltage_mode");
    if (m == "equal_magnitudes") m = "equal";
    g.gfm_voltage_mode = parse_enum(json(m), w + "/gfm_voltage_mode",
                                    std::array{GfmVoltageMode::setpoint, GfmVoltageMode::equal, GfmVoltageMode::droop});
  } else if (g.mode == InverterMode::gfm) {
    rd.record(w + "/gfm_voltage_mode", "equal");
  }
  g.gfm_voltage_setpoint = j.contains("gfm_voltage_setpoint")
                               ? Reader::number(j.at("gfm_voltage_setpoint"), w + "/gfm_voltage_setpoint")
                               : 1.0;
  if (j.contains("gfm_formulation")) {
    const std::string f = Reader::text(j.at("gfm_formulation"), w + "/gfm_formulation");
    if (f == "magnitude_angle")
      g.gfm_formulation = GfmFormulation::magnitude_angle;
    else if (f == "positive_sequence")
      g.gfm_formulation = GfmFormulation::positive_sequence;
    else
      Reader::fail(w + "/gfm_formulation", "unknown value \"" + f + "\"", CaseErrorKind::invalid_value);
  }
  if (j.contains("control_laws")) {
    const json& laws = j.at("control_laws");
    if (!laws.is_array()) Reader::fail(w + "/control_laws", "expected an array");
    for (std::size_t i = 0; i < laws.size(); ++i)
      g.control_laws.push_back(parse_law(rd, laws[i], w + "/control_laws/" + std::to_string(i), g));
  }
  return g;
}

template <typename F>
void each(const json& root, const char* key, bool required, F&& f) {
  const std::string w = std::string("/") + key;
  if (!root.contains(key)) {
    if (required) Reader::fail(w, "missing required section");
    return;
  }
  const json& arr = root.at(key);
  if (!arr.is_array()) Reader::fail(w, "expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) f(arr[i], w + "/" + std::to_string(i));
}

}  // namespace detail

/// Parses and validates a case document. Quantities stay in physical units;
/// per_unit() gives the scaled view.
inline Network parse_case(const nlohmann::json& root) {
  using detail::Reader;
  Network net;
  Reader rd(net.defaults_applied);
  Reader::only(root, "", {"schema", "name", "sbase", "frequency", "buses", "lines", "loads", "sources", "inverters"});
  const std::string schema = Reader::text(Reader::need(root, "", "schema"), "/schema");
  if (schema != kCaseSchema) Reader::fail("/schema", "unsupported schema \"" + schema + "\"");
  net.sbase = Reader::number(Reader::need(root, "", "sbase"), "/sbase");
  net.frequency = rd.number_or(root, "", "frequency", 50.0);

  detail::each(root, "buses", true, [&](const nlohmann::json& j, const std::string& w) {
    Reader::only(j, w, {"id", "nodes", "vnom", "grounding", "vmin", "vmax", "u2_max"});
    Bus b;
    b.id = Reader::text(Reader::need(j, w, "id"), w + "/id");
    if (j.contains("nodes")) {
      const auto& n = j.at("nodes");
      if (!n.is_array()) Reader::fail(w + "/nodes", "expected an array");
      b.nodes.clear();
      for (std::size_t i = 0; i < n.size(); ++i)
        b.nodes.push_back(detail::parse_conductor(n[i], w + "/nodes/" + std::to_string(i)));
    } else {
      rd.record(w + "/nodes", "[a, b, c, n]");
    }
    b.vnom = Reader::number(Reader::need(j, w, "vnom"), w + "/vnom");
    if (j.contains("grounding") && !j.at("grounding").is_null())
      b.grounding = Reader::number(j.at("grounding"), w + "/grounding");
    b.vmin = rd.number_or(j, w, "vmin", 0.9);
    b.vmax = rd.number_or(j, w, "vmax", 1.1);
    b.u2_max = rd.number_or(j, w, "u2_max", 0.02);
    net.buses.push_back(std::move(b));
  });
  detail::each(root, "lines", false, [&](const nlohmann::json& j, const std::string& w) {
    Reader::only(j, w, {"id", "from_bus", "to_bus", "z", "length"});
    Line l;
    l.id = Reader::text(Reader::need(j, w, "id"), w + "/id");
    l.from_bus = Reader::text(Reader::need(j, w, "from_bus"), w + "/from_bus");
    l.to_bus = Reader::text(Reader::need(j, w, "to_bus"), w + "/to_bus");
    const auto& z = Reader::need(j, w, "z");
    if (!z.is_array()) Reader::fail(w + "/z", "expected a matrix as row arrays");
    for (std::size_t r = 0; r < z.size(); ++r) {
      const std::string wr = w + "/z/" + std::to_string(r);
      if (!z[r].is_array()) Reader::fail(wr, "expected a row array");
      std::vector<Complex> row;
      for (std::size_t c = 0; c < z[r].size(); ++c) row.push_back(Reader::complex(z[r][c], wr + "/" + std::to_string(c)));
      l.z.push_back(std::move(row));
    }
    l.length = rd.number_or(j, w, "length", 1.0);
    net.lines.push_back(std::move(l));
  });
  detail::each(root, "loads", false, [&](const nlohmann::json& j, const std::string& w) {
    Reader::only(j, w, {"id", "bus", "connection", "p", "q"});
    Load d;
    d.id = Reader::text(Reader::need(j, w, "id"), w + "/id");
    d.bus = Reader::text(Reader::need(j, w, "bus"), w + "/bus");
    if (j.contains("connection"))
      d.connection = Reader::text(j.at("connection"), w + "/connection");
    else
      rd.record(w + "/connection", "wye");
    d.p = Reader::triple(Reader::need(j, w, "p"), w + "/p");
    d.q = Reader::triple(Reader::need(j, w, "q"), w + "/q");
    net.loads.push_back(std::move(d));
  });
  detail::each(root, "sources", true, [&](const nlohmann::json& j, const std::string& w) {
    Reader::only(j, w, {"id", "bus", "vm", "va", "cost"});
    VoltageSource s;
    s.id = Reader::text(Reader::need(j, w, "id"), w + "/id");
    s.bus = Reader::text(Reader::need(j, w, "bus"), w + "/bus");
    s.vm = rd.number_or(j, w, "vm", 1.0);
    if (j.contains("va"))
      s.va = Reader::triple(j.at("va"), w + "/va");
    else
      rd.record(w + "/va", "[0, -120, 120]");
    s.cost = rd.number_or(j, w, "cost", 0.0);
    net.sources.push_back(std::move(s));
  });
  detail::each(root, "inverters", false, [&](const nlohmann::json& j, const std::string& w) {
    net.inverters.push_back(detail::parse_inverter(rd, j, w));
  });
  validate(net);
  return net;
}

inline Network load_case_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CaseError(CaseErrorKind::schema, "/", std::string("not valid JSON: ") + e.what());
  }
  return parse_case(root);
}

/// Reads a case file. An unreadable file is reported as a schema error at "/".
inline Network load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CaseError(CaseErrorKind::schema, "/", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_case_text(ss.str());
}

namespace detail {

inline json complex_json(Complex c) { return json::array({c.real(), c.imag()}); }

inline json law_json(const ControlLaw& l) {
  json j;
  j["type"] = law_name(l);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, law::VoltVar> || std::is_same_v<T, law::VoltWatt>) {
          j["variant"] = to_string(x.variant);
          json c = json::array();
          for (const auto& p : x.curve) c.push_back({p.v, p.y});
          j["curve"] = c;
          j["smoothing"] = x.smoothing;
        } else if constexpr (std::is_same_v<T, law::ConstPf>) {
          j["pf"] = x.pf;
        } else if constexpr (std::is_same_v<T, law::SeqLimit>) {
          j["caps"] = x.caps;
        } else if constexpr (std::is_same_v<T, law::LegacyConverter>) {
          j["s_rating"] = x.s_rating;
          j["i_rating"] = x.i_rating;
          j["status"] = x.status;
          j["z"] = json::array({complex_json(x.z[0]), complex_json(x.z[1]), complex_json(x.z[2])});
          j["s_ext"] = complex_json(x.s_ext);
          j["q_int"] = x.q_int ? json(*x.q_int) : json(nullptr);
        }
      },
      l);
  return j;
}

}  // namespace detail

/// Serializes a physical-unit network; parse_case(emit_case(n)) == n.
inline nlohmann::json emit_case(const Network& physical) {
  using detail::json;
  const Network net = physical.per_unit ? physical_units(physical) : physical;
  json root;
  root["schema"] = kCaseSchema;
  root["sbase"] = net.sbase;
  root["frequency"] = net.frequency;
  root["buses"] = json::array();
  for (const auto& b : net.buses) {
    json j;
    j["id"] = b.id;
    json nodes = json::array();
    for (auto c : b.nodes) nodes.push_back(conductor_name(c));
    j["nodes"] = nodes;
    j["vnom"] = b.vnom;
    j["grounding"] = b.grounding ? json(*b.grounding) : json(nullptr);
    j["vmin"] = b.vmin;
    j["vmax"] = b.vmax;
    j["u2_max"] = b.u2_max;
    root["buses"].push_back(j);
  }
  root["lines"] = json::array();
  for (const auto& l : net.lines) {
    json z = json::array();
    for (const auto& row : l.z) {
      json r = json::array();
      for (auto c : row) r.push_back(detail::complex_json(c));
      z.push_back(r);
    }
    root["lines"].push_back({{"id", l.id}, {"from_bus", l.from_bus}, {"to_bus", l.to_bus}, {"z", z}, {"length", l.length}});
  }
  root["loads"] = json::array();
  for (const auto& d : net.loads)
    root["loads"].push_back({{"id", d.id}, {"bus", d.bus}, {"connection", d.connection}, {"p", d.p}, {"q", d.q}});
  root["sources"] = json::array();
  for (const auto& s : net.sources)
    root["sources"].push_back({{"id", s.id}, {"bus", s.bus}, {"vm", s.vm}, {"va", s.va}, {"cost", s.cost}});
  root["inverters"] = json::array();
  for (const auto& g : net.inverters) {
    json j;
    j["id"] = g.id;
    j["bus"] = g.bus;
    j["topology"] = to_string(g.topology);
    j["mode"] = to_string(g.mode);
    j["s_rating"] = g.s_rating;
    j["i_rating"] = g.i_rating;
    j["r_filter"] = g.r_filter;
    j["x_filter"] = g.x_filter;
    j["b_shunt"] = g.b_shunt;
    j["prime_p_min"] = g.prime_p_min;
    j["prime_p_max"] = g.prime_p_max;
    j["q_slack_bounds"] = {g.q_slack_min, g.q_slack_max};
    if (g.droop)
      j["droop"] = {{"dp", g.droop->dp},
                    {"dq", g.droop->dq},
                    {"u_set", g.droop->u_set},
                    {"p_set", g.droop->p_set},
                    {"q_set", g.droop->q_set}};
    if (g.pf) j["pf"] = *g.pf;
    if (g.seq_current_caps) j["seq_current_caps"] = *g.seq_current_caps;
    j["gfm_voltage_mode"] = to_string(g.gfm_voltage_mode);
    j["gfm_voltage_setpoint"] = g.gfm_voltage_setpoint;
    j["gfm_formulation"] =
        g.gfm_formulation == GfmFormulation::magnitude_angle ? "magnitude_angle" : "positive_sequence";
    json laws = json::array();
    for (const auto& l : g.control_laws) laws.push_back(detail::law_json(l));
    j["control_laws"] = laws;
    root["inverters"].push_back(j);
  }
  return root;
}

}  // namespace fourwire
