#pragma once

// Network data model: buses, multiconductor lines, wye loads, voltage
// sources and inverters, with structural validation and per-unit scaling.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fourwire/curve.hpp"
#include "fourwire/phasor.hpp"

namespace fourwire {

enum class Topology { four_leg, three_leg };
enum class InverterMode { gfl, gfm };

/// Voltage argument of a Volt-var / Volt-Watt law.
enum class CurveVariant {
  phase_to_neutral,
  phase_to_phase,
  phase_to_phase_avg,
  phase_to_ground_avg,
  phase_to_neutral_avg,
  phase_to_ground
};

inline constexpr std::array<CurveVariant, 6> kCurveVariants{
    CurveVariant::phase_to_neutral,    CurveVariant::phase_to_phase,
    CurveVariant::phase_to_phase_avg,  CurveVariant::phase_to_ground_avg,
    CurveVariant::phase_to_neutral_avg, CurveVariant::phase_to_ground};

inline const char* to_string(Topology t) { return t == Topology::four_leg ? "four_leg" : "three_leg"; }
inline const char* to_string(InverterMode m) { return m == InverterMode::gfl ? "gfl" : "gfm"; }
inline const char* to_string(CurveVariant v) {
  switch (v) {
    case CurveVariant::phase_to_neutral: return "phase_to_neutral";
    case CurveVariant::phase_to_phase: return "phase_to_phase";
    case CurveVariant::phase_to_phase_avg: return "phase_to_phase_avg";
    case CurveVariant::phase_to_ground_avg: return "phase_to_ground_avg";
    case CurveVariant::phase_to_neutral_avg: return "phase_to_neutral_avg";
    case CurveVariant::phase_to_ground: return "phase_to_ground";
  }
  return "?";
}
inline bool is_averaged(CurveVariant v) {
  return v == CurveVariant::phase_to_phase_avg || v == CurveVariant::phase_to_ground_avg ||
         v == CurveVariant::phase_to_neutral_avg;
}

/// Droop coefficients and setpoints. Setpoints are per phase; the case file
/// may give a single value that is shared by all phases.
struct DroopParams {
  double dp = 0.0;  // V/W
  double dq = 0.0;  // V/var
  double u_set = 1.0;                // pu
  std::array<double, 3> p_set{};     // kW per phase, same sign convention as P_g
  std::array<double, 3> q_set{};     // kvar per phase
  bool operator==(const DroopParams&) const = default;
};

namespace law {

struct Droop {
  bool operator==(const Droop&) const = default;
};
struct VoltVar {
  CurveVariant variant = CurveVariant::phase_to_neutral;
  std::vector<CurvePoint> curve = default_volt_var_points();
  double smoothing = PwlCurve::kDefaultSmoothing;
  bool operator==(const VoltVar& o) const {
    return variant == o.variant && smoothing == o.smoothing && same_points(curve, o.curve);
  }
  static bool same_points(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](auto& x, auto& y) { return x.v == y.v && x.y == y.y; });
  }
};
struct VoltWatt {
  CurveVariant variant = CurveVariant::phase_to_neutral;
  std::vector<CurvePoint> curve = default_volt_watt_points();
  double smoothing = PwlCurve::kDefaultSmoothing;
  bool operator==(const VoltWatt& o) const {
    return variant == o.variant && smoothing == o.smoothing && VoltVar::same_points(curve, o.curve);
  }
};
struct PowerSharing {
  bool operator==(const PowerSharing&) const = default;
};
struct ConstPf {
  double pf = 1.0;
  bool operator==(const ConstPf&) const = default;
};
/// Caps on |I0|, |I1|, |I2| of the grid-side phase currents, in A.
struct SeqLimit {
  std::array<double, 3> caps{};
  bool operator==(const SeqLimit&) const = default;
};
/// Equal per-phase (wye) active power output. Used to pose square
/// power-flow problems together with a reactive control law.
struct EqualActivePower {
  bool operator==(const EqualActivePower&) const = default;
};
/// Three-wire converter model with per-conductor ratings, an operational
/// status and an aggregate power balance with copper losses.
struct LegacyConverter {
  std::array<double, 3> s_rating{};  // kVA per conductor
  std::array<double, 3> i_rating{};  // A per conductor
  int status = 1;                    // 0 or 1
  std::array<Complex, 3> z{};        // ohm per conductor
  Complex s_ext{};                   // kVA
  std::optional<double> q_int;       // kvar; free when absent
  bool operator==(const LegacyConverter&) const = default;
};

}  // namespace law

using ControlLaw = std::variant<law::Droop, law::VoltVar, law::VoltWatt, law::PowerSharing, law::ConstPf,
                                law::SeqLimit, law::EqualActivePower, law::LegacyConverter>;

inline const char* law_name(const ControlLaw& l) {
  static constexpr const char* names[] = {"droop",    "volt_var",  "volt_watt",          "power_sharing",
                                          "const_pf", "seq_limit", "equal_active_power", "legacy_converter"};
  return names[l.index()];
}

enum class GfmVoltageMode { setpoint, equal, droop };
inline const char* to_string(GfmVoltageMode m) {
  return m == GfmVoltageMode::setpoint ? "setpoint" : (m == GfmVoltageMode::equal ? "equal" : "droop");
}

/// How the balanced internal source of a grid-forming inverter is written.
enum class GfmFormulation { magnitude_angle, positive_sequence };

struct Bus {
  std::string id;
  std::vector<Conductor> nodes{Conductor::a, Conductor::b, Conductor::c, Conductor::n};
  double vnom = 230.0;                 // V, phase-to-neutral
  std::optional<double> grounding;     // ohm on node n; 0 means solidly grounded
  double vmin = 0.9, vmax = 1.1;       // pu, per-phase and positive-sequence band
  double u2_max = 0.02;                // pu, negative-sequence cap
  bool operator==(const Bus&) const = default;

  bool has_neutral() const { return std::find(nodes.begin(), nodes.end(), Conductor::n) != nodes.end(); }
  std::size_t conductor_count() const { return nodes.size(); }
};

using ComplexMatrix = std::vector<std::vector<Complex>>;

struct Line {
  std::string id;
  std::string from_bus, to_bus;
  ComplexMatrix z;      // ohm per unit length, conductor order of the buses
  double length = 1.0;  // multiplies z
  bool operator==(const Line&) const = default;
};

struct Load {
  std::string id;
  std::string bus;
  std::string connection = "wye";
  std::array<double, 3> p{};  // kW
  std::array<double, 3> q{};  // kvar
  bool operator==(const Load&) const = default;
};

struct VoltageSource {
  std::string id;
  std::string bus;
  double vm = 1.0;                               // pu
  std::array<double, 3> va{0.0, -120.0, 120.0};  // deg
  double cost = 0.0;                             // $/kWh
  bool operator==(const VoltageSource&) const = default;
};

struct InverterSpec {
  std::string id;
  std::string bus;
  Topology topology = Topology::four_leg;
  InverterMode mode = InverterMode::gfl;
  double s_rating = 0.0;              // kVA, three-phase total
  std::vector<double> i_rating;       // A per conductor (3 or 4)
  std::vector<double> r_filter;       // ohm per conductor
  std::vector<double> x_filter;       // ohm per conductor
  std::vector<double> b_shunt;        // S per conductor
  double prime_p_min = 0.0, prime_p_max = 0.0;    // kW
  double q_slack_min = -1e3, q_slack_max = 1e3;   // kvar
  std::vector<ControlLaw> control_laws;
  std::optional<DroopParams> droop;
  std::optional<double> pf;
  GfmVoltageMode gfm_voltage_mode = GfmVoltageMode::equal;
  double gfm_voltage_setpoint = 1.0;  // pu, used in setpoint mode
  GfmFormulation gfm_formulation = GfmFormulation::magnitude_angle;
  std::optional<std::array<double, 3>> seq_current_caps;  // A
  bool operator==(const InverterSpec&) const = default;

  std::size_t conductor_count() const { return topology == Topology::four_leg ? 4 : 3; }
  bool has_law(std::size_t index) const {
    return std::any_of(control_laws.begin(), control_laws.end(), [&](auto& l) { return l.index() == index; });
  }
};

struct Network {
  double sbase = 10.0;       // kVA
  double frequency = 50.0;   // Hz
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Load> loads;
  std::vector<VoltageSource> sources;
  std::vector<InverterSpec> inverters;
  bool per_unit = false;
  std::vector<std::string> defaults_applied;

  bool operator==(const Network& o) const {
    return sbase == o.sbase && frequency == o.frequency && buses == o.buses && lines == o.lines &&
           loads == o.loads && sources == o.sources && inverters == o.inverters && per_unit == o.per_unit;
  }

  const Bus& bus(const std::string& id) const {
    for (const auto& b : buses)
      if (b.id == id) return b;
    throw std::out_of_range("unknown bus " + id);
  }
  std::size_t bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return i;
    throw std::out_of_range("unknown bus " + id);
  }
  InverterSpec& inverter(const std::string& id) {
    for (auto& g : inverters)
      if (g.id == id) return g;
    throw std::out_of_range("unknown inverter " + id);
  }
};

enum class CaseErrorKind { schema, dangling_reference, disconnected, duplicate_id, invalid_value, control_law };

inline const char* to_string(CaseErrorKind k) {
  switch (k) {
    case CaseErrorKind::schema: return "schema";
    case CaseErrorKind::dangling_reference: return "dangling_reference";
    case CaseErrorKind::disconnected: return "disconnected";
    case CaseErrorKind::duplicate_id: return "duplicate_id";
    case CaseErrorKind::invalid_value: return "invalid_value";
    case CaseErrorKind::control_law: return "control_law";
  }
  return "?";
}

/// A case that failed to parse or validate; location is a JSON pointer.
class CaseError : public std::runtime_error {
 public:
  CaseError(CaseErrorKind kind, std::string location, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " at " + location + ": " + message),
        kind_(kind),
        location_(std::move(location)) {}
  CaseErrorKind kind() const noexcept { return kind_; }
  const std::string& location() const noexcept { return location_; }

 private:
  CaseErrorKind kind_;
  std::string location_;
};

/// Topology/mode/law combinations accepted for a Volt-var or Volt-Watt law.
inline bool curve_variant_allowed(Topology t, InverterMode m, CurveVariant v) {
  if (m == InverterMode::gfm) return false;
  if (t == Topology::three_leg)
    return v == CurveVariant::phase_to_neutral || v == CurveVariant::phase_to_phase ||
           v == CurveVariant::phase_to_phase_avg || v == CurveVariant::phase_to_ground_avg;
  return true;  // four-leg GFL: every variant (phase_to_neutral_avg see README)
}

/// Returns the violations (empty when the inverter's law set is admissible).
inline std::vector<std::string> validate_control_laws(const InverterSpec& inv) {
  std::vector<std::string> out;
  const bool gfl = inv.mode == InverterMode::gfl;
  const bool four = inv.topology == Topology::four_leg;
  const std::string where = std::string(to_string(inv.mode)) + " " + to_string(inv.topology);
  const bool legacy = inv.has_law(7);
  for (const auto& l : inv.control_laws) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, law::Droop>) {
            if (gfl) out.push_back("droop is only available to grid-forming inverters (" + where + ")");
            if (!inv.droop) out.push_back("droop law without droop parameters");
          } else if constexpr (std::is_same_v<T, law::VoltVar> || std::is_same_v<T, law::VoltWatt>) {
            if (!curve_variant_allowed(inv.topology, inv.mode, x.variant))
              out.push_back(std::string(law_name(l)) + " " + to_string(x.variant) + " is not available to " + where);
            if (x.curve.empty()) out.push_back(std::string(law_name(l)) + " with an empty curve");
          } else if constexpr (std::is_same_v<T, law::ConstPf>) {
            if (!gfl) out.push_back("constant power factor is not available to " + where);
            if (!(x.pf > 0.0 && x.pf <= 1.0)) out.push_back("power factor outside (0, 1]");
          } else if constexpr (std::is_same_v<T, law::PowerSharing>) {
            if (!four) out.push_back("power sharing requires a four-leg inverter");
          } else if constexpr (std::is_same_v<T, law::EqualActivePower>) {
            if (!four || !gfl) out.push_back("equal active power requires a four-leg grid-following inverter");
          } else if constexpr (std::is_same_v<T, law::SeqLimit>) {
            for (double c : x.caps)
              if (c < 0.0) out.push_back("negative sequence-current cap");
          } else if constexpr (std::is_same_v<T, law::LegacyConverter>) {
            if (four || !gfl) out.push_back("legacy converter model is three-wire grid-following only");
            if (x.status != 0 && x.status != 1) out.push_back("legacy converter status must be 0 or 1");
          }
        },
        l);
  }
  if (legacy && inv.control_laws.size() > 1)
    out.push_back("legacy converter model cannot be combined with other control laws");
  if (!gfl && inv.gfm_voltage_mode == GfmVoltageMode::droop && !inv.droop)
    out.push_back("gfm droop voltage mode without droop parameters");
  if (!gfl && inv.gfm_voltage_mode == GfmVoltageMode::droop && inv.gfm_formulation == GfmFormulation::positive_sequence)
    out.push_back("gfm droop voltage mode needs the magnitude_angle formulation");
  std::map<std::size_t, int> count;
  for (const auto& l : inv.control_laws) ++count[l.index()];
  for (auto [idx, c] : count)
    if (c > 1 && idx != 1 && idx != 2) out.push_back(std::string("duplicate control law"));
  return out;
}

namespace detail {

inline void require(bool ok, CaseErrorKind kind, const std::string& where, const std::string& msg) {
  if (!ok) throw CaseError(kind, where, msg);
}

}  // namespace detail

/// Structural validation; throws CaseError on the first problem found.
inline void validate(const Network& net) {
  using detail::require;
  require(net.sbase > 0.0, CaseErrorKind::invalid_value, "/sbase", "sbase must be positive");
  std::set<std::string> ids;
  auto unique = [&](const std::string& kind, const std::string& id, const std::string& where) {
    require(!id.empty(), CaseErrorKind::schema, where, "missing id");
    require(ids.insert(kind + ":" + id).second, CaseErrorKind::duplicate_id, where, "duplicate " + kind + " id " + id);
  };
  std::map<std::string, std::size_t> bus_of;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    const std::string w = "/buses/" + std::to_string(i);
    unique("bus", b.id, w);
    bus_of[b.id] = i;
    require(b.vnom > 0.0, CaseErrorKind::invalid_value, w + "/vnom", "vnom must be positive");
    require(b.vmin <= b.vmax, CaseErrorKind::invalid_value, w + "/vmin", "vmin exceeds vmax");
    require(b.u2_max >= 0.0, CaseErrorKind::invalid_value, w + "/u2_max", "negative cap");
    std::set<Conductor> seen(b.nodes.begin(), b.nodes.end());
    require(seen.size() == b.nodes.size(), CaseErrorKind::invalid_value, w + "/nodes", "node listed twice");
    for (auto p : kPhases)
      require(seen.count(p) == 1, CaseErrorKind::invalid_value, w + "/nodes", "phases a, b and c are required");
    if (b.grounding)
      require(*b.grounding >= 0.0 && b.has_neutral(), CaseErrorKind::invalid_value, w + "/grounding",
              "grounding needs a neutral node and a non-negative impedance");
  }
  auto ref = [&](const std::string& bus, const std::string& where) {
    require(bus_of.count(bus) == 1, CaseErrorKind::dangling_reference, where, "unknown bus " + bus);
    return bus_of[bus];
  };
  std::vector<std::vector<std::size_t>> adj(net.buses.size());
  for (std::size_t i = 0; i < net.lines.size(); ++i) {
    const auto& l = net.lines[i];
    const std::string w = "/lines/" + std::to_string(i);
    unique("line", l.id, w);
    const auto f = ref(l.from_bus, w + "/from_bus");
    const auto t = ref(l.to_bus, w + "/to_bus");
    require(f != t, CaseErrorKind::invalid_value, w, "line connects a bus to itself");
    const auto nc = net.buses[f].conductor_count();
    require(net.buses[t].nodes == net.buses[f].nodes, CaseErrorKind::invalid_value, w,
            "line ends have different conductor sets");
    require(l.z.size() == nc, CaseErrorKind::invalid_value, w + "/z", "impedance matrix size must match conductors");
    for (std::size_t r = 0; r < nc; ++r) {
      require(l.z[r].size() == nc, CaseErrorKind::invalid_value, w + "/z", "impedance matrix must be square");
      require(l.z[r][r].real() >= 0.0, CaseErrorKind::invalid_value, w + "/z", "negative self resistance");
      for (std::size_t c = 0; c < r; ++c)
        require(l.z[r][c] == l.z[c][r], CaseErrorKind::invalid_value, w + "/z", "impedance matrix must be symmetric");
    }
    require(l.length > 0.0, CaseErrorKind::invalid_value, w + "/length", "length must be positive");
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  for (std::size_t i = 0; i < net.loads.size(); ++i) {
    const auto& d = net.loads[i];
    const std::string w = "/loads/" + std::to_string(i);
    unique("load", d.id, w);
    ref(d.bus, w + "/bus");
    require(d.connection == "wye", CaseErrorKind::invalid_value, w + "/connection", "only wye loads are supported");
  }
  require(!net.sources.empty(), CaseErrorKind::schema, "/sources", "at least one voltage source is required");
  for (std::size_t i = 0; i < net.sources.size(); ++i) {
    const auto& s = net.sources[i];
    const std::string w = "/sources/" + std::to_string(i);
    unique("source", s.id, w);
    ref(s.bus, w + "/bus");
    require(s.vm > 0.0, CaseErrorKind::invalid_value, w + "/vm", "vm must be positive");
  }
  for (std::size_t i = 0; i < net.inverters.size(); ++i) {
    const auto& g = net.inverters[i];
    const std::string w = "/inverters/" + std::to_string(i);
    unique("inverter", g.id, w);
    const auto bi = ref(g.bus, w + "/bus");
    const auto nc = g.conductor_count();
    require(g.topology == Topology::three_leg || net.buses[bi].has_neutral(), CaseErrorKind::invalid_value, w,
            "four-leg inverter on a bus without neutral");
    require(g.s_rating > 0.0, CaseErrorKind::invalid_value, w + "/s_rating", "s_rating must be positive");
    require(g.i_rating.size() == nc, CaseErrorKind::invalid_value, w + "/i_rating",
            "expected " + std::to_string(nc) + " conductor ratings");
    for (double r : g.i_rating) require(r > 0.0, CaseErrorKind::invalid_value, w + "/i_rating", "ratings must be positive");
    for (auto* v : {&g.r_filter, &g.x_filter, &g.b_shunt})
      require(v->size() == nc, CaseErrorKind::invalid_value, w, "filter data must have one entry per conductor");
    for (double r : g.r_filter) require(r >= 0.0, CaseErrorKind::invalid_value, w + "/r_filter", "negative resistance");
    require(g.prime_p_min <= g.prime_p_max, CaseErrorKind::invalid_value, w + "/prime_p_min", "empty prime interval");
    require(g.q_slack_min <= g.q_slack_max, CaseErrorKind::invalid_value, w + "/q_slack_min", "empty slack interval");
    const auto v = validate_control_laws(g);
    require(v.empty(), CaseErrorKind::control_law, w + "/control_laws", v.empty() ? "" : v.front());
  }
  // connectivity from the first bus
  if (!net.buses.empty()) {
    std::vector<char> seen(net.buses.size(), 0);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const auto b = q.front();
      q.pop();
      for (auto nb : adj[b])
        if (!seen[nb]) seen[nb] = 1, q.push(nb);
    }
    for (std::size_t i = 0; i < net.buses.size(); ++i)
      require(seen[i], CaseErrorKind::disconnected, "/buses/" + std::to_string(i),
              "bus " + net.buses[i].id + " is not connected to " + net.buses[0].id);
  }
}

/// Base quantities of a bus: voltage (V), power (VA), current (A), impedance (ohm).
struct Bases {
  double v, s, i, z;
  static Bases of(double vnom, double sbase_kva) {
    const double s = sbase_kva * 1000.0;
    return {vnom, s, s / vnom, vnom * vnom / s};
  }
};

namespace detail {

inline Network rescale(const Network& net, bool to_pu) {
  if (net.per_unit == to_pu) return net;
  if (!(net.sbase > 0.0)) throw std::invalid_argument("per_unit: sbase must be positive");
  for (const auto& b : net.buses)
    if (!(b.vnom > 0.0)) throw std::invalid_argument("per_unit: vnom must be positive at bus " + b.id);
  Network out = net;
  out.per_unit = to_pu;
  // x_pu = x / base; factor applied is 1/base going to pu and base going back
  auto f = [&](double base) { return to_pu ? 1.0 / base : base; };
  const double kva = f(net.sbase);  // kW, kvar, kVA
  for (auto& l : out.lines) {
    const Bases b = Bases::of(net.bus(l.from_bus).vnom, net.sbase);
    for (auto& row : l.z)
      for (auto& e : row) e *= f(b.z);
  }
  for (auto& b : out.buses)
    if (b.grounding) *b.grounding *= f(Bases::of(b.vnom, net.sbase).z);
  for (auto& d : out.loads) {
    for (auto& x : d.p) x *= kva;
    for (auto& x : d.q) x *= kva;
  }
  for (auto& s : out.sources) s.cost /= kva;  // $/kWh -> $ per pu-hour and back
  for (auto& g : out.inverters) {
    const Bases b = Bases::of(net.bus(g.bus).vnom, net.sbase);
    g.s_rating *= kva;
    for (auto& x : g.i_rating) x *= f(b.i);
    for (auto& x : g.r_filter) x *= f(b.z);
    for (auto& x : g.x_filter) x *= f(b.z);
    for (auto& x : g.b_shunt) x /= f(b.z);
    g.prime_p_min *= kva;
    g.prime_p_max *= kva;
    g.q_slack_min *= kva;
    g.q_slack_max *= kva;
    // droop V/W -> pu/pu: dV_pu = D * S_base / V_base * dP_pu
    const double droop_f = to_pu ? b.s / b.v : b.v / b.s;
    if (g.droop) {
      g.droop->dp *= droop_f;
      g.droop->dq *= droop_f;
      for (auto& x : g.droop->p_set) x *= kva;
      for (auto& x : g.droop->q_set) x *= kva;
    }
    if (g.seq_current_caps)
      for (auto& x : *g.seq_current_caps) x *= f(b.i);
    for (auto& l : g.control_laws) {
      if (auto* s = std::get_if<law::SeqLimit>(&l))
        for (auto& x : s->caps) x *= f(b.i);
      if (auto* c = std::get_if<law::LegacyConverter>(&l)) {
        for (auto& x : c->s_rating) x *= kva;
        for (auto& x : c->i_rating) x *= f(b.i);
        for (auto& x : c->z) x *= f(b.z);
        c->s_ext *= kva;
        if (c->q_int) *c->q_int *= kva;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Express every quantity on the common bases (vnom per bus, sbase).
inline Network per_unit(const Network& net) { return detail::rescale(net, true); }
/// Inverse of per_unit.
inline Network physical_units(const Network& net) { return detail::rescale(net, false); }

}  // namespace fourwire
