#pragma once

// Network physics around the inverter blocks: multiconductor lines, nodal
// current balance, wye loads with neutral return, slack sources, the OPF
// voltage limits and the objectives.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fourwire/inverter.hpp"
#include "fourwire/solve_types.hpp"

namespace fourwire {

enum class Objective { none, loss, negseq, cost };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::none: return "none";
    case Objective::loss: return "loss";
    case Objective::negseq: return "negseq";
    case Objective::cost: return "cost";
  }
  return "?";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "none" || s == "pf") return Objective::none;
  if (s == "loss") return Objective::loss;
  if (s == "negseq") return Objective::negseq;
  if (s == "cost") return Objective::cost;
  throw std::invalid_argument("unknown objective " + s);
}

struct AssembleOptions {
  Objective objective = Objective::none;
  /// Smoothing of the negative-sequence magnitude, m^2 = |I2|^2 + eta^2.
  double negseq_eta = 1e-5;
  /// Voltage band and sequence limits; defaults to on for every objective
  /// except none.
  std::optional<bool> voltage_limits;
};

struct BusVars {
  std::array<nlp::CExpr, 4> u;                  // node voltages a, b, c, n (pu)
  std::array<std::optional<nlp::CVar>, 4> var;  // empty where the voltage is a constant
  std::array<Complex, 4> init{};
  std::optional<std::size_t> source;            // index into Network::sources
};

struct LineVars {
  std::vector<nlp::CVar> i;  // from -> to, one per conductor of the from bus
};

struct LoadVars {
  std::array<nlp::CVar, 3> i;  // phase currents drawn; neutral returns the sum
};

/// A network turned into an NLP. The problem owns every expression held here.
struct Assembled {
  nlp::Problem problem;
  Network net;  // per unit
  Objective objective = Objective::none;
  std::vector<BusVars> buses;
  std::vector<LineVars> lines;
  std::vector<LoadVars> loads;
  std::vector<ComposedInverter> inverters;
  std::vector<BlockStats> blocks;
  std::vector<nlp::VarRef> negseq_aux;
};

namespace detail {

inline std::size_t slot(Conductor c) { return static_cast<std::size_t>(c); }

inline std::array<Complex, 4> flat_120(const Network& net, const Bus& b) {
  const VoltageSource* src = net.sources.empty() ? nullptr : &net.sources.front();
  for (const auto& s : net.sources)
    if (s.bus == b.id) src = &s;
  std::array<Complex, 4> u{};
  for (std::size_t k = 0; k < 3; ++k)
    u[k] = src ? polar_deg(src->vm, src->va[k]) : polar_deg(1.0, -120.0 * static_cast<double>(k));
  return u;
}

}  // namespace detail

/// Current injected by the source of a bus into the network, per conductor.
inline std::array<nlp::CExpr, 4> source_current(Assembled& a, std::size_t bus);

/// Assembles the physics of net (converted to per unit if needed) with every
/// inverter composed from its spec.
inline Assembled assemble_network(const Network& physical, const AssembleOptions& opts = {}) {
  validate(physical);
  Assembled a;
  a.net = per_unit(physical);
  a.objective = opts.objective;
  const Network& net = a.net;
  nlp::Problem& p = a.problem;
  const bool limits = opts.voltage_limits.value_or(opts.objective != Objective::none);

  // bus voltages
  detail::Census bus_census(p, "buses");
  a.buses.resize(net.buses.size());
  for (std::size_t s = 0; s < net.sources.size(); ++s) {
    auto& bv = a.buses[net.bus_index(net.sources[s].bus)];
    if (bv.source) throw CaseError(CaseErrorKind::invalid_value, "/sources/" + std::to_string(s), "second source on bus");
    bv.source = s;
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    auto& bv = a.buses[i];
    bv.init = detail::flat_120(net, b);
    const bool is_source = bv.source.has_value();
    // source neutrals are solidly grounded unless the case says otherwise
    const std::optional<double> grounding = (is_source && !b.grounding) ? std::optional<double>(0.0) : b.grounding;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto c = static_cast<Conductor>(k);
      const bool present = k < 3 || b.has_neutral();
      const bool grounded_n = c == Conductor::n && grounding && *grounding == 0.0;
      if (!present || grounded_n) {
        bv.u[k] = nlp::cconstant(p, 0.0);
        bv.init[k] = 0.0;
        continue;
      }
      const std::string name = "bus." + b.id + ".u." + conductor_name(c);
      if (is_source && k < 3) {
        const Complex v = bv.init[k];
        bv.var[k] = nlp::add_complex_variable(p, name, v, {v.real(), v.real()}, {v.imag(), v.imag()});
      } else {
        bv.var[k] = nlp::add_complex_variable(p, name, bv.init[k]);
      }
      bv.u[k] = nlp::cvar(p, *bv.var[k]);
    }
  }
  a.blocks.push_back(bus_census.done());

  // lines
  detail::Census line_census(p, "lines");
  for (const auto& l : net.lines) {
    const auto f = net.bus_index(l.from_bus), t = net.bus_index(l.to_bus);
    const Bus& fb = net.buses[f];
    LineVars lv;
    for (auto c : fb.nodes)
      lv.i.push_back(nlp::add_complex_variable(p, "line." + l.id + ".i." + conductor_name(c), 0.0));
    for (std::size_t r = 0; r < fb.nodes.size(); ++r) {
      const std::size_t k = detail::slot(fb.nodes[r]);
      nlp::CExpr e = a.buses[f].u[k] - a.buses[t].u[k];
      for (std::size_t c = 0; c < fb.nodes.size(); ++c) {
        const Complex z = l.z[r][c] * l.length;
        if (z != Complex{}) e = e - z * nlp::cvar(p, lv.i[c]);
      }
      nlp::add_complex_equality(p, e, "line." + l.id + ".ohm." + conductor_name(fb.nodes[r]));
    }
    a.lines.push_back(std::move(lv));
  }
  a.blocks.push_back(line_census.done());

  // loads: U^Y_p conj(I_p) = S_p
  detail::Census load_census(p, "loads");
  for (const auto& d : net.loads) {
    const auto bi = net.bus_index(d.bus);
    LoadVars lv;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::string c = conductor_name(static_cast<Conductor>(k));
      lv.i[k] = nlp::add_complex_variable(p, "load." + d.id + ".i." + c, 0.0);
      const nlp::CExpr uw = a.buses[bi].u[k] - a.buses[bi].u[3];
      nlp::add_complex_equality(p, nlp::mul_conj(uw, nlp::cvar(p, lv.i[k])) - Complex{d.p[k], d.q[k]},
                                "load." + d.id + ".s." + c);
    }
    a.loads.push_back(lv);
  }
  a.blocks.push_back(load_census.done());

  // inverters
  for (const auto& g : net.inverters) {
    const auto bi = net.bus_index(g.bus);
    a.inverters.push_back(compose(p, g, a.buses[bi].u, a.buses[bi].init));
    for (auto& b : a.inverters.back().blocks) {
      b.name = g.id + "." + b.name;
      a.blocks.push_back(b);
    }
  }

  // nodal current balance at every node whose voltage is a free variable
  detail::Census kcl_census(p, "kcl");
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    auto& bv = a.buses[i];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!bv.var[k] || (bv.source && k < 3)) continue;
      std::vector<nlp::CExpr> out;  // currents leaving the node
      for (std::size_t l = 0; l < net.lines.size(); ++l) {
        const auto& line = net.lines[l];
        const bool from = line.from_bus == b.id, to = line.to_bus == b.id;
        if (!from && !to) continue;
        const auto& nodes = net.bus(line.from_bus).nodes;
        for (std::size_t r = 0; r < nodes.size(); ++r)
          if (detail::slot(nodes[r]) == k) {
            const nlp::CExpr il = nlp::cvar(p, a.lines[l].i[r]);
            out.push_back(from ? il : -il);
          }
      }
      for (std::size_t d = 0; d < net.loads.size(); ++d) {
        if (net.loads[d].bus != b.id) continue;
        if (k < 3) {
          out.push_back(nlp::cvar(p, a.loads[d].i[k]));
        } else {
          for (const auto& ip : a.loads[d].i) out.push_back(-nlp::cvar(p, ip));
        }
      }
      for (std::size_t g = 0; g < net.inverters.size(); ++g)
        if (net.inverters[g].bus == b.id) out.push_back(grid_current(p, a.inverters[g].vars, k));
      if (k == 3 && b.grounding && *b.grounding > 0.0) out.push_back((1.0 / *b.grounding) * bv.u[3]);
      if (out.empty()) out.push_back(nlp::cconstant(p, 0.0));
      nlp::add_complex_equality(p, nlp::csum(out), "bus." + b.id + ".kcl." + conductor_name(static_cast<Conductor>(k)));
    }
  }
  a.blocks.push_back(kcl_census.done());

  // voltage band on phase-to-ground magnitudes, positive-sequence band and
  // negative-sequence cap on the wye voltages
  if (limits) {
    detail::Census lim_census(p, "voltage_limits");
    const Complex al = alpha(), al2 = alpha2();
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      const Bus& b = net.buses[i];
      const auto& bv = a.buses[i];
      if (bv.source) continue;
      const std::string g = "bus." + b.id;
      const double lo2 = b.vmin * b.vmin, hi2 = b.vmax * b.vmax;
      for (std::size_t k = 0; k < 3; ++k) {
        const nlp::Expr m2 = nlp::abs2(bv.u[k]);
        const std::string c = conductor_name(static_cast<Conductor>(k));
        p.add_inequality(m2 - hi2, g + ".vmax." + c);
        p.add_inequality(lo2 - m2, g + ".vmin." + c);
      }
      std::array<nlp::CExpr, 3> w;
      const double scale = b.has_neutral() ? 1.0 : 1.0 / std::sqrt(3.0);
      for (std::size_t k = 0; k < 3; ++k)
        w[k] = b.has_neutral() ? bv.u[k] - bv.u[3] : scale * (bv.u[k] - bv.u[(k + 1) % 3]);
      const nlp::CExpr u1 = (1.0 / 3.0) * (w[0] + al * w[1] + al2 * w[2]);
      const nlp::CExpr u2 = (1.0 / 3.0) * (w[0] + al2 * w[1] + al * w[2]);
      p.add_inequality(nlp::abs2(u1) - hi2, g + ".u1_max");
      p.add_inequality(lo2 - nlp::abs2(u1), g + ".u1_min");
      p.add_inequality(nlp::abs2(u2) - b.u2_max * b.u2_max, g + ".u2_max");
    }
    a.blocks.push_back(lim_census.done());
  }

  // objective
  detail::Census obj_census(p, std::string("objective.") + to_string(opts.objective));
  switch (opts.objective) {
    case Objective::none: break;
    case Objective::loss: {
      std::vector<nlp::Expr> terms;
      for (std::size_t l = 0; l < net.lines.size(); ++l) {
        const auto& line = net.lines[l];
        const auto f = net.bus_index(line.from_bus), t = net.bus_index(line.to_bus);
        const auto& nodes = net.buses[f].nodes;
        for (std::size_t r = 0; r < nodes.size(); ++r) {
          const std::size_t k = detail::slot(nodes[r]);
          terms.push_back(nlp::mul_conj(a.buses[f].u[k] - a.buses[t].u[k], nlp::cvar(p, a.lines[l].i[r])).re);
        }
      }
      p.set_objective(terms.empty() ? p.constant(0.0) : nlp::sum(terms));
      break;
    }
    case Objective::negseq: {
      std::vector<nlp::Expr> terms;
      const Complex al = alpha(), al2 = alpha2();
      for (std::size_t l = 0; l < net.lines.size(); ++l) {
        const auto& line = net.lines[l];
        const auto& nodes = net.bus(line.from_bus).nodes;
        std::array<nlp::CExpr, 3> ip;
        for (std::size_t r = 0; r < nodes.size(); ++r)
          if (detail::slot(nodes[r]) < 3) ip[detail::slot(nodes[r])] = nlp::cvar(p, a.lines[l].i[r]);
        const nlp::CExpr i2 = (1.0 / 3.0) * (ip[0] + al2 * ip[1] + al * ip[2]);
        const auto m = p.add_variable("line." + line.id + ".i2_mag", 2.0 * opts.negseq_eta, {opts.negseq_eta, nlp::kInf});
        a.negseq_aux.push_back(m);
        p.add_equality(nlp::square(p.var(m)) - nlp::abs2(i2) - opts.negseq_eta * opts.negseq_eta,
                       "line." + line.id + ".i2_mag");
        terms.push_back(p.var(m));
      }
      p.set_objective(terms.empty() ? p.constant(0.0) : nlp::sum(terms));
      break;
    }
    case Objective::cost: {
      std::vector<nlp::Expr> terms;
      for (std::size_t i = 0; i < net.buses.size(); ++i) {
        if (!a.buses[i].source) continue;
        const auto& src = net.sources[*a.buses[i].source];
        if (src.cost == 0.0) continue;
        const auto is = source_current(a, i);
        for (std::size_t k = 0; k < 3; ++k) terms.push_back(src.cost * nlp::mul_conj(a.buses[i].u[k], is[k]).re);
      }
      p.set_objective(terms.empty() ? p.constant(0.0) : nlp::sum(terms));
      break;
    }
  }
  a.blocks.push_back(obj_census.done());
  p.finalize();
  return a;
}

inline std::array<nlp::CExpr, 4> source_current(Assembled& a, std::size_t bus) {
  nlp::Problem& p = a.problem;
  const Network& net = a.net;
  const Bus& b = net.buses[bus];
  std::array<nlp::CExpr, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<nlp::CExpr> terms{nlp::cconstant(p, 0.0)};
    for (std::size_t l = 0; l < net.lines.size(); ++l) {
      const auto& line = net.lines[l];
      const bool from = line.from_bus == b.id, to = line.to_bus == b.id;
      if (!from && !to) continue;
      const auto& nodes = net.bus(line.from_bus).nodes;
      for (std::size_t r = 0; r < nodes.size(); ++r)
        if (detail::slot(nodes[r]) == k) {
          const nlp::CExpr il = nlp::cvar(p, a.lines[l].i[r]);
          terms.push_back(from ? il : -il);
        }
    }
    for (std::size_t d = 0; d < net.loads.size(); ++d) {
      if (net.loads[d].bus != b.id) continue;
      if (k < 3) {
        terms.push_back(nlp::cvar(p, a.loads[d].i[k]));
      } else {
        for (const auto& ip : a.loads[d].i) terms.push_back(-nlp::cvar(p, ip));
      }
    }
    for (std::size_t g = 0; g < net.inverters.size(); ++g)
      if (net.inverters[g].bus == b.id) terms.push_back(grid_current(p, a.inverters[g].vars, k));
    out[k] = nlp::csum(terms);
  }
  return out;
}

}  // namespace fourwire
