#pragma once

// Result documents ("fourwire-result/1"): voltages in pu and degrees,
// powers in kW/kvar, currents in A. Device currents and powers are reported
// as injections into the bus; loads as draws.

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "fourwire/network.hpp"
#include "fourwire/solve_types.hpp"

namespace fourwire {

inline constexpr const char* kResultSchema = "fourwire-result/1";

using ojson = nlohmann::ordered_json;

namespace detail {

class Extract {
 public:
  Extract(Assembled& a, const std::vector<double>& x) : a_(a), x_(x) {}

  Complex operator()(const nlp::CExpr& e) const {
    return {a_.problem.value(e.re, x_), a_.problem.value(e.im, x_)};
  }
  Complex operator()(const nlp::CVar& v) const { return {x_[v.re.index], x_[v.im.index]}; }
  Complex operator()(const std::optional<nlp::CVar>& v) const { return v ? (*this)(*v) : Complex{}; }
  double operator()(const std::optional<nlp::VarRef>& v) const { return v ? x_[v->index] : 0.0; }

 private:
  Assembled& a_;
  const std::vector<double>& x_;
};

// 12 significant digits.
inline double tidy(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v == 0.0 ? 0.0 : v;
  const double e = std::floor(std::log10(std::abs(v)));
  const double f = std::pow(10.0, 11.0 - e);
  const double r = std::round(v * f) / f;
  return r == 0.0 ? 0.0 : r;
}

inline ojson polar_json(Complex z) {
  return ojson{{"mag", tidy(std::abs(z))}, {"deg", tidy(std::abs(z) == 0.0 ? 0.0 : angle_deg(z))}};
}

inline ojson current_json(Complex z) {
  return ojson{{"re", tidy(z.real())}, {"im", tidy(z.imag())}, {"mag", tidy(std::abs(z))},
               {"deg", tidy(std::abs(z) == 0.0 ? 0.0 : angle_deg(z))}};
}

inline ojson power_json(Complex s) { return ojson{{"p_kw", tidy(s.real())}, {"q_kvar", tidy(s.imag())}}; }

inline ojson sequence_json(const PhaseVector& v) {
  const SequenceVector s = to_sequence(v);
  return ojson{{"zero", tidy(std::abs(s.zero))}, {"positive", tidy(std::abs(s.positive))},
               {"negative", tidy(std::abs(s.negative))}};
}

inline ojson metric_json(const MetricValue& m) { return m.value ? ojson(tidy(*m.value)) : ojson(nullptr); }

template <class F>
inline ojson per_conductor(std::size_t n, F f) {
  ojson o = ojson::object();
  for (std::size_t k = 0; k < n; ++k) o[conductor_name(static_cast<Conductor>(k))] = f(k);
  return o;
}

}  // namespace detail

struct RunInfo {
  std::string name;
  std::string method;  // "newton" or "ipm"
  double tol = 1e-8;
};

/// Builds the result document for a solve of a.
inline ojson make_result(Assembled& a, const SolveResult& r, const RunInfo& info) {
  using namespace detail;
  const Network& net = a.net;
  const Extract at(a, r.x);
  nlp::Problem& p = a.problem;
  const double sb = net.sbase;
  auto ibase = [&](const std::string& bus) { return Bases::of(net.bus(bus).vnom, sb).i; };

  ojson doc;
  doc["schema"] = kResultSchema;
  doc["name"] = info.name;
  doc["objective"] = to_string(a.objective);

  const Verification v = verify(p, r.x);
  ojson solver;
  solver["method"] = info.method;
  solver["status"] = to_string(r.status);
  solver["message"] = r.message;
  solver["iterations"] = r.iterations;
  solver["tol"] = info.tol;
  solver["max_eq_residual"] = v.max_eq_residual;
  solver["max_ineq_violation"] = v.max_ineq_violation;
  solver["variables"] = p.num_variables();
  solver["equalities"] = p.num_equalities();
  solver["inequalities"] = p.num_inequalities();
  ojson blocks = ojson::array();
  for (const auto& b : a.blocks)
    blocks.push_back({{"name", b.name}, {"variables", b.variables}, {"equalities", b.equalities},
                      {"inequalities", b.inequalities}});
  solver["blocks"] = blocks;
  doc["solver"] = solver;

  ojson obj;
  obj["value"] = tidy(v.objective);
  switch (a.objective) {
    case Objective::none: obj["unit"] = "none"; break;
    case Objective::loss: obj["value"] = tidy(v.objective * sb), obj["unit"] = "kW"; break;
    case Objective::cost: obj["unit"] = "$/h"; break;
    case Objective::negseq: obj["unit"] = "pu"; break;
  }
  doc["objective_value"] = obj;

  // buses
  ojson buses = ojson::array();
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    std::array<Complex, 4> u{};
    for (std::size_t k = 0; k < 4; ++k) u[k] = at(a.buses[i].u[k]);
    const bool n = b.has_neutral();
    const PhaseVector wye = n ? PhaseVector{u[0] - u[3], u[1] - u[3], u[2] - u[3]}
                              : PhaseVector{(u[0] - u[1]) / std::sqrt(3.0), (u[1] - u[2]) / std::sqrt(3.0),
                                            (u[2] - u[0]) / std::sqrt(3.0)};
    ojson bj;
    bj["id"] = b.id;
    bj["u"] = per_conductor(n ? 4 : 3, [&](std::size_t k) { return polar_json(u[k]); });
    bj["u_wye"] = ojson{{"a", polar_json(wye.a)}, {"b", polar_json(wye.b)}, {"c", polar_json(wye.c)}};
    bj["u_seq"] = sequence_json(wye);
    try {
      bj["vuf"] = tidy(vuf(wye));
    } catch (const DegenerateRatio&) {
      bj["vuf"] = nullptr;
    }
    buses.push_back(bj);
  }
  doc["buses"] = buses;

  // lines
  ojson lines = ojson::array();
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& line = net.lines[l];
    const auto& nodes = net.bus(line.from_bus).nodes;
    const double ib = ibase(line.from_bus);
    const auto f = net.bus_index(line.from_bus), t = net.bus_index(line.to_bus);
    std::array<Complex, 4> cur{};
    double loss = 0.0;
    ojson cj = ojson::object();
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      const std::size_t k = slot(nodes[r]);
      const Complex i = at(a.lines[l].i[r]);
      cur[k] = i;
      loss += ((at(a.buses[f].u[k]) - at(a.buses[t].u[k])) * std::conj(i)).real();
      cj[conductor_name(nodes[r])] = current_json(i * ib);
    }
    ojson lj;
    lj["id"] = line.id;
    lj["from_bus"] = line.from_bus;
    lj["to_bus"] = line.to_bus;
    lj["i"] = cj;
    lj["i_seq"] = sequence_json(PhaseVector{cur[0] * ib, cur[1] * ib, cur[2] * ib});
    lj["loss_kw"] = tidy(loss * sb);
    lines.push_back(lj);
  }
  doc["lines"] = lines;

  // sources
  ojson sources = ojson::array();
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    if (!a.buses[i].source) continue;
    const auto& src = net.sources[*a.buses[i].source];
    const auto is = source_current(a, i);
    const double ib = ibase(src.bus);
    std::array<Complex, 4> c{};
    for (std::size_t k = 0; k < 4; ++k) c[k] = at(is[k]);
    Complex total{};
    ojson sj;
    sj["id"] = src.id;
    sj["bus"] = src.bus;
    sj["i"] = per_conductor(net.buses[i].has_neutral() ? 4 : 3, [&](std::size_t k) { return current_json(c[k] * ib); });
    sj["s"] = per_conductor(3, [&](std::size_t k) {
      const Complex s = at(a.buses[i].u[k]) * std::conj(c[k]) * sb;
      total += s;
      return power_json(s);
    });
    sj["s_total"] = power_json(total);
    sj["i_seq"] = sequence_json(PhaseVector{c[0] * ib, c[1] * ib, c[2] * ib});
    sources.push_back(sj);
  }
  doc["sources"] = sources;

  // loads
  ojson loads = ojson::array();
  for (std::size_t d = 0; d < net.loads.size(); ++d) {
    const auto& ld = net.loads[d];
    const double ib = ibase(ld.bus);
    std::array<Complex, 4> c{};
    for (std::size_t k = 0; k < 3; ++k) c[k] = at(a.loads[d].i[k]);
    c[3] = -(c[0] + c[1] + c[2]);
    ojson dj;
    dj["id"] = ld.id;
    dj["bus"] = ld.bus;
    dj["i"] = per_conductor(4, [&](std::size_t k) { return current_json(c[k] * ib); });
    dj["s"] = per_conductor(3, [&](std::size_t k) { return power_json(Complex{ld.p[k], ld.q[k]} * sb); });
    loads.push_back(dj);
  }
  doc["loads"] = loads;

  // inverters
  ojson invs = ojson::array();
  for (std::size_t g = 0; g < net.inverters.size(); ++g) {
    const auto& spec = net.inverters[g];
    auto& iv = a.inverters[g].vars;
    const double ib = ibase(spec.bus);
    const std::size_t nc = spec.conductor_count();
    std::array<Complex, 4> ig{};
    for (std::size_t k = 0; k < 4; ++k) ig[k] = -at(grid_current(p, iv, k));
    ojson gj;
    gj["id"] = spec.id;
    gj["bus"] = spec.bus;
    gj["topology"] = to_string(spec.topology);
    gj["mode"] = to_string(spec.mode);
    gj["i_g"] = per_conductor(nc, [&](std::size_t k) { return current_json(ig[k] * ib); });
    gj["i_g_seq"] = sequence_json(PhaseVector{ig[0] * ib, ig[1] * ib, ig[2] * ib});
    Complex total{};
    std::array<double, 3> pw{}, qw{};
    gj["s_g"] = per_conductor(3, [&](std::size_t k) {
      const Complex s = -at(s_wye(p, iv, k)) * sb;
      total += s;
      pw[k] = s.real();
      qw[k] = s.imag();
      return power_json(s);
    });
    gj["s_g_total"] = power_json(total);
    gj["s_g_ground"] = per_conductor(3, [&](std::size_t k) { return power_json(-at(s_ext(p, iv, k)) * sb); });
    if (!iv.legacy) {
      gj["u_int"] = per_conductor(nc, [&](std::size_t k) { return polar_json(at(iv.u_int[k])); });
      gj["u_int_wye"] = per_conductor(3, [&](std::size_t k) { return polar_json(at(u_int_wye(p, iv, k))); });
      gj["s_int"] = per_conductor(nc, [&](std::size_t k) { return power_json(at(s_int(p, iv, k)) * sb); });
      gj["p_prime_kw"] = tidy(at(iv.p_prime) * sb);
      gj["q_slack_kvar"] = tidy(at(iv.q_slack) * sb);
    } else {
      gj["p_stor_kw"] = tidy(at(iv.p_prime) * sb);
      gj["q_int_kvar"] = tidy(at(iv.q_slack) * sb);
    }
    const UnbalanceMetrics m = unbalance_metrics(PhaseVector{ig[0], ig[1], ig[2]}, pw, qw);
    gj["metrics"] = ojson{{"iuf", metric_json(m.iuf)}, {"iuf2_a", tidy(m.iuf2 * ib)},
                          {"piur", metric_json(m.piur)}, {"ppur", metric_json(m.ppur)},
                          {"pqur", metric_json(m.pqur)}};
    invs.push_back(gj);
  }
  doc["inverters"] = invs;

  // current balance at every bus with devices: grid + inverter = load + ground
  ojson pcc = ojson::array();
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    if (a.buses[i].source) continue;
    std::array<Complex, 4> grid{}, inv{}, load{}, ground{};
    bool devices = false;
    for (std::size_t l = 0; l < net.lines.size(); ++l) {
      const auto& line = net.lines[l];
      const auto& nodes = net.bus(line.from_bus).nodes;
      for (std::size_t r = 0; r < nodes.size(); ++r) {
        const Complex c = at(a.lines[l].i[r]);
        if (line.to_bus == b.id) grid[slot(nodes[r])] += c;
        if (line.from_bus == b.id) grid[slot(nodes[r])] -= c;
      }
    }
    for (std::size_t d = 0; d < net.loads.size(); ++d) {
      if (net.loads[d].bus != b.id) continue;
      devices = true;
      for (std::size_t k = 0; k < 3; ++k) {
        const Complex c = at(a.loads[d].i[k]);
        load[k] += c;
        load[3] -= c;
      }
    }
    for (std::size_t g = 0; g < net.inverters.size(); ++g) {
      if (net.inverters[g].bus != b.id) continue;
      devices = true;
      for (std::size_t k = 0; k < 4; ++k) inv[k] -= at(grid_current(p, a.inverters[g].vars, k));
    }
    if (!devices) continue;
    if (b.has_neutral() && b.grounding) {
      ground[3] = *b.grounding > 0.0 ? at(a.buses[i].u[3]) / *b.grounding : grid[3] + inv[3] - load[3];
    }
    const double ib = ibase(b.id);
    const std::size_t nc = b.has_neutral() ? 4 : 3;
    ojson bj;
    bj["bus"] = b.id;
    bj["grid"] = per_conductor(nc, [&](std::size_t k) { return current_json(grid[k] * ib); });
    bj["inverter"] = per_conductor(nc, [&](std::size_t k) { return current_json(inv[k] * ib); });
    bj["load"] = per_conductor(nc, [&](std::size_t k) { return current_json(load[k] * ib); });
    if (b.grounding) bj["ground"] = per_conductor(nc, [&](std::size_t k) { return current_json(ground[k] * ib); });
    pcc.push_back(bj);
  }
  doc["current_balance"] = pcc;
  return doc;
}

}  // namespace fourwire
