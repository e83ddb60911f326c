#pragma once

// Constraint blocks of the inverter models. All quantities are per unit.
//
// Sign convention: I_g is the current flowing from the bus into the inverter
// terminal and S_g = U_i conj(I_g) the power drawn from the bus, so a
// generating inverter has Re(S_g) < 0. I_int is the current delivered by the
// internal source into the filter node and S_int = U_int conj(I_int) the power
// it produces. Curve laws and p_prime/q_slack are stated as injections.

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fourwire/complex_expr.hpp"
#include "fourwire/curve.hpp"
#include "fourwire/netmodel.hpp"

namespace fourwire {

class TopologyMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidControlLaw : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Size of one emitted block, measured as growth of the owning problem.
struct BlockStats {
  std::string name;
  std::size_t variables = 0, equalities = 0, inequalities = 0;
};

/// Variables of one inverter. Entries that the topology eliminates are empty.
struct InverterVars {
  std::string id;
  Topology topology = Topology::four_leg;
  std::array<nlp::CExpr, 4> u_bus;                      // bus node voltages; neutral may be a constant
  std::array<std::optional<nlp::CVar>, 4> u_int, i_int, i_ext, i_sh;
  std::optional<nlp::VarRef> p_int, q_int, p_prime, q_slack;
  std::array<std::optional<nlp::CVar>, 3> s_legacy;     // legacy converter only
  std::vector<nlp::VarRef> aux;                         // magnitude variables and the like
  bool legacy = false;

  std::size_t conductors() const { return topology == Topology::four_leg ? 4 : 3; }
};

namespace detail {

inline nlp::CExpr cv(nlp::Problem& p, const std::optional<nlp::CVar>& v) {
  if (!v) return nlp::cconstant(p, 0.0);
  return nlp::cvar(p, *v);
}

class Census {
 public:
  Census(const nlp::Problem& p, std::string name)
      : p_(p), name_(std::move(name)), v_(p.num_variables()), e_(p.num_equalities()), i_(p.num_inequalities()) {}
  BlockStats done() const {
    return {name_, p_.num_variables() - v_, p_.num_equalities() - e_, p_.num_inequalities() - i_};
  }

 private:
  const nlp::Problem& p_;
  std::string name_;
  std::size_t v_, e_, i_;
};

inline std::string ph(std::size_t k) { return conductor_name(static_cast<Conductor>(k)); }

/// Magnitude variable m >= 0 with m^2 = |x|^2.
inline nlp::Expr magnitude(nlp::Problem& p, InverterVars& vars, const nlp::CExpr& x, const std::string& name,
                           double init) {
  const auto m = p.add_variable(name, std::max(init, 1e-3), {0.0, nlp::kInf});
  vars.aux.push_back(m);
  p.add_equality(nlp::square(p.var(m)) - nlp::abs2(x), name + ".def");
  return p.var(m);
}

}  // namespace detail

/// Grid-side current of conductor k (zero when eliminated).
inline nlp::CExpr grid_current(nlp::Problem& p, const InverterVars& v, std::size_t k) {
  if (v.legacy) return k < 3 ? detail::cv(p, v.i_ext[k]) : nlp::cconstant(p, 0.0);
  return detail::cv(p, v.i_ext[k]);
}

/// S_g of conductor k: U_i conj(I_g).
inline nlp::CExpr s_ext(nlp::Problem& p, const InverterVars& v, std::size_t k) {
  return nlp::mul_conj(v.u_bus[k], grid_current(p, v, k));
}

/// S_int of conductor k: U_int conj(I_int).
inline nlp::CExpr s_int(nlp::Problem& p, const InverterVars& v, std::size_t k) {
  return nlp::mul_conj(detail::cv(p, v.u_int[k]), detail::cv(p, v.i_int[k]));
}

/// Phase-to-neutral external power of phase k: (U_k - U_n) conj(I_g,k).
inline nlp::CExpr s_wye(nlp::Problem& p, const InverterVars& v, std::size_t k) {
  return nlp::mul_conj(v.u_bus[k] - v.u_bus[3], grid_current(p, v, k));
}

/// Internal wye voltage of phase k. With an open neutral the star point is
/// the mean of the three internal phase voltages.
inline nlp::CExpr u_int_wye(nlp::Problem& p, const InverterVars& v, std::size_t k) {
  if (v.topology == Topology::four_leg) return detail::cv(p, v.u_int[k]) - detail::cv(p, v.u_int[3]);
  const nlp::CExpr s = detail::cv(p, v.u_int[0]) + detail::cv(p, v.u_int[1]) + detail::cv(p, v.u_int[2]);
  return detail::cv(p, v.u_int[k]) - (1.0 / 3.0) * s;
}

/// Register the variables of an inverter. u_init holds the initial bus node
/// voltages (a, b, c, n).
inline InverterVars create_inverter_vars(nlp::Problem& p, const InverterSpec& spec,
                                         const std::array<nlp::CExpr, 4>& u_bus,
                                         const std::array<Complex, 4>& u_init) {
  InverterVars v;
  v.id = spec.id;
  v.topology = spec.topology;
  v.u_bus = u_bus;
  const std::string g = "inv." + spec.id;
  const std::size_t nc = spec.conductor_count();
  if (spec.has_law(7)) {
    v.legacy = true;
    for (std::size_t k = 0; k < 3; ++k) {
      v.i_ext[k] = nlp::add_complex_variable(p, g + ".i_ext." + detail::ph(k), 0.0);
      v.s_legacy[k] = nlp::add_complex_variable(p, g + ".s." + detail::ph(k), 0.0);
    }
    const auto& lc = std::get<law::LegacyConverter>(spec.control_laws.front());
    v.p_prime = p.add_variable(g + ".p_stor", 0.5 * (spec.prime_p_min + spec.prime_p_max),
                               {spec.prime_p_min, spec.prime_p_max});
    nlp::Bounds qb = lc.q_int ? nlp::Bounds{*lc.q_int, *lc.q_int} : nlp::Bounds{spec.q_slack_min, spec.q_slack_max};
    v.q_slack = p.add_variable(g + ".q_int", 0.0, qb);
    return v;
  }
  // small internal current aligned with each phase voltage, neutral seeded
  // separately
  constexpr double seed = 1e-3;
  for (std::size_t k = 0; k < nc; ++k) {
    const std::string c = detail::ph(k);
    const Complex uk = u_init[k];
    const Complex dir = (k < 3 && std::abs(uk - u_init[3]) > 0.0) ? (uk - u_init[3]) / std::abs(uk - u_init[3])
                                                                  : Complex{1.0, 0.0};
    const Complex ii = k < 3 ? seed * (1.0 + 0.1 * static_cast<double>(k)) * dir : Complex{seed, seed};
    const Complex y{0.0, spec.b_shunt[k]};
    const Complex ish = y * uk;
    v.u_int[k] = nlp::add_complex_variable(p, g + ".u_int." + c, uk);
    v.i_int[k] = nlp::add_complex_variable(p, g + ".i_int." + c, ii);
    v.i_ext[k] = nlp::add_complex_variable(p, g + ".i_ext." + c, ish - ii);
    v.i_sh[k] = nlp::add_complex_variable(p, g + ".i_sh." + c, ish);
  }
  v.p_int = p.add_variable(g + ".p_int", 0.0);
  v.q_int = p.add_variable(g + ".q_int", 0.0);
  v.p_prime = p.add_variable(g + ".p_prime", 0.5 * (spec.prime_p_min + spec.prime_p_max),
                             {spec.prime_p_min, spec.prime_p_max});
  v.q_slack = p.add_variable(g + ".q_slack", 0.0, {spec.q_slack_min, spec.q_slack_max});
  return v;
}

namespace detail {

// Core blocks shared by both topologies; the 3-leg variant runs over the
// phases only and uses a floating-star shunt.
inline BlockStats emit_gfl_core(nlp::Problem& p, const InverterSpec& spec, InverterVars& v, const char* name) {
  Census census(p, name);
  const std::string g = "inv." + spec.id;
  const std::size_t nc = v.conductors();
  std::vector<nlp::CExpr> iint;
  for (std::size_t k = 0; k < nc; ++k) iint.push_back(cv(p, v.i_int[k]));
  nlp::add_complex_equality(p, nlp::csum(iint), g + ".kcl");
  for (std::size_t k = 0; k < nc; ++k)
    p.add_inequality(nlp::abs2(iint[k]) - spec.i_rating[k] * spec.i_rating[k], g + ".i_rating." + ph(k));
  // shunt currents
  if (v.topology == Topology::four_leg) {
    for (std::size_t k = 0; k < nc; ++k)
      nlp::add_complex_equality(p, cv(p, v.i_sh[k]) - Complex{0.0, spec.b_shunt[k]} * v.u_bus[k],
                                g + ".shunt." + ph(k));
  } else {
    double ysum = spec.b_shunt[0] + spec.b_shunt[1] + spec.b_shunt[2];
    for (std::size_t k = 0; k < 3; ++k) {
      nlp::CExpr e = cv(p, v.i_sh[k]);
      if (ysum != 0.0) {
        // I_sh,k = Y_k (U_k - sum_q Y_q U_q / sum Y)
        for (std::size_t q = 0; q < 3; ++q) {
          const double m = (k == q ? spec.b_shunt[k] : 0.0) - spec.b_shunt[k] * spec.b_shunt[q] / ysum;
          if (m != 0.0) e = e - Complex{0.0, m} * v.u_bus[q];
        }
      }
      nlp::add_complex_equality(p, e, g + ".shunt." + ph(k));
    }
  }
  for (std::size_t k = 0; k < nc; ++k)
    nlp::add_complex_equality(p, cv(p, v.i_ext[k]) + iint[k] - cv(p, v.i_sh[k]), g + ".balance." + ph(k));
  // S_g + S_int = Z |I_int|^2 + U_i conj(I_sh)
  for (std::size_t k = 0; k < nc; ++k) {
    const nlp::Expr i2 = nlp::abs2(iint[k]);
    const nlp::CExpr loss{spec.r_filter[k] * i2, spec.x_filter[k] * i2};
    const nlp::CExpr shunt = nlp::mul_conj(v.u_bus[k], cv(p, v.i_sh[k]));
    nlp::add_complex_equality(p, s_ext(p, v, k) + s_int(p, v, k) - loss - shunt, g + ".loss." + ph(k));
  }
  std::vector<nlp::CExpr> sint;
  for (std::size_t k = 0; k < nc; ++k) sint.push_back(s_int(p, v, k));
  const nlp::CExpr agg = nlp::csum(sint) - nlp::CExpr{p.var(*v.p_int), p.var(*v.q_int)};
  nlp::add_complex_equality(p, agg, g + ".aggregate");
  p.add_equality(p.var(*v.p_int) - p.var(*v.p_prime), g + ".prime");
  p.add_equality(p.var(*v.q_int) - p.var(*v.q_slack), g + ".slack");
  std::vector<nlp::CExpr> swye;
  for (std::size_t k = 0; k < 3; ++k) swye.push_back(s_wye(p, v, k));
  p.add_inequality(nlp::abs2(nlp::csum(swye)) - spec.s_rating * spec.s_rating, g + ".s_rating");
  return census.done();
}

}  // namespace detail

/// Core grid-following block of a four-leg inverter.
inline BlockStats emit_gfl_4leg(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  if (spec.topology != Topology::four_leg || v.topology != Topology::four_leg)
    throw TopologyMismatch("emit_gfl_4leg: inverter " + spec.id + " is not four-leg");
  return detail::emit_gfl_core(p, spec, v, "gfl_4leg");
}

/// Core block of a three-leg inverter: the four-leg physics over the phases
/// with the neutral current, neutral internal voltage and neutral shunt
/// eliminated, and the shunt star point left floating.
inline BlockStats emit_3leg_restriction(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  if (spec.topology != Topology::three_leg || v.topology != Topology::three_leg)
    throw TopologyMismatch("emit_3leg_restriction: inverter " + spec.id + " is not three-leg");
  return detail::emit_gfl_core(p, spec, v, "gfl_3leg");
}

/// Balanced internal voltage source of a grid-forming inverter.
inline BlockStats emit_gfm(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  if (spec.mode != InverterMode::gfm) throw InvalidControlLaw("emit_gfm: inverter " + spec.id + " is not grid-forming");
  detail::Census census(p, "gfm");
  const std::string g = "inv." + spec.id + ".gfm";
  std::array<nlp::CExpr, 3> u{u_int_wye(p, v, 0), u_int_wye(p, v, 1), u_int_wye(p, v, 2)};
  // an open-neutral wye set sums to zero: two real rows
  const bool four = v.topology == Topology::four_leg;
  // a four-leg droop inverter takes its phase magnitudes from the droop law
  const bool equal_mags = !four || spec.gfm_voltage_mode != GfmVoltageMode::droop;
  if (spec.gfm_formulation == GfmFormulation::magnitude_angle) {
    if (equal_mags) p.add_equality(nlp::abs2(u[0]) - nlp::abs2(u[1]), g + ".mag_ab");
    if (four && equal_mags) p.add_equality(nlp::abs2(u[1]) - nlp::abs2(u[2]), g + ".mag_bc");
    // Im(U_b conj(a^2 U_a)) = 0 and Im(U_c conj(a U_a)) = 0
    p.add_equality(nlp::mul_conj(u[1], alpha2() * u[0]).im, g + ".angle_ab");
    if (four) p.add_equality(nlp::mul_conj(u[2], alpha() * u[0]).im, g + ".angle_ac");
  } else {
    const Complex al = alpha(), al2 = alpha2();
    if (four) nlp::add_complex_equality(p, u[0] + u[1] + u[2], g + ".zero_seq");
    nlp::add_complex_equality(p, u[0] + al2 * u[1] + al * u[2], g + ".neg_seq");
  }
  if (spec.gfm_voltage_mode == GfmVoltageMode::setpoint)
    p.add_equality(nlp::abs2(u[0]) - spec.gfm_voltage_setpoint * spec.gfm_voltage_setpoint, g + ".setpoint");
  return census.done();
}

/// Per-phase droop: |U^Y_p| - U_set = D_q (Q^Y_p - Q_set,p) + D_p (P^Y_p - P_set,p).
inline BlockStats emit_droop(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  if (!spec.droop) throw InvalidControlLaw("emit_droop: inverter " + spec.id + " has no droop parameters");
  detail::Census census(p, "droop");
  const auto& d = *spec.droop;
  const std::string g = "inv." + spec.id + ".droop";
  for (std::size_t k = 0; k < 3; ++k) {
    const nlp::CExpr uw = v.u_bus[k] - v.u_bus[3];
    const nlp::Expr m = detail::magnitude(p, v, uw, g + ".m." + detail::ph(k), 1.0);
    const nlp::CExpr s = s_wye(p, v, k);
    p.add_equality(m - d.u_set - d.dq * (s.im - d.q_set[k]) - d.dp * (s.re - d.p_set[k]), g + "." + detail::ph(k));
  }
  return census.done();
}

namespace detail {

struct CurveArgs {
  std::vector<nlp::Expr> argument;  // one per output row
  std::vector<nlp::Expr> output_p, output_q;
};

// Voltage arguments and per-phase output powers of a curve variant.
inline CurveArgs curve_terms(nlp::Problem& p, InverterVars& v, CurveVariant variant, const std::string& g) {
  CurveArgs a;
  const double s3 = std::sqrt(3.0);
  std::array<nlp::Expr, 3> mags;
  for (std::size_t k = 0; k < 3; ++k) {
    nlp::CExpr u;
    double init = 1.0;
    switch (variant) {
      case CurveVariant::phase_to_neutral:
      case CurveVariant::phase_to_neutral_avg: u = v.u_bus[k] - v.u_bus[3]; break;
      case CurveVariant::phase_to_phase:
      case CurveVariant::phase_to_phase_avg:
        u = v.u_bus[k] - v.u_bus[(k + 1) % 3];
        init = s3;
        break;
      case CurveVariant::phase_to_ground:
      case CurveVariant::phase_to_ground_avg: u = v.u_bus[k]; break;
    }
    mags[k] = magnitude(p, v, u, g + ".m." + ph(k), init);
    nlp::CExpr s = (variant == CurveVariant::phase_to_ground || variant == CurveVariant::phase_to_ground_avg)
                       ? s_ext(p, v, k)
                       : s_wye(p, v, k);
    a.output_p.push_back(s.re);
    a.output_q.push_back(s.im);
  }
  const bool delta = variant == CurveVariant::phase_to_phase || variant == CurveVariant::phase_to_phase_avg;
  if (is_averaged(variant)) {
    a.argument.push_back((mags[0] + mags[1] + mags[2]) * (1.0 / (delta ? 3.0 * s3 : 3.0)));
  } else {
    for (auto& m : mags) a.argument.push_back(delta ? m * (1.0 / s3) : m);
  }
  return a;
}

inline BlockStats emit_curve(nlp::Problem& p, const InverterSpec& spec, InverterVars& v, CurveVariant variant,
                             const std::vector<CurvePoint>& pts, double eps, bool reactive) {
  const char* kind = reactive ? "volt_var" : "volt_watt";
  if (!curve_variant_allowed(spec.topology, spec.mode, variant))
    throw InvalidControlLaw(std::string(kind) + " " + to_string(variant) + " is not available to " +
                            to_string(spec.mode) + " " + to_string(spec.topology));
  Census census(p, std::string(kind) + "." + to_string(variant));
  const std::string g = "inv." + spec.id + "." + kind;
  auto curve = std::make_shared<const PwlCurve>(pts, eps);
  CurveArgs a = curve_terms(p, v, variant, g);
  const auto& out = reactive ? a.output_q : a.output_p;
  const double base = spec.s_rating / 3.0;
  // S_g is drawn power, the curve gives injection
  if (a.argument.size() == 1) {
    const nlp::Expr f = nlp::apply_function(curve, a.argument[0]);
    p.add_equality(out[0] + base * f, g + ".a");
    p.add_equality(out[1] - out[0], g + ".tie_ab");
    p.add_equality(out[2] - out[1], g + ".tie_bc");
  } else {
    for (std::size_t k = 0; k < 3; ++k)
      p.add_equality(out[k] + base * nlp::apply_function(curve, a.argument[k]), g + "." + ph(k));
  }
  return census.done();
}

}  // namespace detail

inline BlockStats emit_volt_var(nlp::Problem& p, const InverterSpec& spec, InverterVars& v, const law::VoltVar& l) {
  return detail::emit_curve(p, spec, v, l.variant, l.curve, l.smoothing, true);
}

inline BlockStats emit_volt_watt(nlp::Problem& p, const InverterSpec& spec, InverterVars& v, const law::VoltWatt& l) {
  return detail::emit_curve(p, spec, v, l.variant, l.curve, l.smoothing, false);
}

/// Equal complex wye power on all three phases.
inline BlockStats emit_power_sharing(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  if (spec.topology != Topology::four_leg) throw TopologyMismatch("power sharing requires a four-leg inverter");
  detail::Census census(p, "power_sharing");
  const std::string g = "inv." + spec.id + ".sharing";
  const nlp::CExpr a = s_wye(p, v, 0), b = s_wye(p, v, 1), c = s_wye(p, v, 2);
  nlp::add_complex_equality(p, a - b, g + ".ab");
  nlp::add_complex_equality(p, b - c, g + ".bc");
  return census.done();
}

/// Equal active wye power on all three phases.
inline BlockStats emit_equal_active_power(nlp::Problem& p, const InverterSpec& spec, InverterVars& v) {
  detail::Census census(p, "equal_active_power");
  const std::string g = "inv." + spec.id + ".equal_p";
  const nlp::CExpr a = s_wye(p, v, 0), b = s_wye(p, v, 1), c = s_wye(p, v, 2);
  p.add_equality(a.re - b.re, g + ".ab");
  p.add_equality(b.re - c.re, g + ".bc");
  return census.done();
}

/// q_slack = p_prime tan(acos(pf)).
inline BlockStats emit_const_pf(nlp::Problem& p, const InverterSpec& spec, InverterVars& v, double pf) {
  if (!(pf > 0.0 && pf <= 1.0)) throw InvalidControlLaw("power factor outside (0, 1]");
  detail::Census census(p, "const_pf");
  p.add_equality(p.var(*v.q_slack) - std::tan(std::acos(pf)) * p.var(*v.p_prime), "inv." + spec.id + ".pf");
  return census.done();
}

/// Caps on the symmetrical components of the grid-side phase currents.
inline BlockStats emit_seq_limits(nlp::Problem& p, const InverterSpec& spec, InverterVars& v,
                                  const std::array<double, 3>& caps) {
  for (double c : caps)
    if (c < 0.0) throw InvalidControlLaw("negative sequence-current cap");
  detail::Census census(p, "seq_limit");
  const std::string g = "inv." + spec.id + ".seq";
  const nlp::CExpr ia = grid_current(p, v, 0), ib = grid_current(p, v, 1), ic = grid_current(p, v, 2);
  const Complex al = alpha(), al2 = alpha2();
  const std::array<nlp::CExpr, 3> seq{(1.0 / 3.0) * (ia + ib + ic), (1.0 / 3.0) * (ia + al * ib + al2 * ic),
                                      (1.0 / 3.0) * (ia + al2 * ib + al * ic)};
  static constexpr const char* names[] = {"i0", "i1", "i2"};
  for (std::size_t s = 0; s < 3; ++s) {
    // the three-leg zero sequence vanishes identically
    if (s == 0 && v.topology == Topology::three_leg) continue;
    if (caps[s] == 0.0)
      nlp::add_complex_equality(p, seq[s], g + "." + names[s]);
    else
      p.add_inequality(nlp::abs2(seq[s]) - caps[s] * caps[s], g + "." + names[s]);
  }
  return census.done();
}

/// Three-wire converter with per-conductor ratings, status and an aggregate
/// balance with copper loss. Conductor power is tied to the network through
/// S_p = U^Y_p conj(I_p), which implies |S_p|^2 = |U^Y_p|^2 |I_p|^2.
inline BlockStats emit_legacy_converter(nlp::Problem& p, const InverterSpec& spec, InverterVars& v,
                                        const law::LegacyConverter& l) {
  if (!v.legacy || spec.control_laws.size() != 1)
    throw InvalidControlLaw("legacy converter model cannot be mixed with other blocks");
  detail::Census census(p, "legacy_converter");
  const std::string g = "inv." + spec.id + ".legacy";
  std::vector<nlp::CExpr> s, loss;
  for (std::size_t k = 0; k < 3; ++k) {
    const nlp::CExpr sk = nlp::cvar(p, *v.s_legacy[k]);
    const nlp::CExpr ik = nlp::cvar(p, *v.i_ext[k]);
    s.push_back(sk);
    if (l.status == 0) {
      p.set_bounds(v.s_legacy[k]->re, {0.0, 0.0});
      p.set_bounds(v.s_legacy[k]->im, {0.0, 0.0});
      p.set_bounds(v.i_ext[k]->re, {0.0, 0.0});
      p.set_bounds(v.i_ext[k]->im, {0.0, 0.0});
      continue;
    }
    p.add_inequality(nlp::abs2(sk) - l.s_rating[k] * l.s_rating[k], g + ".s_rating." + detail::ph(k));
    p.add_inequality(nlp::abs2(ik) - l.i_rating[k] * l.i_rating[k], g + ".i_rating." + detail::ph(k));
    nlp::add_complex_equality(p, sk - s_wye(p, v, k), g + ".s_def." + detail::ph(k));
    const nlp::Expr i2 = nlp::abs2(ik);
    loss.push_back({l.z[k].real() * i2, l.z[k].imag() * i2});
  }
  nlp::CExpr rhs = nlp::CExpr{p.constant(0.0), p.var(*v.q_slack)} + l.s_ext;
  if (!loss.empty()) rhs = rhs + nlp::csum(loss);
  const nlp::CExpr lhs = nlp::csum(s) + nlp::CExpr{p.var(*v.p_prime), p.constant(0.0)};
  nlp::add_complex_equality(p, lhs - rhs, g + ".balance");
  return census.done();
}

/// An inverter with its variables and the blocks emitted for it.
struct ComposedInverter {
  InverterVars vars;
  std::vector<BlockStats> blocks;
};

/// Emit every block Table-style composition prescribes for the inverter's
/// topology and mode, followed by its control laws in list order.
inline ComposedInverter compose(nlp::Problem& p, const InverterSpec& spec, const std::array<nlp::CExpr, 4>& u_bus,
                                const std::array<Complex, 4>& u_init) {
  const auto violations = validate_control_laws(spec);
  if (!violations.empty()) throw InvalidControlLaw("inverter " + spec.id + ": " + violations.front());
  ComposedInverter out;
  detail::Census vars_census(p, "variables");
  out.vars = create_inverter_vars(p, spec, u_bus, u_init);
  out.blocks.push_back(vars_census.done());
  auto& v = out.vars;
  if (v.legacy) {
    out.blocks.push_back(emit_legacy_converter(p, spec, v, std::get<law::LegacyConverter>(spec.control_laws.front())));
    return out;
  }
  out.blocks.push_back(spec.topology == Topology::four_leg ? emit_gfl_4leg(p, spec, v)
                                                           : emit_3leg_restriction(p, spec, v));
  if (spec.mode == InverterMode::gfm) out.blocks.push_back(emit_gfm(p, spec, v));
  bool droop_done = false;
  if (spec.mode == InverterMode::gfm && spec.gfm_voltage_mode == GfmVoltageMode::droop) {
    out.blocks.push_back(emit_droop(p, spec, v));
    droop_done = true;
  }
  for (const auto& l : spec.control_laws) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, law::Droop>) {
            if (!droop_done) out.blocks.push_back(emit_droop(p, spec, v));
            droop_done = true;
          } else if constexpr (std::is_same_v<T, law::VoltVar>) {
            out.blocks.push_back(emit_volt_var(p, spec, v, x));
          } else if constexpr (std::is_same_v<T, law::VoltWatt>) {
            out.blocks.push_back(emit_volt_watt(p, spec, v, x));
          } else if constexpr (std::is_same_v<T, law::PowerSharing>) {
            out.blocks.push_back(emit_power_sharing(p, spec, v));
          } else if constexpr (std::is_same_v<T, law::ConstPf>) {
            out.blocks.push_back(emit_const_pf(p, spec, v, x.pf));
          } else if constexpr (std::is_same_v<T, law::SeqLimit>) {
            out.blocks.push_back(emit_seq_limits(p, spec, v, x.caps));
          } else if constexpr (std::is_same_v<T, law::EqualActivePower>) {
            out.blocks.push_back(emit_equal_active_power(p, spec, v));
          } else {
            throw InvalidControlLaw("legacy converter model cannot be mixed with other blocks");
          }
        },
        l);
  }
  return out;
}

}  // namespace fourwire
