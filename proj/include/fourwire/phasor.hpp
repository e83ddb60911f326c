#pragma once

// Phasor arithmetic over the four conductors of a bus (a, b, c, n),
// symmetrical-component transforms and unbalance metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace fourwire {

using Complex = std::complex<double>;

enum class Conductor : std::size_t { a = 0, b = 1, c = 2, n = 3 };

inline constexpr std::array<Conductor, 4> kConductors{Conductor::a, Conductor::b, Conductor::c,
                                                      Conductor::n};
inline constexpr std::array<Conductor, 3> kPhases{Conductor::a, Conductor::b, Conductor::c};

inline constexpr const char* conductor_name(Conductor k) {
  switch (k) {
    case Conductor::a: return "a";
    case Conductor::b: return "b";
    case Conductor::c: return "c";
    case Conductor::n: return "n";
  }
  return "?";
}

/// The rotation operator e^{j2pi/3}, built from exact cos/sin.
inline Complex alpha() {
  static const Complex value{std::cos(2.0 * std::numbers::pi / 3.0),
                             std::sin(2.0 * std::numbers::pi / 3.0)};
  return value;
}
inline Complex alpha2() {
  static const Complex value = alpha() * alpha();
  return value;
}

/// |z|^2 without going through std::abs.
inline double abs2(Complex z) { return z.real() * z.real() + z.imag() * z.imag(); }

inline double angle_deg(Complex z) { return std::arg(z) * 180.0 / std::numbers::pi; }

inline Complex polar_deg(double mag, double deg) {
  return std::polar(mag, deg * std::numbers::pi / 180.0);
}

struct PhaseVector {
  Complex a{}, b{}, c{};

  Complex& operator[](std::size_t i) { return i == 0 ? a : (i == 1 ? b : c); }
  const Complex& operator[](std::size_t i) const { return i == 0 ? a : (i == 1 ? b : c); }

  friend PhaseVector operator+(const PhaseVector& x, const PhaseVector& y) {
    return {x.a + y.a, x.b + y.b, x.c + y.c};
  }
  friend PhaseVector operator-(const PhaseVector& x, const PhaseVector& y) {
    return {x.a - y.a, x.b - y.b, x.c - y.c};
  }
  friend PhaseVector operator*(Complex k, const PhaseVector& x) { return {k * x.a, k * x.b, k * x.c}; }
  Complex sum() const { return a + b + c; }
};

/// A quantity per node of a four-wire bus.
struct NodePhasorVector {
  Complex a{}, b{}, c{}, n{};

  Complex& operator[](Conductor k) {
    switch (k) {
      case Conductor::a: return a;
      case Conductor::b: return b;
      case Conductor::c: return c;
      default: return n;
    }
  }
  const Complex& operator[](Conductor k) const {
    return const_cast<NodePhasorVector&>(*this)[k];
  }

  /// Phase-only view (a, b, c).
  PhaseVector phases() const { return {a, b, c}; }
  Complex sum() const { return a + b + c + n; }
};

struct SequenceVector {
  Complex zero{}, positive{}, negative{};
};

/// Phase-to-neutral voltages.
inline PhaseVector wye_voltages(const NodePhasorVector& u) {
  return {u.a - u.n, u.b - u.n, u.c - u.n};
}

/// Phase-to-phase voltages (ab, bc, ca).
inline PhaseVector delta_voltages(const NodePhasorVector& u) {
  return {u.a - u.b, u.b - u.c, u.c - u.a};
}

inline SequenceVector to_sequence(const PhaseVector& x) {
  const Complex al = alpha();
  const Complex al2 = alpha2();
  return {(x.a + x.b + x.c) / 3.0, (x.a + al * x.b + al2 * x.c) / 3.0,
          (x.a + al2 * x.b + al * x.c) / 3.0};
}

inline PhaseVector from_sequence(const SequenceVector& s) {
  const Complex al = alpha();
  const Complex al2 = alpha2();
  return {s.zero + s.positive + s.negative, s.zero + al2 * s.positive + al * s.negative,
          s.zero + al * s.positive + al2 * s.negative};
}

/// Positive-sequence set (1, a^2, a) scaled by k.
inline PhaseVector balanced_set(Complex k) { return {k, alpha2() * k, alpha() * k}; }

/// Raised when a ratio metric has a zero (or non-finite) denominator.
class DegenerateRatio : public std::domain_error {
 public:
  explicit DegenerateRatio(const std::string& metric)
      : std::domain_error(metric + ": zero denominator"), metric_(metric) {}
  const std::string& metric() const noexcept { return metric_; }

 private:
  std::string metric_;
};

/// Voltage unbalance factor |U2|/|U1| of a wye voltage set.
inline double vuf(const PhaseVector& u_wye) {
  const SequenceVector s = to_sequence(u_wye);
  const double u1 = std::abs(s.positive);
  // rounding leaves |U1| near 1e-17 for a pure zero-sequence set
  const double scale = std::abs(u_wye.a) + std::abs(u_wye.b) + std::abs(u_wye.c);
  if (!(u1 > 1e-14 * scale)) throw DegenerateRatio("VUF");
  return std::abs(s.negative) / u1;
}

enum class MetricError { zero_denominator };

/// Either a value or the reason it is undefined.
struct MetricValue {
  std::optional<double> value;
  std::optional<MetricError> error;

  static MetricValue ok(double v) { return {v, std::nullopt}; }
  static MetricValue fail(MetricError e) { return {std::nullopt, e}; }
  bool has_value() const { return value.has_value(); }
};

struct UnbalanceMetrics {
  MetricValue iuf;   // |I2|/|I1|
  double iuf2{};     // |I2|
  MetricValue piur;  // max phase-current deviation from the mean, over the mean
  MetricValue ppur;  // same over per-phase P
  MetricValue pqur;  // same over per-phase Q
};

namespace detail {

inline MetricValue max_deviation_ratio(const std::array<double, 3>& v, bool absolute) {
  const double mean = (v[0] + v[1] + v[2]) / 3.0;
  if (mean == 0.0 || !std::isfinite(mean)) return MetricValue::fail(MetricError::zero_denominator);
  double worst = -std::numeric_limits<double>::infinity();
  for (double x : v) worst = std::max(worst, absolute ? std::abs(x - mean) : x - mean);
  return MetricValue::ok(worst / mean);
}

}  // namespace detail

inline UnbalanceMetrics unbalance_metrics(const PhaseVector& i, const std::array<double, 3>& p,
                                          const std::array<double, 3>& q) {
  UnbalanceMetrics m;
  const SequenceVector s = to_sequence(i);
  const double i1 = std::abs(s.positive);
  const double scale = std::abs(i.a) + std::abs(i.b) + std::abs(i.c);
  m.iuf2 = std::abs(s.negative);
  m.iuf = i1 > 1e-14 * scale && i1 > 0.0 ? MetricValue::ok(m.iuf2 / i1) : MetricValue::fail(MetricError::zero_denominator);
  m.piur = detail::max_deviation_ratio({std::abs(i.a), std::abs(i.b), std::abs(i.c)}, false);
  m.ppur = detail::max_deviation_ratio(p, true);
  m.pqur = detail::max_deviation_ratio(q, true);
  return m;
}

}  // namespace fourwire
