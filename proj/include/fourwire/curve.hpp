#pragma once

// Piecewise-linear Volt-var / Volt-Watt characteristics with C1 quadratic
// blending around every breakpoint.

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fourwire/nlp.hpp"

namespace fourwire {

struct CurvePoint {
  double v;  // voltage argument, pu
  double y;  // output as a fraction of rating, injection positive
};

/// Piecewise-linear curve, flat outside the first and last breakpoint.
///
/// Each breakpoint is replaced over [v - eps, v + eps] by the quadratic that
/// joins the two adjacent lines with matching slopes. The blend departs from
/// the exact curve by |slope change| * eps / 4 at the breakpoint and not at
/// all outside the blending windows.
class PwlCurve : public nlp::ScalarFunction {
 public:
  static constexpr double kDefaultSmoothing = 0.002;

  PwlCurve(std::vector<CurvePoint> points, double eps = kDefaultSmoothing)
      : pts_(std::move(points)), eps_(eps) {
    if (pts_.empty()) throw std::invalid_argument("curve needs at least one breakpoint");
    if (!(eps_ > 0.0)) throw std::invalid_argument("curve smoothing half-width must be positive");
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      if (!(pts_[i].v > pts_[i - 1].v))
        throw std::invalid_argument("curve breakpoints must be strictly increasing in voltage");
      if (pts_[i].v - pts_[i - 1].v <= 2.0 * eps_)
        throw std::invalid_argument("curve smoothing windows overlap; reduce the half-width");
    }
    slopes_.assign(pts_.size() + 1, 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i)
      slopes_[i] = (pts_[i].y - pts_[i - 1].y) / (pts_[i].v - pts_[i - 1].v);
  }

  const std::vector<CurvePoint>& points() const { return pts_; }
  double smoothing() const { return eps_; }

  /// The unsmoothed piecewise-linear value.
  double exact(double v) const {
    if (v <= pts_.front().v) return pts_.front().y;
    if (v >= pts_.back().v) return pts_.back().y;
    std::size_t i = 1;
    while (pts_[i].v < v) ++i;
    return pts_[i - 1].y + slopes_[i] * (v - pts_[i - 1].v);
  }

  /// Largest slope change over all breakpoints (flat extensions included).
  double max_slope_change() const {
    double m = 0.0;
    for (std::size_t i = 0; i < pts_.size(); ++i) m = std::max(m, std::abs(slopes_[i + 1] - slopes_[i]));
    return m;
  }

  Taylor taylor(double v) const override {
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const double d = v - pts_[i].v;
      if (std::abs(d) < eps_) {
        const double sl = slopes_[i], sr = slopes_[i + 1];
        const double w = d + eps_;
        return {pts_[i].y + sl * d + (sr - sl) * w * w / (4.0 * eps_), sl + (sr - sl) * w / (2.0 * eps_),
                (sr - sl) / (2.0 * eps_)};
      }
    }
    double slope = 0.0;
    if (v > pts_.front().v && v < pts_.back().v) {
      std::size_t i = 1;
      while (pts_[i].v < v) ++i;
      slope = slopes_[i];
    }
    return {exact(v), slope, 0.0};
  }

  double operator()(double v) const { return taylor(v).f; }

  std::string describe() const override {
    std::ostringstream os;
    os << "pwl(eps=" << eps_;
    for (const auto& p : pts_) os << ", (" << p.v << ", " << p.y << ")";
    os << ")";
    return os.str();
  }

 private:
  std::vector<CurvePoint> pts_;
  std::vector<double> slopes_;  // slopes_[i] is the slope left of breakpoint i
  double eps_;
};

/// Repo default Volt-var shape (Australian-style: reactive injection at low
/// voltage, deadband, absorption at high voltage), pu on 230 V.
inline std::vector<CurvePoint> default_volt_var_points() {
  return {{0.9, 0.44}, {0.9565, 0.0}, {1.0435, 0.0}, {1.1217, -0.60}};
}

/// Repo default Volt-Watt shape: full output up to 1.1 pu, 20% at 1.1304 pu.
inline std::vector<CurvePoint> default_volt_watt_points() { return {{1.1, 1.0}, {1.1304, 0.2}}; }

}  // namespace fourwire
