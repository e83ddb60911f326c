#pragma once

// Complex arithmetic on pairs of real expressions. Complex equations are
// lowered to two real residuals when they are added to a problem.

#include <string>

#include "fourwire/nlp.hpp"
#include "fourwire/phasor.hpp"

namespace fourwire::nlp {

struct CExpr {
  Expr re, im;

  friend CExpr operator+(const CExpr& x, const CExpr& y) { return {x.re + y.re, x.im + y.im}; }
  friend CExpr operator-(const CExpr& x, const CExpr& y) { return {x.re - y.re, x.im - y.im}; }
  friend CExpr operator-(const CExpr& x) { return {-x.re, -x.im}; }
  friend CExpr operator*(const CExpr& x, const CExpr& y) {
    return {x.re * y.re - x.im * y.im, x.re * y.im + x.im * y.re};
  }
  friend CExpr operator*(Complex k, const CExpr& x) {
    if (k.imag() == 0.0) return {k.real() * x.re, k.real() * x.im};
    if (k.real() == 0.0) return {-k.imag() * x.im, k.imag() * x.re};
    return {k.real() * x.re - k.imag() * x.im, k.real() * x.im + k.imag() * x.re};
  }
  friend CExpr operator*(double k, const CExpr& x) { return {k * x.re, k * x.im}; }
  friend CExpr operator+(const CExpr& x, Complex k) {
    return {x.re + k.real(), x.im + k.imag()};
  }
  friend CExpr operator-(const CExpr& x, Complex k) {
    return {x.re - k.real(), x.im - k.imag()};
  }
  CExpr& operator+=(const CExpr& y) { return *this = *this + y; }
  CExpr& operator-=(const CExpr& y) { return *this = *this - y; }
};

inline CExpr conj(const CExpr& x) { return {x.re, -x.im}; }

/// |x|^2 = re^2 + im^2
inline Expr abs2(const CExpr& x) { return square(x.re) + square(x.im); }

/// x * conj(y)
inline CExpr mul_conj(const CExpr& x, const CExpr& y) {
  return {x.re * y.re + x.im * y.im, x.im * y.re - x.re * y.im};
}

inline CExpr cconstant(const Problem& p, Complex k) { return {p.constant(k.real()), p.constant(k.imag())}; }

/// A complex variable as two real variables named <name>.re / <name>.im.
struct CVar {
  VarRef re, im;
};

inline CVar add_complex_variable(Problem& p, const std::string& name, Complex init,
                                 Bounds re_bounds = {}, Bounds im_bounds = {}) {
  return {p.add_variable(name + ".re", init.real(), re_bounds),
          p.add_variable(name + ".im", init.imag(), im_bounds)};
}

inline CExpr cvar(const Problem& p, const CVar& v) { return {p.var(v.re), p.var(v.im)}; }

/// Adds re = 0 and im = 0.
inline void add_complex_equality(Problem& p, const CExpr& e, const std::string& label) {
  p.add_equality(e.re, label + ".re");
  p.add_equality(e.im, label + ".im");
}

inline CExpr csum(std::span<const CExpr> terms) {
  std::vector<Expr> re, im;
  re.reserve(terms.size());
  im.reserve(terms.size());
  for (const auto& t : terms) {
    re.push_back(t.re);
    im.push_back(t.im);
  }
  return {sum(re), sum(im)};
}

}  // namespace fourwire::nlp
