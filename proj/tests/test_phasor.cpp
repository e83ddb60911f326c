#include <gtest/gtest.h>

#include <random>

#include "fourwire/phasor.hpp"

using namespace fourwire;

namespace {

constexpr double kEps = 1e-14;

void expect_near(Complex x, Complex y, double tol = kEps) {
  EXPECT_NEAR(x.real(), y.real(), tol);
  EXPECT_NEAR(x.imag(), y.imag(), tol);
}

PhaseVector random_phase(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  return {{d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}};
}

double rel_error(const PhaseVector& x, const PhaseVector& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    num = std::max(num, std::abs(x[i] - y[i]));
    den = std::max(den, std::abs(x[i]));
  }
  return num / den;
}

}  // namespace

TEST(Phasor, AlphaIsUnitRotation) {
  expect_near(alpha() * alpha() * alpha(), 1.0);
  EXPECT_NEAR(std::abs(alpha()), 1.0, kEps);
  EXPECT_NEAR(angle_deg(alpha()), 120.0, 1e-12);
}

TEST(Phasor, NodeIndexing) {
  NodePhasorVector u{1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(u[Conductor::n], Complex(4.0));
  u[Conductor::b] = 7.0;
  EXPECT_EQ(u.b, Complex(7.0));
  const PhaseVector v = u.phases();
  EXPECT_EQ(v.a, Complex(1.0));
  EXPECT_EQ(v.b, Complex(7.0));
  EXPECT_EQ(v.c, Complex(3.0));
}

TEST(Phasor, WyeVoltages) {
  const NodePhasorVector bal{1.0, alpha2(), alpha(), 0.0};
  const PhaseVector w = wye_voltages(bal);
  expect_near(w.a, 1.0);
  expect_near(w.b, alpha2());
  expect_near(w.c, alpha());

  const PhaseVector w2 = wye_voltages({{1.0, 0.1}, 1.0, 1.0, {0.0, 0.1}});
  expect_near(w2.a, 1.0);
  expect_near(w2.b, {1.0, -0.1});
  expect_near(w2.c, {1.0, -0.1});

  const Complex k{0.3, -0.7};
  const PhaseVector w3 = wye_voltages({k, k, k, k});
  expect_near(w3.a, 0.0);
  expect_near(w3.b, 0.0);
  expect_near(w3.c, 0.0);
}

TEST(Phasor, DeltaVoltagesOfBalancedSet) {
  const PhaseVector d = delta_voltages({1.0, alpha2(), alpha(), 0.0});
  const double s3 = std::sqrt(3.0);
  EXPECT_NEAR(std::abs(d.a), s3, 1e-14);
  EXPECT_NEAR(std::abs(d.b), s3, 1e-14);
  EXPECT_NEAR(std::abs(d.c), s3, 1e-14);
  EXPECT_NEAR(angle_deg(d.a), 30.0, 1e-12);
  EXPECT_NEAR(angle_deg(d.b), -90.0, 1e-12);
  EXPECT_NEAR(angle_deg(d.c), 150.0, 1e-12);
  const PhaseVector z = delta_voltages({2.0, 2.0, 2.0, 0.5});
  expect_near(z.sum(), 0.0);
  expect_near(z.a, 0.0);
}

TEST(Phasor, DeltaVoltagesSumToZero) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const NodePhasorVector u{{d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}};
    EXPECT_LT(std::abs(delta_voltages(u).sum()), 1e-13);
  }
}

TEST(Phasor, SequenceOfBasicSets) {
  const SequenceVector pos = to_sequence({1.0, alpha2(), alpha()});
  expect_near(pos.zero, 0.0);
  expect_near(pos.positive, 1.0);
  expect_near(pos.negative, 0.0);
  const SequenceVector zero = to_sequence({1.0, 1.0, 1.0});
  expect_near(zero.zero, 1.0);
  expect_near(zero.positive, 0.0);
  expect_near(zero.negative, 0.0);
  const PhaseVector back = from_sequence({0.0, 1.0, 0.0});
  expect_near(back.a, 1.0);
  expect_near(back.b, alpha2());
  expect_near(back.c, alpha());
  const PhaseVector ones = from_sequence({1.0, 0.0, 0.0});
  expect_near(ones.a, 1.0);
  expect_near(ones.b, 1.0);
  expect_near(ones.c, 1.0);
}

TEST(Phasor, SequenceRoundTrip) {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PhaseVector x = random_phase(rng);
    worst = std::max(worst, rel_error(x, from_sequence(to_sequence(x))));
    const SequenceVector s = to_sequence(x);
    const PhaseVector sx{s.zero, s.positive, s.negative};
    const SequenceVector s2 = to_sequence(from_sequence(s));
    worst = std::max(worst, rel_error(sx, {s2.zero, s2.positive, s2.negative}));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Phasor, ScaledPositiveSequence) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const Complex k{d(rng), d(rng)};
    const SequenceVector s = to_sequence(balanced_set(k));
    expect_near(s.zero, 0.0, 1e-13);
    expect_near(s.positive, k, 1e-13);
    expect_near(s.negative, 0.0, 1e-13);
  }
}

TEST(Phasor, ZeroSequenceIsMinusNeutralOverThree) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const PhaseVector p = random_phase(rng);
    const Complex n = -p.sum();
    EXPECT_LT(std::abs(to_sequence(p).zero - (-n / 3.0)), 1e-13);
  }
}

TEST(Phasor, PublishedThreeLegCurrentsHaveNoZeroSequence) {
  const PhaseVector i{{2.13, -0.413}, {-0.775, 0.476}, {-1.355, -0.063}};
  EXPECT_LT(std::abs(to_sequence(i).zero), 5e-4);
}

TEST(Phasor, Vuf) {
  EXPECT_NEAR(vuf(balanced_set(1.0)), 0.0, 1e-15);
  const PhaseVector u = from_sequence({0.0, 1.0, 0.02});
  EXPECT_NEAR(vuf(u), 0.02, 1e-14);
  EXPECT_THROW(vuf({1.0, 1.0, 1.0}), DegenerateRatio);
  try {
    vuf({0.0, 0.0, 0.0});
  } catch (const DegenerateRatio& e) {
    EXPECT_EQ(e.metric(), "VUF");
  }
}

// Regression fixture: GFL 3-leg magnitudes from the published volt-var
// validation at nominal wye angles, value recorded from the transform.
TEST(Phasor, VufRegressionFixture) {
  const PhaseVector u{polar_deg(0.9765, 0.0), polar_deg(1.0048, -120.0), polar_deg(1.0278, 120.0)};
  const SequenceVector s = to_sequence(u);
  // independent evaluation of the negative-sequence formula
  const Complex al = std::exp(Complex(0.0, 2.0 * std::numbers::pi / 3.0));
  const Complex u2 = (u.a + al * al * u.b + al * u.c) / 3.0;
  const Complex u1 = (u.a + al * u.b + al * al * u.c) / 3.0;
  EXPECT_NEAR(std::abs(s.negative), std::abs(u2), 1e-15);
  EXPECT_NEAR(vuf(u), std::abs(u2) / std::abs(u1), 1e-15);
  EXPECT_NEAR(vuf(u), 0.0147905, 5e-7);
}

TEST(Phasor, UnbalanceMetrics) {
  const UnbalanceMetrics bal = unbalance_metrics(balanced_set(2.0), {3.0, 3.0, 3.0}, {1.0, 1.0, 1.0});
  ASSERT_TRUE(bal.iuf.has_value());
  EXPECT_NEAR(*bal.iuf.value, 0.0, 1e-15);
  EXPECT_NEAR(bal.iuf2, 0.0, 1e-15);
  EXPECT_NEAR(*bal.piur.value, 0.0, 1e-15);
  EXPECT_NEAR(*bal.ppur.value, 0.0, 1e-15);
  EXPECT_NEAR(*bal.pqur.value, 0.0, 1e-15);

  const PhaseVector i{polar_deg(1.2, 0.0), polar_deg(1.0, -120.0), polar_deg(0.8, 120.0)};
  EXPECT_NEAR(*unbalance_metrics(i, {1, 1, 1}, {1, 1, 1}).piur.value, 0.2, 1e-14);

  const UnbalanceMetrics load = unbalance_metrics(i, {9.0, 4.5, 0.0}, {4.36, 2.18, 0.0});
  EXPECT_NEAR(*load.ppur.value, 1.0, 1e-14);
  EXPECT_NEAR(*load.pqur.value, 1.0, 1e-14);

  const UnbalanceMetrics zero = unbalance_metrics({0.0, 0.0, 0.0}, {0, 0, 0}, {0, 0, 0});
  EXPECT_FALSE(zero.iuf.has_value());
  EXPECT_EQ(*zero.iuf.error, MetricError::zero_denominator);
  EXPECT_FALSE(zero.piur.has_value());
  EXPECT_FALSE(zero.ppur.has_value());
  EXPECT_FALSE(zero.pqur.has_value());
}
