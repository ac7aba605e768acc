#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "harness/bounds.hpp"
#include "harness/oracle.hpp"

using namespace harness;

TEST(HIteration, RademacherMatchesExactWallMeans) {
  const auto m = h_iteration(mean_excess_of(NoiseModel::rademacher(1)), 4);
  EXPECT_DOUBLE_EQ(m.at(0), 0.0);
  EXPECT_DOUBLE_EQ(m.at(1), 0.5);
  EXPECT_DOUBLE_EQ(m.at(2), 0.75);
  // m_n <= mu_n with mu_n from exact enumeration
  for (int n = 1; n <= 4; ++n) {
    const double mu = enumerate_exact(nearest_neighbor_kernel(1), NoiseModel::rademacher(1), ProcessKind::clip, n)
                          .mean.convert_to<double>();
    EXPECT_LE(m.at(n), mu + 1e-15) << "n=" << n;
  }
}

TEST(HIteration, IncreasingAndAboveFlow) {
  // The iteration is an explicit Euler scheme for the flow with a
  // nonincreasing right side, so it runs ahead of nu at integer times:
  // nu(n) <= m_n <= mu_n.
  gen::Rng rng(12);
  for (int trial = 0; trial < 12; ++trial) {
    const auto noise = gen::noise_model(rng);
    const auto G = mean_excess_of(noise);
    const auto m = h_iteration(G, 30);
    const auto nu = nu_ode(G, 30.0);
    for (int n = 1; n <= 30; ++n) {
      EXPECT_GT(m.at(n), m.at(n - 1)) << noise.to_string();
      EXPECT_GE(m.at(n), nu.at(n) - 1e-9) << noise.to_string() << " n=" << n;
    }
  }
}

TEST(NuOde, ClosedForms) {
  const auto lap = nu_ode(mean_excess_of(NoiseModel::laplace(1)), 64.0);
  const auto uni = nu_ode(mean_excess_of(NoiseModel::uniform(1)), 64.0);
  for (const auto& p : lap.points) EXPECT_NEAR(p.value, std::log1p(p.x / 2.0), 1e-7) << p.x;
  for (const auto& p : uni.points) EXPECT_NEAR(p.value, p.x / (p.x + 4.0), 1e-7) << p.x;
  EXPECT_EQ(lap.points.size(), 65u);
  const auto frac = nu_ode(mean_excess_of(NoiseModel::laplace(1)), 2.5);
  EXPECT_EQ(frac.points.back().x, 2.5);
  EXPECT_NEAR(frac.points.back().value, std::log1p(1.25), 1e-9);
}

TEST(NuOde, GivesUpWhenNotConverging) {
  StepControl strict;
  strict.tolerance = 0.0;
  strict.max_halvings = 3;
  try {
    nu_ode(mean_excess_of(NoiseModel::gaussian(1)), 10.0, strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepUnderflow);
  }
  EXPECT_THROW(nu_ode(mean_excess_of(NoiseModel::gaussian(1)), -1.0), Error);
}

TEST(EllL, SolvesDefiningEquation) {
  const auto r = ell_L(2.0, 16.0);
  EXPECT_NEAR(r.ell, 2.0, 1e-10);
  EXPECT_NEAR(r.L, std::log(16.0) / 2.0, 1e-10);
  for (double gamma : {1.1, 1.5, 2.0, 3.0, 7.0})
    for (double n : {3.0, 10.0, 1e3, 1e6, 1e12}) {
      const auto e = ell_L(gamma, n);
      EXPECT_NEAR(std::pow(e.ell, gamma) * std::log(e.ell), std::log(n), 1e-10 * std::log(n));
      EXPECT_GT(e.ell, 1.0);
    }
  EXPECT_THROW(ell_L(1.0, 100), Error);
  try {
    ell_L(0.5, 100);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidGamma);
  }
}

TEST(EllL, SandwichBehaviour) {
  // The upper comparison holds whenever ell <= log n; the lower one needs
  // ell >= e, i.e. log n >= e^gamma.
  for (double gamma : {1.5, 2.0, 3.0})
    for (double n : {1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e20, 1e40}) {
      const auto e = ell_L(gamma, n);
      const auto [lo, hi] = ell_L_sandwich(gamma, n);
      if (e.ell <= std::log(n)) {
        EXPECT_LE(e.L, hi * (1 + 1e-12)) << gamma << ' ' << n;
      }
      if (std::log(n) >= std::exp(gamma)) {
        EXPECT_GE(e.L, lo * (1 - 1e-12)) << gamma << ' ' << n;
      }
    }
  // The small-n counterexample: gamma = 2, n = 16 has L = log 2 * 2 < sqrt(log 16).
  const auto e = ell_L(2.0, 16.0);
  EXPECT_LT(e.L, ell_L_sandwich(2.0, 16.0).first);
}

TEST(Envelope, CasesByDimension) {
  const std::vector<double> grid{16, 256, 4096};
  const auto [lo1, hi1] = growth_envelope(1, 2.0, grid);
  EXPECT_DOUBLE_EQ(lo1.at(16), 2.0);
  EXPECT_DOUBLE_EQ(hi1.at(16), 2.0 * std::sqrt(std::log(16.0)));

  const auto [lo2, hi2] = growth_envelope(2, 1.0, grid);
  EXPECT_DOUBLE_EQ(lo2.at(256), std::log(256.0));
  EXPECT_DOUBLE_EQ(hi2.at(256), std::log(256.0));
  const auto [lo2b, hi2b] = growth_envelope(2, 4.0, grid);
  EXPECT_DOUBLE_EQ(lo2b.at(256), std::sqrt(std::log(256.0)));

  const auto [lo3, hi3] = growth_envelope(3, 1.0, grid);  // matched orders
  EXPECT_DOUBLE_EQ(lo3.at(4096), hi3.at(4096));
  const auto [lo3g, hi3g] = growth_envelope(3, 2.0, grid);
  EXPECT_DOUBLE_EQ(lo3g.at(4096), std::sqrt(std::log(4096.0)));
  EXPECT_DOUBLE_EQ(hi3g.at(4096), std::sqrt(std::log(4096.0)));
  const auto [lo3c, hi3c] = growth_envelope(3, 2.5, grid);  // alpha = 1 + d/2
  EXPECT_DOUBLE_EQ(lo3c.at(4096), std::pow(std::log(4096.0), 0.4));
  EXPECT_DOUBLE_EQ(hi3c.at(4096), ell_L(5.0 / 3.0, 4096).L);
  EXPECT_EQ(hi3c.provenance, "repulsion_d3_critical");
  const auto [lo4, hi4] = growth_envelope(4, 4.0, grid);
  EXPECT_DOUBLE_EQ(hi4.at(16), std::pow(std::log(16.0), 1.0 / 3.0));

  for (const auto& [lo, hi] : {growth_envelope(1, 1.5, grid), growth_envelope(2, 1.5, grid),
                               growth_envelope(3, 1.5, grid), growth_envelope(5, 2.0, grid)})
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LE(lo.points[i].value, hi.points[i].value * (1 + 1e-12));

  try {
    growth_envelope(2, 0.9, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedCase);
  }
  EXPECT_DOUBLE_EQ(polynomial_tail_envelope(4.0, grid).at(256), 4.0);
  EXPECT_THROW(polynomial_tail_envelope(1.0, grid), Error);
  EXPECT_DOUBLE_EQ(stretched_tail_envelope(2.0, grid).at(16), std::sqrt(std::log(16.0)));
}
