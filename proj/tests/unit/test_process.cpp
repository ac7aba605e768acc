#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "harness/process.hpp"

using namespace harness;

namespace {

const std::vector<ProcessKind> kAllKinds{ProcessKind::free, ProcessKind::clip, ProcessKind::freeze, ProcessKind::drift};

std::vector<std::vector<double>> run(const Geometry& g, const Kernel& k, const NoiseModel& m, std::uint64_t seed,
                                     int n, double r = 0.0) {
  return evolve_coupled(g, k, m, NoiseField(seed, 0), kAllKinds, n, {}, r).origin;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Geometry, ShapesAndLimits) {
  const auto c = Geometry::cone(2, 1, 10);
  EXPECT_EQ(c.side(), 21);
  EXPECT_EQ(c.site_count(), 441u);
  EXPECT_EQ(c.origin_index(), 10u * 21 + 10);
  const auto t = Geometry::torus(3, 1, 8);
  EXPECT_EQ(t.site_count(), 512u);
  EXPECT_EQ(code_of([] { Geometry::cone(5, 1, 3); }), ErrorCode::InvalidParams);
  EXPECT_EQ(code_of([] { Geometry::torus(1, 2, 4); }), ErrorCode::InvalidParams);
  EXPECT_EQ(code_of([] { Geometry::cone(1, 1, 40000); }), ErrorCode::TooLarge);
  EXPECT_EQ(code_of([] { Geometry::torus(3, 1, 1024); }), ErrorCode::TooLarge);
}

TEST(Step, HandComputedUpdates) {
  // Torus of side 5 with heights 0..4 and a prescribed noise row.
  const auto g = Geometry::torus(1, 1, 5);
  const Evolver ev(g, nearest_neighbor_kernel(1));
  const std::vector<double> h0{0, 1, 2, 3, 4};
  const NoiseRow row{1, {-3.0, -1.0, 0.5, -2.5, 1.0}};
  // neighbour means with wrap: (4+1)/2, (0+2)/2, (1+3)/2, (2+4)/2, (3+0)/2
  const std::vector<double> mean{2.5, 1.0, 2.0, 3.0, 1.5};
  std::vector<double> scratch;
  for (ProcessKind kind : kAllKinds) {
    auto s = init_flat(g, kind, 0.0);
    s.heights = h0;
    ev.step(s, row, scratch);
    for (std::size_t i = 0; i < 5; ++i) {
      const double x = mean[i] + row.values[i];
      double expect = x;
      if (kind == ProcessKind::clip) expect = x > 0 ? x : 0.0;
      if (kind == ProcessKind::freeze) expect = x > 0 ? x : h0[i];
      if (kind == ProcessKind::drift) expect = x > 0 ? x : mean[i];
      EXPECT_DOUBLE_EQ(s.heights[i], expect) << to_string(kind) << " site " << i;
    }
    EXPECT_EQ(s.time, 1);
  }
  // Free function form returns a new state.
  auto s = init_flat(g, ProcessKind::clip, 0.0);
  s.heights = h0;
  const auto next = step(s, row, nearest_neighbor_kernel(1));
  EXPECT_DOUBLE_EQ(next.heights[1], 0.0);
  EXPECT_EQ(s.time, 0);
}

TEST(Step, RejectsMismatchedRowsAndStarts) {
  const auto g = Geometry::cone(1, 1, 3);
  const Evolver ev(g, nearest_neighbor_kernel(1));
  auto s = init_flat(g, ProcessKind::clip, 0.0);
  std::vector<double> scratch;
  EXPECT_EQ(code_of([&] { ev.step(s, NoiseRow{2, std::vector<double>(g.site_count())}, scratch); }),
            ErrorCode::NoiseRowMismatch);
  EXPECT_EQ(code_of([&] { ev.step(s, NoiseRow{1, std::vector<double>(3)}, scratch); }), ErrorCode::NoiseRowMismatch);
  EXPECT_EQ(code_of([&] { init_flat(g, ProcessKind::clip, -1.0); }), ErrorCode::NegativeStart);
  const NoiseField field(1, 0);
  for (int t = 0; t < 3; ++t) ev.step(s, ev.make_row(field, NoiseModel::gaussian(1), s), scratch);
  EXPECT_THROW(ev.make_row(field, NoiseModel::gaussian(1), s), Error);
  EXPECT_EQ(code_of([&] { Evolver(g, nearest_neighbor_kernel(2)); }), ErrorCode::InvalidParams);
}

TEST(ProcessProperties, ConeValuesDoNotDependOnHorizon) {
  // The origin inside cone(n) is the infinite-lattice value, so enlarging
  // the box cannot change it.
  gen::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = gen::uniform_int(rng, 1, 2);
    const auto k = gen::symmetric_kernel(rng, dim, gen::uniform_int(rng, 1, 2));
    const auto m = gen::noise_model(rng);
    const int n = gen::uniform_int(rng, 1, dim == 1 ? 40 : 12);
    const auto small = run(Geometry::cone(dim, k.range(), n), k, m, trial, n);
    const auto big = run(Geometry::cone(dim, k.range(), n + gen::uniform_int(rng, 1, 6)), k, m, trial, n);
    EXPECT_EQ(small, big) << "trial " << trial << ' ' << m.to_string();
  }
}

TEST(ProcessProperties, TorusMatchesConeBeforeWrapping) {
  gen::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = gen::uniform_int(rng, 1, 3);
    const auto k = gen::symmetric_kernel(rng, dim, 1);
    const auto m = gen::noise_model(rng);
    const int n = gen::uniform_int(rng, 1, dim == 3 ? 6 : 15);
    const auto cone = run(Geometry::cone(dim, 1, n), k, m, 100 + trial, n);
    const auto torus = run(Geometry::torus(dim, 1, 2 * n + 1), k, m, 100 + trial, n);
    EXPECT_EQ(cone, torus) << "trial " << trial;
  }
}

TEST(ProcessProperties, DominationsHoldPathwise) {
  gen::Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int dim = gen::uniform_int(rng, 1, 3);
    const auto k = gen::symmetric_kernel(rng, dim, 1);
    const auto m = gen::noise_model(rng);
    const bool torus = gen::uniform_int(rng, 0, 1) == 1;
    const int n = dim == 3 ? 8 : 20;
    const auto g = torus ? Geometry::torus(dim, 1, dim == 3 ? 6 : 9) : Geometry::cone(dim, 1, n);
    const double r = 0.25 * gen::uniform_int(rng, 0, 4);
    const auto traj = evolve_coupled(g, k, m, NoiseField(trial, 7), kAllKinds, n, {}, r);
    SCOPED_TRACE(::testing::Message() << "trial " << trial << ' ' << m.to_string());
    EXPECT_GT(traj.tally.checks_wall_over_free, 0);
    EXPECT_EQ(traj.tally.violations(), 0);
    for (std::size_t t = 0; t <= static_cast<std::size_t>(n); ++t) {
      EXPECT_GE(traj.of(ProcessKind::clip)[t], std::max(0.0, traj.of(ProcessKind::free)[t]));
      EXPECT_GE(traj.of(ProcessKind::freeze)[t], traj.of(ProcessKind::clip)[t]);
      EXPECT_GE(traj.of(ProcessKind::drift)[t], traj.of(ProcessKind::clip)[t]);
    }
  }
}

TEST(ProcessProperties, FreeProcessShiftsWithStartHeight) {
  gen::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto k = gen::symmetric_kernel(rng, 1, 2);
    const auto m = gen::noise_model(rng);
    const auto g = Geometry::cone(1, 2, 30);
    const auto base = evolve_coupled(g, k, m, NoiseField(trial, 0), {ProcessKind::free}, 30).origin[0];
    const auto lifted = evolve_coupled(g, k, m, NoiseField(trial, 0), {ProcessKind::free}, 30, {}, 2.5).origin[0];
    for (std::size_t t = 0; t < base.size(); ++t) EXPECT_NEAR(lifted[t] - base[t], 2.5, 1e-12);
  }
}

TEST(ProcessProperties, WallProcessesArePositivelyHomogeneous) {
  // Doubling the noise scale doubles every height exactly (powers of two
  // commute with rounding), for every kind.
  const auto k = nearest_neighbor_kernel(2);
  const auto g = Geometry::cone(2, 1, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = run(g, k, NoiseModel::gaussian(1.0), seed, 12);
    const auto b = run(g, k, NoiseModel::gaussian(2.0), seed, 12);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t t = 0; t < a[i].size(); ++t) EXPECT_EQ(2.0 * a[i][t], b[i][t]);
  }
}

TEST(ProcessProperties, ShiftedFieldTranslatesTheSurface) {
  const auto g = Geometry::torus(2, 1, 7);
  const Evolver ev(g, nearest_neighbor_kernel(2));
  const NoiseField field(11, 3);
  const Offset shift{2, -1};
  const NoiseField moved = field.shifted(shift);
  auto a = init_flat(g, ProcessKind::clip, 0.0), b = a;
  std::vector<double> scratch;
  for (int t = 0; t < 9; ++t) {
    ev.step(a, ev.make_row(field, NoiseModel::laplace(1), a), scratch);
    ev.step(b, ev.make_row(moved, NoiseModel::laplace(1), b), scratch);
  }
  // b(i) = a(i - shift) with periodic indices.
  const auto side = g.side();
  for (std::int64_t x = 0; x < side; ++x)
    for (std::int64_t y = 0; y < side; ++y) {
      const std::int64_t sx = ((x - shift[0]) % side + side) % side, sy = ((y - shift[1]) % side + side) % side;
      EXPECT_EQ(b.heights[static_cast<std::size_t>(x * side + y)], a.heights[static_cast<std::size_t>(sx * side + sy)]);
    }
}

TEST(ProcessProperties, NoiseIsSharedAcrossGeometriesAndTimes) {
  const NoiseField field(5, 2);
  const auto m = NoiseModel::gaussian(1);
  const auto cone = Geometry::cone(1, 1, 4);
  const auto torus = Geometry::torus(1, 1, 9);
  const Evolver ec(cone, nearest_neighbor_kernel(1)), et(torus, nearest_neighbor_kernel(1));
  const auto rc = ec.make_row(field, m, init_flat(cone, ProcessKind::free, 0));
  const auto rt = et.make_row(field, m, init_flat(torus, ProcessKind::free, 0));
  for (int c = -4; c <= 4; ++c) {
    const double v = field.draw_at(m, 1, {c});
    // the cone only refreshes radius n_max - 1 when moving to time 1
    if (std::abs(c) <= 3) {
      EXPECT_EQ(rc.values[static_cast<std::size_t>(c + 4)], v);
    }
    EXPECT_EQ(rt.values[static_cast<std::size_t>(c + 4)], v);
  }
  // A run started at a negative time sees draws keyed by that time.
  const auto early = ec.make_row(field, m, init_flat(Geometry::cone(1, 1, 4), ProcessKind::clip, 0, -3));
  EXPECT_EQ(early.time, -2);
  EXPECT_EQ(early.values[4], field.draw_at(m, -2, {0}));
}

TEST(TimeShiftCoupling, HeightsNondecreasingInStartDepth) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto h = time_shift_coupling(Geometry::cone(1, 1, 40), nearest_neighbor_kernel(1), NoiseModel::gaussian(1),
                                       seed, 40);
    ASSERT_EQ(h.size(), 41u);
    EXPECT_EQ(h[0], 0.0);
    for (std::size_t k = 1; k < h.size(); ++k) EXPECT_GE(h[k], h[k - 1]) << "seed " << seed << " k " << k;
  }
  const auto h2 = time_shift_coupling(Geometry::cone(2, 1, 10), nearest_neighbor_kernel(2), NoiseModel::laplace(1), 3, 10);
  for (std::size_t k = 1; k < h2.size(); ++k) EXPECT_GE(h2[k], h2[k - 1]);
  EXPECT_THROW(time_shift_coupling(Geometry::cone(1, 1, 5), nearest_neighbor_kernel(1), NoiseModel::gaussian(1), 0, 6),
               Error);
}

TEST(Observables, SummariesAndCsv) {
  const auto g = Geometry::torus(1, 1, 16);
  Observables obs;
  obs.field_summaries = true;
  obs.summary_times = {2};
  const auto traj = evolve_coupled(g, nearest_neighbor_kernel(1), NoiseModel::rademacher(1), NoiseField(0, 0),
                                   {ProcessKind::clip}, 3, obs);
  const auto& s = traj.summaries[0][2];
  EXPECT_GE(s.min, 0.0);
  EXPECT_LE(s.min, s.mean);
  EXPECT_LE(s.mean, s.max);
  EXPECT_GE(s.mean_square, s.mean * s.mean);
  std::ostringstream out;
  write_trajectory_csv(out, 4, traj);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "replica,n,kind,origin_height");
  EXPECT_NE(out.str().find("\n4,0,clip,0\n"), std::string::npos);
}

TEST(ProcessKind, ParseNames) {
  EXPECT_EQ(parse_kind("wall"), ProcessKind::clip);
  EXPECT_EQ(parse_kind("drift"), ProcessKind::drift);
  EXPECT_THROW(parse_kind("up"), Error);
}
