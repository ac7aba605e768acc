#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "harness/error.hpp"
#include "harness/kernel.hpp"
#include "harness/noise.hpp"
#include "harness/random.hpp"

namespace harness {

/// free: Y (no wall); clip: W = (PW + e)^+; freeze: W' keeps the old height
/// when the update would be non-positive; drift: W'' keeps the noiseless
/// average in that case.
enum class ProcessKind { free, clip, freeze, drift };

inline constexpr std::string_view to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::free: return "free";
    case ProcessKind::clip: return "clip";
    case ProcessKind::freeze: return "freeze";
    case ProcessKind::drift: return "drift";
  }
  return "?";
}

inline ProcessKind parse_kind(std::string_view name) {
  if (name == "free") return ProcessKind::free;
  if (name == "clip" || name == "wall") return ProcessKind::clip;
  if (name == "freeze") return ProcessKind::freeze;
  if (name == "drift") return ProcessKind::drift;
  throw Error(ErrorCode::InvalidParams, "unknown process kind '" + std::string(name) + "'");
}

/// Finite truncation of Z^d.
///
/// cone(n_max): the box of max-norm radius v * n_max.  A run of n <= n_max
/// steps only updates the shrinking region of radius v (n_max - t) at time t,
/// which is exactly the dependence cone of the origin at time n_max, so the
/// origin value at every time up to n_max equals the infinite-lattice value.
///
/// torus(L): periodic box of side L; an approximation for long runs.
struct Geometry {
  enum class Mode { cone, torus };

  Mode mode = Mode::cone;
  int dim = 1;
  int range = 1;
  int extent = 0;  // n_max for cone, side L for torus

  static constexpr int kMaxDim = 4;
  static constexpr std::int64_t kMaxSide = 65535;

  static Geometry cone(int dim, int range, int n_max) {
    Geometry g{Mode::cone, dim, range, n_max};
    g.check();
    return g;
  }

  static Geometry torus(int dim, int range, int side) {
    Geometry g{Mode::torus, dim, range, side};
    g.check();
    return g;
  }

  bool is_cone() const noexcept { return mode == Mode::cone; }
  int n_max() const noexcept { return extent; }

  std::int64_t side() const noexcept {
    return is_cone() ? 2 * static_cast<std::int64_t>(range) * extent + 1 : extent;
  }

  /// Storage index of coordinate 0 along each axis.
  std::int64_t center() const noexcept { return is_cone() ? static_cast<std::int64_t>(range) * extent : extent / 2; }

  std::size_t site_count() const noexcept {
    std::size_t n = 1;
    for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(side());
    return n;
  }

  std::vector<std::int64_t> strides() const {
    std::vector<std::int64_t> s(dim, 1);
    for (int k = dim - 2; k >= 0; --k) s[k] = s[k + 1] * side();
    return s;
  }

  std::size_t origin_index() const {
    std::size_t idx = 0;
    for (int k = 0; k < dim; ++k) idx = idx * static_cast<std::size_t>(side()) + static_cast<std::size_t>(center());
    return idx;
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;

 private:
  void check() const {
    if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::InvalidParams, "geometry dimension must be in 1..4");
    if (range < 1) throw Error(ErrorCode::InvalidParams, "kernel range must be >= 1");
    if (mode == Mode::cone && extent < 0) throw Error(ErrorCode::InvalidParams, "cone horizon must be >= 0");
    if (mode == Mode::torus && extent < 2 * range + 1)
      throw Error(ErrorCode::InvalidParams, "torus side must be >= 2v+1");
    if (side() > kMaxSide) throw Error(ErrorCode::TooLarge, "geometry side exceeds 65535");
    double total = 1.0;
    for (int k = 0; k < dim; ++k) total *= static_cast<double>(side());
    if (total > static_cast<double>(std::size_t{1} << 28)) throw Error(ErrorCode::TooLarge, "geometry exceeds 2^28 sites");
  }
};

/// The shared disorder: the draw at (time, site) is a pure function of
/// (seed, replica, time, site coordinates), so every process coupled on the
/// same field sees identical noise, including at negative times.
class NoiseField {
 public:
  NoiseField(std::uint64_t seed, std::uint64_t replica) : seed_(seed), replica_(replica), key_(replica_key(seed, replica)) {}

  /// Field translated by `shift`: the draw at site i is the unshifted draw at i - shift.
  NoiseField shifted(Offset shift) const {
    NoiseField f = *this;
    f.shift_ = std::move(shift);
    return f;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replica() const noexcept { return replica_; }
  std::uint64_t key() const noexcept { return key_; }
  const Offset& shift() const noexcept { return shift_; }

  /// Packs coordinates (each in [-32768, 32767]) into 16-bit fields, last axis lowest.
  static std::uint64_t site_code(const Offset& coords) {
    std::uint64_t code = 0;
    for (int c : coords) code = (code << 16) | static_cast<std::uint64_t>(c + 32768);
    return code;
  }

  /// Draw at absolute lattice coordinates (no shift or wrapping applied).
  double draw_at(const NoiseModel& model, std::int64_t time, const Offset& coords) const {
    auto stream = site_stream(row_key(key_, time), site_code(coords));
    return model.sample(stream);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t replica_;
  std::uint64_t key_;
  Offset shift_;
};

/// Noise for one update: `values[site]` is the draw used when moving to `time`.
struct NoiseRow {
  std::int64_t time = 0;
  std::vector<double> values;
};

struct SurfaceState {
  Geometry geometry;
  ProcessKind kind = ProcessKind::free;
  std::int64_t time = 0;
  std::int64_t start_time = 0;
  double start_height = 0.0;
  /// Heights by storage index; in cone mode only the current region is meaningful.
  std::vector<double> heights;

  double origin() const { return heights[geometry.origin_index()]; }
};

inline SurfaceState init_flat(const Geometry& geometry, ProcessKind kind, double r, std::int64_t start_time = 0) {
  if (!(r >= 0.0)) throw Error(ErrorCode::NegativeStart, "start height must be >= 0");
  SurfaceState s;
  s.geometry = geometry;
  s.kind = kind;
  s.time = start_time;
  s.start_time = start_time;
  s.start_height = r;
  s.heights.assign(geometry.site_count(), r);
  return s;
}

struct FieldSummary {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  double mean_square = 0.0;
};

/// Precomputed stepping machinery for one (geometry, kernel) pair.
class Evolver {
 public:
  Evolver(const Geometry& geometry, const Kernel& kernel) : geometry_(geometry), kernel_(kernel), strides_(geometry.strides()) {
    if (kernel.dim() != geometry.dim) throw Error(ErrorCode::InvalidParams, "kernel and geometry dimensions differ");
    if (kernel.range() > geometry.range) throw Error(ErrorCode::InvalidParams, "kernel range exceeds geometry range");
    for (const auto& e : kernel.entries()) weights_.push_back(e.weight);
    if (geometry.is_cone()) {
      for (const auto& e : kernel.entries()) {
        std::int64_t d = 0;
        for (int k = 0; k < geometry.dim; ++k) d += e.offset[k] * strides_[k];
        deltas_.push_back(d);
      }
    } else {
      const auto n = geometry.site_count();
      const auto side = geometry.side();
      neighbors_.resize(n * weights_.size());
      Offset pos(geometry.dim, 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t e = 0; e < weights_.size(); ++e) {
          std::int64_t idx = 0;
          for (int k = 0; k < geometry.dim; ++k) {
            const std::int64_t c = ((pos[k] + kernel.entries()[e].offset[k]) % side + side) % side;
            idx = idx * side + c;
          }
          neighbors_[i * weights_.size() + e] = static_cast<std::uint32_t>(idx);
        }
        for (int k = geometry.dim - 1; k >= 0; --k) {
          if (++pos[k] < side) break;
          pos[k] = 0;
        }
      }
    }
  }

  const Geometry& geometry() const noexcept { return geometry_; }
  const Kernel& kernel() const noexcept { return kernel_; }

  /// Radius of the region updated when moving to `time` (cone mode).
  std::int64_t region_radius(const SurfaceState& state, std::int64_t time) const {
    const std::int64_t elapsed = time - state.start_time;
    return static_cast<std::int64_t>(geometry_.range) * (geometry_.extent - elapsed);
  }

  /// Calls f(start_index, length, coords_of_start) for each contiguous run of
  /// sites along the last axis inside the box of the given radius (cone), or
  /// each full row (torus).
  template <class F>
  void for_each_run(std::int64_t radius, F&& f) const {
    const int d = geometry_.dim;
    const std::int64_t c = geometry_.center();
    std::int64_t lo, hi;
    if (geometry_.is_cone()) {
      lo = c - radius;
      hi = c + radius;
    } else {
      lo = 0;
      hi = geometry_.side() - 1;
    }
    std::vector<std::int64_t> pos(d, lo);
    Offset coords(d);
    while (true) {
      std::int64_t start = 0;
      for (int k = 0; k < d; ++k) {
        start += pos[k] * strides_[k];
        coords[k] = static_cast<int>(pos[k] - c);
      }
      f(static_cast<std::size_t>(start), static_cast<std::size_t>(hi - lo + 1), coords);
      int k = d - 2;
      for (; k >= 0; --k) {
        if (++pos[k] <= hi) break;
        pos[k] = lo;
      }
      if (k < 0) break;
    }
  }

  /// Fills `row` with the noise for the update of `state` to time state.time + 1.
  void fill_row(const NoiseField& field, const NoiseModel& model, const SurfaceState& state, NoiseRow& row) const {
    const std::int64_t t = state.time + 1;
    check_horizon(state, t);
    row.time = t;
    row.values.resize(geometry_.site_count());
    const std::uint64_t rk = row_key(field.key(), t);
    const bool shifted = !field.shift().empty();
    const std::int64_t side = geometry_.side();
    const std::int64_t center = geometry_.center();
    for_each_run(region_radius(state, t), [&](std::size_t start, std::size_t len, const Offset& coords) {
      if (!geometry_.is_cone() && shifted) {
        Offset c = coords;
        for (std::size_t i = 0; i < len; ++i) {
          Offset w(c.size());
          for (std::size_t k = 0; k < c.size(); ++k) {
            const std::int64_t raw = c[k] - field.shift()[k] + center;
            w[k] = static_cast<int>(((raw % side) + side) % side - center);
          }
          auto stream = site_stream(rk, NoiseField::site_code(w));
          row.values[start + i] = model.sample(stream);
          ++c.back();
        }
        return;
      }
      Offset c = coords;
      if (shifted)
        for (std::size_t k = 0; k < c.size(); ++k) c[k] -= field.shift()[k];
      const std::uint64_t code = NoiseField::site_code(c);
      double* out = row.values.data() + start;
      model.with_family([&](auto tag) {
        for (std::size_t i = 0; i < len; ++i) {
          auto stream = site_stream(rk, code + i);
          out[i] = model.template sample_as<decltype(tag)::value>(stream);
        }
      });
    });
  }

  NoiseRow make_row(const NoiseField& field, const NoiseModel& model, const SurfaceState& state) const {
    NoiseRow row;
    fill_row(field, model, state, row);
    return row;
  }

  /// Advances `state` by one step; `scratch` is reused storage.
  void step(SurfaceState& state, const NoiseRow& row, std::vector<double>& scratch) const {
    const std::int64_t t = state.time + 1;
    if (row.time != t)
      throw Error(ErrorCode::NoiseRowMismatch, "noise row for time " + std::to_string(row.time) + " applied at time " + std::to_string(t));
    if (row.values.size() != state.heights.size()) throw Error(ErrorCode::NoiseRowMismatch, "noise row size differs from geometry");
    if (!(state.geometry == geometry_)) throw Error(ErrorCode::InvalidArgument, "state geometry differs from evolver geometry");
    check_horizon(state, t);
    scratch.resize(state.heights.size());
    switch (state.kind) {
      case ProcessKind::free: apply<ProcessKind::free>(state, row, scratch); break;
      case ProcessKind::clip: apply<ProcessKind::clip>(state, row, scratch); break;
      case ProcessKind::freeze: apply<ProcessKind::freeze>(state, row, scratch); break;
      case ProcessKind::drift: apply<ProcessKind::drift>(state, row, scratch); break;
    }
    state.heights.swap(scratch);
    state.time = t;
  }

  /// Calls f(index) for every site of the region that is current at state.time.
  template <class F>
  void for_each_site(const SurfaceState& state, F&& f) const {
    for_each_run(region_radius(state, state.time), [&](std::size_t start, std::size_t len, const Offset&) {
      for (std::size_t i = 0; i < len; ++i) f(start + i);
    });
  }

  FieldSummary summarize(const SurfaceState& state) const {
    FieldSummary s{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 0.0, 0.0};
    double total = 0.0, total_sq = 0.0;
    std::size_t count = 0;
    for_each_site(state, [&](std::size_t i) {
      const double h = state.heights[i];
      s.max = std::max(s.max, h);
      s.min = std::min(s.min, h);
      total += h;
      total_sq += h * h;
      ++count;
    });
    s.mean = total / static_cast<double>(count);
    s.mean_square = total_sq / static_cast<double>(count);
    return s;
  }

 private:
  void check_horizon(const SurfaceState& state, std::int64_t t) const {
    if (geometry_.is_cone() && t - state.start_time > geometry_.extent)
      throw Error(ErrorCode::InvalidArgument, "step beyond the cone horizon n_max=" + std::to_string(geometry_.extent));
  }

  template <ProcessKind Kind>
  static double update(double mean, double noise, double old) {
    const double x = mean + noise;
    if constexpr (Kind == ProcessKind::free) {
      return x;
    } else if constexpr (Kind == ProcessKind::clip) {
      return x > 0.0 ? x : 0.0;
    } else if constexpr (Kind == ProcessKind::freeze) {
      return x > 0.0 ? x : old;
    } else {
      return x > 0.0 ? x : mean;
    }
  }

  template <ProcessKind Kind>
  void apply(const SurfaceState& state, const NoiseRow& row, std::vector<double>& out) const {
    const double* h = state.heights.data();
    const double* e = row.values.data();
    double* o = out.data();
    const std::size_t nk = weights_.size();
    const double* w = weights_.data();
    if (geometry_.is_cone()) {
      const std::int64_t* dl = deltas_.data();
      for_each_run(region_radius(state, state.time + 1), [&](std::size_t start, std::size_t len, const Offset&) {
        for (std::size_t i = start; i < start + len; ++i) {
          double m = 0.0;
          for (std::size_t k = 0; k < nk; ++k) m += w[k] * h[static_cast<std::int64_t>(i) + dl[k]];
          o[i] = update<Kind>(m, e[i], h[i]);
        }
      });
    } else {
      const std::uint32_t* nb = neighbors_.data();
      const std::size_t n = state.heights.size();
      for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        const std::uint32_t* row_nb = nb + i * nk;
        for (std::size_t k = 0; k < nk; ++k) m += w[k] * h[row_nb[k]];
        o[i] = update<Kind>(m, e[i], h[i]);
      }
    }
  }

  Geometry geometry_;
  Kernel kernel_;
  std::vector<std::int64_t> strides_;
  std::vector<double> weights_;
  std::vector<std::int64_t> deltas_;
  std::vector<std::uint32_t> neighbors_;
};

/// One step of the given process; convenience wrapper around Evolver.
inline SurfaceState step(const SurfaceState& state, const NoiseRow& noise_row, const Kernel& kernel) {
  Evolver ev(state.geometry, kernel);
  SurfaceState next = state;
  std::vector<double> scratch;
  ev.step(next, noise_row, scratch);
  return next;
}

/// Pathwise ordering checks W >= Y, W' >= W, W'' >= W over every updated site.
struct DominationTally {
  std::int64_t checks_wall_over_free = 0;
  std::int64_t violations_wall_over_free = 0;
  std::int64_t checks_freeze_over_wall = 0;
  std::int64_t violations_freeze_over_wall = 0;
  std::int64_t checks_drift_over_wall = 0;
  std::int64_t violations_drift_over_wall = 0;

  std::int64_t violations() const {
    return violations_wall_over_free + violations_freeze_over_wall + violations_drift_over_wall;
  }

  void merge(const DominationTally& o) {
    checks_wall_over_free += o.checks_wall_over_free;
    violations_wall_over_free += o.violations_wall_over_free;
    checks_freeze_over_wall += o.checks_freeze_over_wall;
    violations_freeze_over_wall += o.violations_freeze_over_wall;
    checks_drift_over_wall += o.checks_drift_over_wall;
    violations_drift_over_wall += o.violations_drift_over_wall;
  }
};

struct Observables {
  bool field_summaries = false;
  /// Times at which to summarize; empty means every step.
  std::vector<std::int64_t> summary_times;
  bool check_dominations = true;
};

struct Trajectory {
  std::vector<ProcessKind> kinds;
  /// origin[k][t] = origin height of kinds[k] at time t = 0..n.
  std::vector<std::vector<double>> origin;
  /// summaries[k][t], filled at the requested times when summaries are on.
  std::vector<std::vector<FieldSummary>> summaries;
  DominationTally tally;

  const std::vector<double>& of(ProcessKind kind) const {
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == kind) return origin[k];
    throw Error(ErrorCode::InvalidArgument, "kind not in trajectory");
  }
};

/// Evolves every requested process in lockstep on the same noise field.
inline Trajectory evolve_coupled(const Evolver& ev, const NoiseModel& model, const NoiseField& field,
                                 const std::vector<ProcessKind>& kinds, std::int64_t n, const Observables& obs = {},
                                 double r = 0.0) {
  if (kinds.empty()) throw Error(ErrorCode::InvalidArgument, "no process kinds requested");
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative step count");
  const Geometry& geometry = ev.geometry();
  if (geometry.is_cone() && n > geometry.extent)
    throw Error(ErrorCode::InvalidArgument, "n exceeds cone horizon " + std::to_string(geometry.extent));

  Trajectory traj;
  traj.kinds = kinds;
  std::vector<SurfaceState> states;
  for (ProcessKind k : kinds) states.push_back(init_flat(geometry, k, r));
  const std::size_t origin = geometry.origin_index();
  traj.origin.assign(kinds.size(), std::vector<double>(static_cast<std::size_t>(n) + 1));
  std::vector<char> summarize_at(static_cast<std::size_t>(n) + 1, obs.summary_times.empty() ? 1 : 0);
  for (auto t : obs.summary_times)
    if (t >= 0 && t <= n) summarize_at[static_cast<std::size_t>(t)] = 1;
  if (obs.field_summaries) traj.summaries.assign(kinds.size(), std::vector<FieldSummary>(static_cast<std::size_t>(n) + 1));
  auto record = [&](std::size_t t) {
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      traj.origin[k][t] = states[k].heights[origin];
      if (obs.field_summaries && summarize_at[t]) traj.summaries[k][t] = ev.summarize(states[k]);
    }
  };
  record(0);

  auto index_of = [&](ProcessKind kind) -> int {
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == kind) return static_cast<int>(k);
    return -1;
  };
  const int i_free = index_of(ProcessKind::free), i_clip = index_of(ProcessKind::clip);
  const int i_freeze = index_of(ProcessKind::freeze), i_drift = index_of(ProcessKind::drift);

  auto tally_pair = [&](int upper, int lower, std::int64_t& checks, std::int64_t& violations) {
    if (upper < 0 || lower < 0) return;
    const auto& hu = states[static_cast<std::size_t>(upper)].heights;
    const auto& hl = states[static_cast<std::size_t>(lower)].heights;
    ev.for_each_site(states[static_cast<std::size_t>(upper)], [&](std::size_t i) {
      ++checks;
      if (hu[i] < hl[i]) ++violations;
    });
  };

  NoiseRow row;
  std::vector<double> scratch;
  for (std::int64_t t = 1; t <= n; ++t) {
    ev.fill_row(field, model, states.front(), row);
    for (auto& s : states) ev.step(s, row, scratch);
    record(static_cast<std::size_t>(t));
    if (obs.check_dominations) {
      auto& d = traj.tally;
      tally_pair(i_clip, i_free, d.checks_wall_over_free, d.violations_wall_over_free);
      tally_pair(i_freeze, i_clip, d.checks_freeze_over_wall, d.violations_freeze_over_wall);
      tally_pair(i_drift, i_clip, d.checks_drift_over_wall, d.violations_drift_over_wall);
    }
  }
  return traj;
}

inline Trajectory evolve_coupled(const Geometry& geometry, const Kernel& kernel, const NoiseModel& model,
                                 const NoiseField& field, const std::vector<ProcessKind>& kinds, std::int64_t n,
                                 const Observables& obs = {}, double r = 0.0) {
  return evolve_coupled(Evolver(geometry, kernel), model, field, kinds, n, obs, r);
}

/// h_k = origin height at time 0 of the wall process started flat at time -k,
/// for k = 0..k_max, every run driven by the same noise field.
inline std::vector<double> time_shift_coupling(const Geometry& geometry, const Kernel& kernel, const NoiseModel& model,
                                               std::uint64_t seed, int k_max, std::uint64_t replica = 0) {
  if (!geometry.is_cone() || geometry.extent < k_max)
    throw Error(ErrorCode::InvalidParams, "time_shift_coupling needs a cone geometry sized for k_max");
  const NoiseField field(seed, replica);
  std::vector<double> h;
  h.reserve(static_cast<std::size_t>(k_max) + 1);
  NoiseRow row;
  std::vector<double> scratch;
  for (int k = 0; k <= k_max; ++k) {
    const Evolver ev(Geometry::cone(geometry.dim, geometry.range, k), kernel);
    auto state = init_flat(ev.geometry(), ProcessKind::clip, 0.0, -k);
    while (state.time < 0) {
      ev.fill_row(field, model, state, row);
      ev.step(state, row, scratch);
    }
    h.push_back(state.origin());
  }
  return h;
}

/// CSV rows `replica,n,kind,origin_height`.
inline void write_trajectory_csv(std::ostream& out, std::uint64_t replica, const Trajectory& traj, bool header = true) {
  if (header) out << "replica,n,kind,origin_height\n";
  for (std::size_t k = 0; k < traj.kinds.size(); ++k)
    for (std::size_t t = 0; t < traj.origin[k].size(); ++t)
      out << replica << ',' << t << ',' << to_string(traj.kinds[k]) << ',' << format_double(traj.origin[k][t]) << '\n';
}

}  // namespace harness
