#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "harness/bounds.hpp"
#include "harness/error.hpp"
#include "harness/exact_sum.hpp"
#include "harness/kernel.hpp"
#include "harness/noise.hpp"
#include "harness/process.hpp"

namespace harness {

/// What one replica contributes at each measurement time.
enum class Observable {
  origin,          // height at the origin
  spatial_average  // average over all sites (torus only; unbiased by translation invariance)
};

/// Threshold scale b_n for tail counts; the count at K is #{x >= K b_n}.
enum class TailScale {
  automatic,     // chosen from (d, tail class), see tail_scale()
  sqrt_s_log_n,  // sqrt(s(n) log n)
  log_power,     // (log n)^p
  ell_L,         // L_n(gamma)
  absolute       // b_n = 1
};

inline std::vector<int> dyadic_times(int n_max) {
  std::vector<int> t;
  for (int n = 1; n <= n_max; n *= 2) t.push_back(n);
  return t;
}

struct ExperimentPlan {
  Kernel kernel = nearest_neighbor_kernel(1);
  NoiseModel noise = NoiseModel::gaussian(1.0);
  std::vector<ProcessKind> kinds{ProcessKind::clip};
  Geometry geometry = Geometry::cone(1, 1, 64);
  int n_max = 64;
  std::vector<int> times;  // empty: dyadic grid up to n_max
  std::int64_t replicas = 100;
  std::uint64_t seed = 0;
  std::uint64_t first_replica = 0;
  double start_height = 0.0;
  Observable observable = Observable::origin;
  std::vector<double> tail_K;
  TailScale tail_scale = TailScale::automatic;
  double tail_parameter = 0.0;  // p for log_power, gamma for ell_L
  bool track_scaled = false;    // accumulate e^{|x|/sqrt(s(n))}
  bool check_dominations = true;
  int workers = 1;

  std::vector<int> measurement_times() const { return times.empty() ? dyadic_times(n_max) : times; }

  void validate() const {
    if (replicas < 2) throw Error(ErrorCode::InvalidParams, "replicas must be >= 2");
    if (n_max < 1) throw Error(ErrorCode::InvalidParams, "n_max must be >= 1");
    if (kinds.empty()) throw Error(ErrorCode::InvalidParams, "at least one process kind is required");
    if (kernel.dim() != geometry.dim) throw Error(ErrorCode::InvalidParams, "kernel and geometry dimensions differ");
    if (kernel.range() > geometry.range) throw Error(ErrorCode::InvalidParams, "kernel range exceeds geometry range");
    if (geometry.is_cone() && geometry.extent < n_max)
      throw Error(ErrorCode::InvalidParams, "cone horizon " + std::to_string(geometry.extent) + " below n_max");
    if (observable == Observable::spatial_average && geometry.is_cone())
      throw Error(ErrorCode::InvalidParams, "spatial averaging needs a torus geometry");
    if (!(start_height >= 0.0)) throw Error(ErrorCode::NegativeStart, "start height must be >= 0");
    if (workers < 1) throw Error(ErrorCode::InvalidParams, "workers must be >= 1");
    auto t = measurement_times();
    if (!std::is_sorted(t.begin(), t.end()) || std::adjacent_find(t.begin(), t.end()) != t.end())
      throw Error(ErrorCode::InvalidParams, "measurement times must be strictly increasing");
    if (t.empty() || t.front() < 1 || t.back() > n_max)
      throw Error(ErrorCode::InvalidParams, "measurement times must lie in [1, n_max]");
    for (double k : tail_K)
      if (!(k > 0.0) || !std::isfinite(k)) throw Error(ErrorCode::InvalidParams, "tail K must be positive");
    if (tail_scale == TailScale::ell_L && !(tail_parameter > 1.0))
      throw Error(ErrorCode::InvalidGamma, "ell_L tail scale needs gamma > 1");
  }
};

/// Sufficient statistics at one measurement time for one kind.
struct PointEstimate {
  int n = 0;
  std::int64_t count = 0;
  ExactSum sum, sum_sq;        // of the observable x
  ExactSum m2_sum, m2_sum_sq;  // of the per-replica second-moment estimate
  ExactSum scaled_sum;         // of e^{|x|/sqrt(s(n))}
  std::vector<std::int64_t> tail_counts;

  double mean() const { return sum.value() / static_cast<double>(count); }

  static double sem_of(const ExactSum& s, const ExactSum& sq, std::int64_t count) {
    if (count < 2) return std::numeric_limits<double>::quiet_NaN();
    const double r = static_cast<double>(count);
    const double m = s.value() / r;
    const double var = std::max(0.0, (sq.value() - r * m * m) / (r - 1.0));
    return std::sqrt(var / r);
  }

  double sem() const { return sem_of(sum, sum_sq, count); }
  double m2() const { return m2_sum.value() / static_cast<double>(count); }
  double m2_sem() const { return sem_of(m2_sum, m2_sum_sq, count); }
  double scaled_mean() const { return scaled_sum.value() / static_cast<double>(count); }

  void merge(const PointEstimate& o) {
    count += o.count;
    sum.merge(o.sum);
    sum_sq.merge(o.sum_sq);
    m2_sum.merge(o.m2_sum);
    m2_sum_sq.merge(o.m2_sum_sq);
    scaled_sum.merge(o.scaled_sum);
    if (tail_counts.size() < o.tail_counts.size()) tail_counts.resize(o.tail_counts.size(), 0);
    for (std::size_t i = 0; i < o.tail_counts.size(); ++i) tail_counts[i] += o.tail_counts[i];
  }
};

struct KindSeries {
  ProcessKind kind = ProcessKind::clip;
  std::vector<PointEstimate> points;

  const PointEstimate& at(int n) const {
    for (const auto& p : points)
      if (p.n == n) return p;
    throw Error(ErrorCode::InvalidArgument, "time " + std::to_string(n) + " not measured");
  }
};

struct SeriesEstimate {
  std::vector<int> times;
  std::vector<double> tail_K;
  std::vector<double> tail_scale;  // b_n per measurement time
  std::vector<KindSeries> series;
  DominationTally tally;
  std::int64_t replicas = 0;

  const KindSeries& of(ProcessKind kind) const {
    for (const auto& s : series)
      if (s.kind == kind) return s;
    throw Error(ErrorCode::InvalidArgument, "kind not in series");
  }

  /// Adds another batch over a disjoint replica range.  All sums are exact,
  /// so the result is bit-identical for any grouping of batches.
  void merge(const SeriesEstimate& o) {
    if (series.empty()) {
      *this = o;
      return;
    }
    if (o.times != times || o.series.size() != series.size())
      throw Error(ErrorCode::InvalidArgument, "merging estimates of different experiments");
    for (std::size_t k = 0; k < series.size(); ++k)
      for (std::size_t i = 0; i < series[k].points.size(); ++i) series[k].points[i].merge(o.series[k].points[i]);
    tally.merge(o.tally);
    replicas += o.replicas;
  }
};

namespace detail {

inline double log_or_zero(double n) { return n > 1.0 ? std::log(n) : 0.0; }

}  // namespace detail

/// s(1..n_max) for the plan's geometry (periodic images folded on a torus).
inline std::vector<double> plan_collision_sums(const ExperimentPlan& plan) {
  const int top = plan.measurement_times().back();
  if (plan.geometry.is_cone()) return collision_sum(plan.kernel, top);
  return collision_sum_torus(plan.kernel, static_cast<int>(plan.geometry.side()), top);
}

/// b_n for one time.  The automatic rule uses sqrt(s(n) log n) for d <= 2;
/// for d >= 3 it uses (log n)^{max(1/alpha, 2/(2+d))}, or L_n(1 + 2/d) when
/// alpha = 1 + d/2, with alpha = infinity for bounded noise and n^{1/a} for
/// polynomial tails.
inline double tail_scale_at(const ExperimentPlan& plan, int n, double s_n) {
  const double ln = detail::log_or_zero(n);
  const int d = plan.geometry.dim;
  switch (plan.tail_scale) {
    case TailScale::absolute: return 1.0;
    case TailScale::sqrt_s_log_n: return std::sqrt(s_n * ln);
    case TailScale::log_power: return std::pow(ln, plan.tail_parameter);
    case TailScale::ell_L: return n >= 3 ? ell_L(plan.tail_parameter, n).L : ln;
    case TailScale::automatic: break;
  }
  if (d <= 2) return std::sqrt(s_n * ln);
  const auto tail = plan.noise.tail_class();
  if (tail.kind == TailClass::Kind::polynomial) return std::pow(static_cast<double>(n), 1.0 / tail.index);
  const double inv_alpha = tail.kind == TailClass::Kind::bounded ? 0.0 : 1.0 / tail.index;
  if (tail.kind == TailClass::Kind::stretched && std::abs(tail.index - (1.0 + d / 2.0)) < 1e-12 && n >= 3)
    return ell_L(1.0 + 2.0 / d, n).L;
  return std::pow(ln, std::max(inv_alpha, 2.0 / (2.0 + d)));
}

namespace detail {

inline SeriesEstimate empty_estimate(const ExperimentPlan& plan, const std::vector<int>& times,
                                     const std::vector<double>& scales) {
  SeriesEstimate e;
  e.times = times;
  e.tail_K = plan.tail_K;
  e.tail_scale = scales;
  for (ProcessKind k : plan.kinds) {
    KindSeries ks{k, {}};
    for (int n : times) {
      PointEstimate p;
      p.n = n;
      p.tail_counts.assign(plan.tail_K.size(), 0);
      ks.points.push_back(std::move(p));
    }
    e.series.push_back(std::move(ks));
  }
  return e;
}

}  // namespace detail

/// Monte Carlo over replicas first_replica .. first_replica + replicas - 1.
/// Each replica draws from its own counter-keyed noise field, and per-worker
/// partial estimates are merged exactly, so the result depends only on the
/// plan and not on the worker count or scheduling.
inline SeriesEstimate run_mc(const ExperimentPlan& plan) {
  plan.validate();
  const auto times = plan.measurement_times();
  std::vector<double> s;
  if (plan.track_scaled || (!plan.tail_K.empty() && plan.tail_scale != TailScale::absolute &&
                            plan.tail_scale != TailScale::log_power && plan.tail_scale != TailScale::ell_L))
    s = plan_collision_sums(plan);
  auto s_at = [&](int n) { return s.empty() ? 0.0 : s[static_cast<std::size_t>(n) - 1]; };
  std::vector<double> scales, thresholds_scale;
  for (int n : times) scales.push_back(plan.tail_K.empty() ? 0.0 : tail_scale_at(plan, n, s_at(n)));

  const Evolver ev(plan.geometry, plan.kernel);
  Observables obs;
  obs.check_dominations = plan.check_dominations;
  if (plan.observable == Observable::spatial_average) {
    obs.field_summaries = true;
    obs.summary_times.assign(times.begin(), times.end());
  }
  const int top = times.back();

  const int workers = static_cast<int>(std::min<std::int64_t>(plan.workers, plan.replicas));
  std::vector<SeriesEstimate> partial(static_cast<std::size_t>(workers), detail::empty_estimate(plan, times, scales));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&](int w) {
    try {
      auto& est = partial[static_cast<std::size_t>(w)];
      for (std::int64_t r = next++; r < plan.replicas; r = next++) {
        const NoiseField field(plan.seed, plan.first_replica + static_cast<std::uint64_t>(r));
        const auto traj = evolve_coupled(ev, plan.noise, field, plan.kinds, top, obs, plan.start_height);
        for (std::size_t k = 0; k < plan.kinds.size(); ++k) {
          for (std::size_t i = 0; i < times.size(); ++i) {
            const auto t = static_cast<std::size_t>(times[i]);
            auto& p = est.series[k].points[i];
            double x = traj.origin[k][t], x2 = x * x;
            if (plan.observable == Observable::spatial_average) {
              x = traj.summaries[k][t].mean;
              x2 = traj.summaries[k][t].mean_square;
            }
            ++p.count;
            p.sum.add(x);
            p.sum_sq.add(x * x);
            p.m2_sum.add(x2);
            p.m2_sum_sq.add(x2 * x2);
            if (plan.track_scaled) p.scaled_sum.add(std::exp(std::abs(x) / std::sqrt(s_at(times[i]))));
            for (std::size_t j = 0; j < plan.tail_K.size(); ++j)
              if (x >= plan.tail_K[j] * scales[i]) ++p.tail_counts[j];
          }
        }
        est.tally.merge(traj.tally);
        ++est.replicas;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = plan.replicas;
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SeriesEstimate total = std::move(partial.front());
  for (std::size_t w = 1; w < partial.size(); ++w) total.merge(partial[w]);
  return total;
}

struct TailRow {
  ProcessKind kind;
  int n;
  double K;
  double threshold;
  std::int64_t count;
  std::int64_t replicas;
  double p_hat;
  double ci_low;
  double ci_high;
};

/// Clopper-Pearson interval for a binomial proportion.
inline std::pair<double, double> clopper_pearson(std::int64_t successes, std::int64_t trials, double level = 0.95) {
  using boost::math::binomial_distribution;
  const double a = (1.0 - level) / 2.0;
  const auto n = static_cast<double>(trials), k = static_cast<double>(successes);
  return {binomial_distribution<>::find_lower_bound_on_p(n, k, a, binomial_distribution<>::clopper_pearson_exact_interval),
          binomial_distribution<>::find_upper_bound_on_p(n, k, a, binomial_distribution<>::clopper_pearson_exact_interval)};
}

/// Exceedance table with 95% binomial intervals for every kind, time and K.
inline std::vector<TailRow> tail_estimate(const SeriesEstimate& est) {
  std::vector<TailRow> rows;
  for (const auto& ks : est.series)
    for (std::size_t i = 0; i < ks.points.size(); ++i)
      for (std::size_t j = 0; j < est.tail_K.size(); ++j) {
        const auto& p = ks.points[i];
        const auto [lo, hi] = clopper_pearson(p.tail_counts[j], p.count);
        rows.push_back({ks.kind, p.n, est.tail_K[j], est.tail_K[j] * est.tail_scale[i], p.tail_counts[j], p.count,
                        static_cast<double>(p.tail_counts[j]) / static_cast<double>(p.count), lo, hi});
      }
  return rows;
}

inline std::vector<TailRow> tail_estimate(ExperimentPlan plan, const std::vector<double>& K_grid) {
  plan.tail_K = K_grid;
  return tail_estimate(run_mc(plan));
}

enum class FitTransform { loglog, log_n, sqrt_log_n, log_power, ell_L };

inline std::string_view to_string(FitTransform t) {
  switch (t) {
    case FitTransform::loglog: return "loglog";
    case FitTransform::log_n: return "log_n";
    case FitTransform::sqrt_log_n: return "sqrt_log_n";
    case FitTransform::log_power: return "log_power";
    case FitTransform::ell_L: return "ell_L";
  }
  return "?";
}

inline FitTransform parse_transform(std::string_view s) {
  if (s == "loglog") return FitTransform::loglog;
  if (s == "log_n") return FitTransform::log_n;
  if (s == "sqrt_log_n") return FitTransform::sqrt_log_n;
  if (s == "log_power") return FitTransform::log_power;
  if (s == "ell_L") return FitTransform::ell_L;
  throw Error(ErrorCode::InvalidArgument, "unknown fit transform '" + std::string(s) + "'");
}

struct FitReport {
  FitTransform transform = FitTransform::loglog;
  double parameter = 0.0;  // p or gamma where relevant
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  int n_min = 0;
};

/// OLS of y on x after the transform.  loglog regresses log mu on log n;
/// the others regress mu on the transformed time.
inline FitReport fit_exponent(const std::vector<double>& ns, const std::vector<double>& mus, FitTransform transform,
                              double parameter = 0.0) {
  if (ns.size() != mus.size()) throw Error(ErrorCode::InvalidArgument, "fit inputs differ in length");
  if (ns.size() < 5) throw Error(ErrorCode::InsufficientPoints, "fit needs at least 5 points");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double n = ns[i], ln = std::log(n);
    switch (transform) {
      case FitTransform::loglog:
        if (!(mus[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "loglog fit needs positive values");
        x.push_back(ln);
        y.push_back(std::log(mus[i]));
        continue;
      case FitTransform::log_n: x.push_back(ln); break;
      case FitTransform::sqrt_log_n: x.push_back(std::sqrt(ln)); break;
      case FitTransform::log_power: x.push_back(std::pow(ln, parameter)); break;
      case FitTransform::ell_L: x.push_back(ell_L(parameter, n).L); break;
    }
    y.push_back(mus[i]);
  }
  const auto m = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 1e-300 * (1.0 + mx * mx))) throw Error(ErrorCode::DegenerateDesign, "transform values are constant");
  FitReport f;
  f.transform = transform;
  f.parameter = parameter;
  f.points = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.slope_se = std::sqrt(sse / (m - 2.0) / sxx);
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  f.n_min = static_cast<int>(ns.front());
  return f;
}

/// Fits mu_n over the measured times n >= n_min.
inline FitReport fit_exponent(const KindSeries& series, FitTransform transform, double parameter = 0.0,
                              int n_min = 64) {
  std::vector<double> ns, mus;
  for (const auto& p : series.points)
    if (p.n >= n_min) {
      ns.push_back(p.n);
      mus.push_back(p.mean());
    }
  auto f = fit_exponent(ns, mus, transform, parameter);
  f.n_min = n_min;
  return f;
}

/// Best log-power fit over a grid of exponents (by R^2).
inline FitReport scan_log_power(const KindSeries& series, const std::vector<double>& exponents, int n_min = 64) {
  std::optional<FitReport> best;
  for (double p : exponents) {
    auto f = fit_exponent(series, FitTransform::log_power, p, n_min);
    if (!best || f.r_squared > best->r_squared) best = f;
  }
  if (!best) throw Error(ErrorCode::InvalidArgument, "empty exponent grid");
  return *best;
}

struct TrendReport {
  bool nondecreasing = true;
  std::vector<int> decrease_flags;  // n where mu_n exceeds mu_next beyond slack
  bool sublinear = true;
  std::vector<int> ratio_flags;  // n where mu_n/n rises beyond slack
  std::optional<double> scaled_ratio;  // max/min of mean e^{|x|/sqrt(s(n))}
  bool scaled_bounded = true;
};

/// Reported findings, never exceptions: mu_n nondecreasing and mu_n/n
/// decreasing beyond n = 8, each within slack 2 (SEM_n + SEM_next); and the
/// spread of the scaled exponential moment over n >= 4 when it was tracked.
inline TrendReport trend_checks(const KindSeries& series, double scaled_ratio_limit = 3.0) {
  TrendReport r;
  const auto& pts = series.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[i + 1];
    const double slack = 2.0 * (a.sem() + b.sem());
    if (a.mean() - b.mean() > slack) {
      r.nondecreasing = false;
      r.decrease_flags.push_back(a.n);
    }
    if (a.n >= 8 && b.mean() / b.n - a.mean() / a.n > slack / a.n) {
      r.sublinear = false;
      r.ratio_flags.push_back(a.n);
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& p : pts) {
    if (p.n < 4 || p.scaled_sum.value() == 0.0) continue;
    lo = std::min(lo, p.scaled_mean());
    hi = std::max(hi, p.scaled_mean());
  }
  if (hi > 0.0) {
    r.scaled_ratio = hi / lo;
    r.scaled_bounded = *r.scaled_ratio < scaled_ratio_limit;
  }
  return r;
}

struct CertifiedViolation {
  int n;
  double mean;
  double sem;
  double bound;
};

/// Times where mu_hat + z SEM falls below the certified bound m_n.
inline std::vector<CertifiedViolation> certified_bound_check(const KindSeries& series, const BoundCurve& m,
                                                             double z = 4.0) {
  std::vector<CertifiedViolation> v;
  for (const auto& p : series.points) {
    const double bound = m.at(p.n);
    if (p.mean() + z * p.sem() < bound) v.push_back({p.n, p.mean(), p.sem(), bound});
  }
  return v;
}

/// CSV rows `config_hash,kind,n,mean,sem,m2,replicas,tail_K,tail_count`;
/// one row per K when thresholds were configured, else empty tail columns.
inline void write_series_csv(std::ostream& out, const std::string& config_hash, const SeriesEstimate& est,
                             bool header = true) {
  if (header) out << "config_hash,kind,n,mean,sem,m2,replicas,tail_K,tail_count\n";
  for (const auto& ks : est.series)
    for (const auto& p : ks.points) {
      const std::string prefix = config_hash + "," + std::string(to_string(ks.kind)) + "," + std::to_string(p.n) +
                                 "," + format_double(p.mean()) + "," + format_double(p.sem()) + "," +
                                 format_double(p.m2()) + "," + std::to_string(p.count) + ",";
      if (est.tail_K.empty()) {
        out << prefix << ",\n";
        continue;
      }
      for (std::size_t j = 0; j < est.tail_K.size(); ++j)
        out << prefix << format_double(est.tail_K[j]) << ',' << p.tail_counts[j] << '\n';
    }
}

}  // namespace harness
