#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "harness/error.hpp"
#include "harness/noise.hpp"

namespace harness {

enum class BoundKind { h_iteration, nu_ode, envelope_lower, envelope_upper };

inline constexpr std::string_view to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::h_iteration: return "h_iteration";
    case BoundKind::nu_ode: return "nu_ode";
    case BoundKind::envelope_lower: return "envelope_lower";
    case BoundKind::envelope_upper: return "envelope_upper";
  }
  return "?";
}

struct BoundPoint {
  double x;  // time n or t
  double value;
};

struct BoundCurve {
  BoundKind kind;
  std::vector<BoundPoint> points;
  std::string provenance;

  /// Value at an abscissa present in the curve.
  double at(double x) const {
    for (const auto& p : points)
      if (p.x == x) return p.value;
    throw Error(ErrorCode::InvalidArgument, "abscissa not tabulated in curve");
  }
};

using MeanExcess = std::function<double(double)>;

inline MeanExcess mean_excess_of(const NoiseModel& model) {
  return [model](double s) { return model.mean_excess(s); };
}

/// m_0 = 0, m_n = H(m_{n-1}) = m_{n-1} + G(m_{n-1}).  Since mu_n >= H(mu_{n-1})
/// and H is nondecreasing, m_n <= mu_n for every n.
inline BoundCurve h_iteration(const MeanExcess& G, int n_max) {
  if (n_max < 1) throw Error(ErrorCode::InvalidArgument, "h_iteration needs n_max >= 1");
  BoundCurve c{BoundKind::h_iteration, {}, "mean_excess_iteration"};
  c.points.reserve(static_cast<std::size_t>(n_max) + 1);
  double m = 0.0;
  c.points.push_back({0.0, m});
  for (int n = 1; n <= n_max; ++n) {
    m += G(m);
    c.points.push_back({static_cast<double>(n), m});
  }
  return c;
}

struct StepControl {
  int initial_substeps = 8;   // RK4 steps per output interval on the first pass
  double tolerance = 1e-9;    // max change at t_max between successive halvings
  int max_halvings = 20;
  double output_spacing = 1.0;
};

/// nu' = G(nu), nu(0) = 0, integrated with classical RK4.  The number of
/// substeps per output interval doubles until two successive solutions agree
/// at t_max within the tolerance; the finer solution is returned.
inline BoundCurve nu_ode(const MeanExcess& G, double t_max, const StepControl& control = {}) {
  if (!(t_max >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t_max must be >= 0");
  std::vector<double> grid;
  for (double t = 0.0; t < t_max; t += control.output_spacing) grid.push_back(t);
  grid.push_back(t_max);
  if (grid.size() >= 2 && grid[grid.size() - 2] == grid.back()) grid.pop_back();

  auto solve = [&](int substeps) {
    std::vector<double> values{0.0};
    double y = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double h = (grid[i] - grid[i - 1]) / substeps;
      for (int s = 0; s < substeps; ++s) {
        const double k1 = G(y);
        const double k2 = G(y + 0.5 * h * k1);
        const double k3 = G(y + 0.5 * h * k2);
        const double k4 = G(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      values.push_back(y);
    }
    return values;
  };

  int substeps = std::max(1, control.initial_substeps);
  auto coarse = solve(substeps);
  for (int halving = 0; halving < control.max_halvings; ++halving) {
    substeps *= 2;
    auto fine = solve(substeps);
    if (std::abs(fine.back() - coarse.back()) < control.tolerance) {
      BoundCurve c{BoundKind::nu_ode, {}, "mean_excess_flow"};
      for (std::size_t i = 0; i < grid.size(); ++i) c.points.push_back({grid[i], fine[i]});
      return c;
    }
    coarse = std::move(fine);
  }
  throw Error(ErrorCode::StepUnderflow, "RK4 did not converge after " + std::to_string(control.max_halvings) + " halvings");
}

struct EllL {
  double ell;
  double L;
};

/// ell solves x^gamma log x = log n (x > 1); L = (log n) / ell.
inline EllL ell_L(double gamma, double n) {
  if (!(gamma > 1.0)) throw Error(ErrorCode::InvalidGamma, "gamma must exceed 1");
  if (!(n >= 3.0)) throw Error(ErrorCode::InvalidArgument, "ell_L needs n >= 3");
  const double target = std::log(n);
  auto f = [&](double x) { return std::pow(x, gamma) * std::log(x) - target; };
  double lo = 1.0, hi = 2.0;
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-13 * lo) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  const double ell = std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
  return {ell, target / ell};
}

/// The comparison functions (log n)^{1-1/gamma} and (log n)^{1-1/gamma} (log log n)^{1/gamma}.
inline std::pair<double, double> ell_L_sandwich(double gamma, double n) {
  const double ln = std::log(n);
  const double lower = std::pow(ln, 1.0 - 1.0 / gamma);
  return {lower, lower * std::pow(std::log(ln), 1.0 / gamma)};
}

namespace detail {

inline double log_power(double n, double p) { return n <= 1.0 ? 0.0 : std::pow(std::log(n), p); }

}  // namespace detail

/// Reference order functions of the repulsion rate with unit constants.
///
///   d = 1:            n^{1/4}                          .. n^{1/4} sqrt(log n)
///   d = 2:            (log n)^{max(1/alpha, 1/2)}       .. log n
///   d >= 3, generic:  (log n)^{1/alpha}                .. (log n)^{max(1/alpha, 2/(2+d))}
///   d >= 3, alpha = 1 + d/2: (log n)^{2/(2+d)}          .. L_n(1 + 2/d)
///
/// The exponents in the moderate-deviation estimates behind the upper
/// orders involve beta = alpha / (alpha - 1), the conjugate of alpha.
inline std::pair<BoundCurve, BoundCurve> growth_envelope(int d, double alpha, const std::vector<double>& n_grid) {
  if (d < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 1");
  if (!(alpha >= 1.0)) throw Error(ErrorCode::UnsupportedCase, "tail index alpha must be >= 1");
  BoundCurve lower{BoundKind::envelope_lower, {}, ""};
  BoundCurve upper{BoundKind::envelope_upper, {}, ""};
  const bool critical = d >= 3 && std::abs(alpha - (1.0 + d / 2.0)) < 1e-12;
  if (d == 1) {
    lower.provenance = upper.provenance = "repulsion_d1";
  } else if (d == 2) {
    lower.provenance = upper.provenance = "repulsion_d2";
  } else {
    lower.provenance = upper.provenance = critical ? "repulsion_d3_critical" : "repulsion_d3";
  }
  for (double n : n_grid) {
    if (!(n >= 1.0)) throw Error(ErrorCode::InvalidArgument, "envelope grid must have n >= 1");
    double lo = 0.0, hi = 0.0;
    if (d == 1) {
      lo = std::pow(n, 0.25);
      hi = lo * detail::log_power(n, 0.5);
    } else if (d == 2) {
      lo = detail::log_power(n, std::max(1.0 / alpha, 0.5));
      hi = detail::log_power(n, 1.0);
    } else if (critical) {
      lo = detail::log_power(n, 2.0 / (2.0 + d));
      if (n < 3.0) throw Error(ErrorCode::InvalidArgument, "critical envelope needs n >= 3");
      hi = ell_L(1.0 + 2.0 / d, n).L;
    } else {
      lo = detail::log_power(n, 1.0 / alpha);
      hi = detail::log_power(n, std::max(1.0 / alpha, 2.0 / (2.0 + d)));
    }
    lower.points.push_back({n, lo});
    upper.points.push_back({n, hi});
  }
  return {lower, upper};
}

/// Lower order n^{1/a} for noise whose tail decays at most polynomially.
inline BoundCurve polynomial_tail_envelope(double a, const std::vector<double>& n_grid) {
  if (!(a > 1.0)) throw Error(ErrorCode::UnsupportedCase, "polynomial tail exponent must exceed 1");
  BoundCurve lower{BoundKind::envelope_lower, {}, "polynomial_tail"};
  for (double n : n_grid) lower.points.push_back({n, std::pow(n, 1.0 / a)});
  return lower;
}

/// Lower order (log n)^{1/alpha} valid in every dimension for tails bounded
/// below by exp(-c x^alpha).
inline BoundCurve stretched_tail_envelope(double alpha, const std::vector<double>& n_grid) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::UnsupportedCase, "alpha must be positive");
  BoundCurve lower{BoundKind::envelope_lower, {}, "stretched_tail"};
  for (double n : n_grid) lower.points.push_back({n, detail::log_power(n, 1.0 / alpha)});
  return lower;
}

}  // namespace harness
