#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "harness/error.hpp"
#include "harness/random.hpp"

namespace harness {

enum class NoiseFamily { rademacher, uniform, gaussian, laplace, stretched_exponential, pareto_symmetric };

/// Tail-class tag: bounded support, stretched-exponential index alpha
/// (membership in L_alpha), or polynomial decay with exponent a.
struct TailClass {
  enum class Kind { bounded, stretched, polynomial };
  Kind kind;
  double index;  // alpha for stretched, a for polynomial, unused for bounded
};

/// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// Symmetric noise law.  Every sampler draws a magnitude and an independent
/// fair sign, so symmetry holds by construction.
///
/// Scale conventions: rademacher(a) = +-a; uniform(a) = U[-a, a];
/// gaussian(sigma); laplace(b) has density exp(-|x|/b)/(2b);
/// stretched_exp(alpha, c) has P(|e| > x) = exp(-(x/c)^alpha);
/// pareto(a, x_min) has P(|e| > x) = (x_min/x)^a for x >= x_min.
class NoiseModel {
 public:
  static NoiseModel rademacher(double a) { return make(NoiseFamily::rademacher, a, 0.0); }
  static NoiseModel uniform(double a) { return make(NoiseFamily::uniform, a, 0.0); }
  static NoiseModel gaussian(double sigma) { return make(NoiseFamily::gaussian, sigma, 0.0); }
  static NoiseModel laplace(double b) { return make(NoiseFamily::laplace, b, 0.0); }
  static NoiseModel stretched_exponential(double alpha, double scale) {
    return make(NoiseFamily::stretched_exponential, alpha, scale);
  }
  static NoiseModel pareto_symmetric(double a, double x_min) { return make(NoiseFamily::pareto_symmetric, a, x_min); }

  NoiseFamily family() const noexcept { return family_; }
  double param1() const noexcept { return p1_; }
  double param2() const noexcept { return p2_; }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;

  template <class Urbg>
  double sample(Urbg& g) const {
    return with_family([&](auto tag) { return sample_as<decltype(tag)::value>(g); });
  }

  /// Draw with the family fixed at compile time; `F` must equal family().
  template <NoiseFamily F, class Urbg>
  double sample_as(Urbg& g) const {
    // The ziggurat already returns a table magnitude times an independent sign bit.
    if constexpr (F == NoiseFamily::gaussian) {
      return p1_ * boost::random::normal_distribution<double>()(g);
    } else {
      const double magnitude = sample_magnitude<F>(g);
      // Branchless fair sign: copy the top random bit into the sign bit.
      const auto sign = g() & 0x8000000000000000ULL;
      return std::bit_cast<double>(std::bit_cast<std::uint64_t>(magnitude) ^ sign);
    }
  }

  /// Calls fn(std::integral_constant<NoiseFamily, family()>{}) so hot loops
  /// can hoist the family dispatch.
  template <class Fn>
  decltype(auto) with_family(Fn&& fn) const {
    using F = NoiseFamily;
    switch (family_) {
      case F::rademacher: return fn(std::integral_constant<F, F::rademacher>{});
      case F::uniform: return fn(std::integral_constant<F, F::uniform>{});
      case F::gaussian: return fn(std::integral_constant<F, F::gaussian>{});
      case F::laplace: return fn(std::integral_constant<F, F::laplace>{});
      case F::stretched_exponential: return fn(std::integral_constant<F, F::stretched_exponential>{});
      case F::pareto_symmetric: break;
    }
    return fn(std::integral_constant<F, F::pareto_symmetric>{});
  }

  /// P(e > x) for x >= 0.
  double survival(double x) const {
    switch (family_) {
      case NoiseFamily::rademacher: return x < p1_ ? 0.5 : 0.0;
      case NoiseFamily::uniform: return x < p1_ ? (p1_ - x) / (2.0 * p1_) : 0.0;
      case NoiseFamily::gaussian: return 0.5 * std::erfc(x / (p1_ * boost::math::constants::root_two<double>()));
      case NoiseFamily::laplace: return 0.5 * std::exp(-x / p1_);
      case NoiseFamily::stretched_exponential: return 0.5 * std::exp(-std::pow(x / p2_, p1_));
      case NoiseFamily::pareto_symmetric: return x < p2_ ? 0.5 : 0.5 * std::pow(p2_ / x, p1_);
    }
    return 0.0;
  }

  /// G(s) = E(e - s)^+ = integral_s^inf P(e > y) dy.
  double mean_excess(double s) const {
    if (!(s >= 0.0)) throw Error(ErrorCode::NegativeArgument, "mean_excess needs s >= 0, got " + format_double(s));
    switch (family_) {
      case NoiseFamily::rademacher: return s < p1_ ? 0.5 * (p1_ - s) : 0.0;
      case NoiseFamily::uniform: return s < p1_ ? (p1_ - s) * (p1_ - s) / (4.0 * p1_) : 0.0;
      case NoiseFamily::gaussian: {
        const double z = s / p1_;
        const double pdf = std::exp(-0.5 * z * z) * boost::math::constants::one_div_root_two_pi<double>();
        const double upper = 0.5 * std::erfc(z * boost::math::constants::one_div_root_two<double>());
        return p1_ * pdf - s * upper;
      }
      case NoiseFamily::laplace: return 0.5 * p1_ * std::exp(-s / p1_);
      case NoiseFamily::pareto_symmetric: {
        const double tail = 0.5 * p2_ / (p1_ - 1.0);  // integral from x_min
        return s < p2_ ? 0.5 * (p2_ - s) + tail : tail * std::pow(p2_ / s, p1_ - 1.0);
      }
      case NoiseFamily::stretched_exponential: return tail_integral(s);
    }
    return 0.0;
  }

  /// integral_s^inf P(e > y) dy by adaptive quadrature; works for every family.
  double tail_integral(double s) const {
    if (!(s >= 0.0)) throw Error(ErrorCode::NegativeArgument, "tail_integral needs s >= 0");
    auto f = [this](double y) { return survival(y); };
    constexpr double tol = 1e-13;
    switch (family_) {
      case NoiseFamily::rademacher:
      case NoiseFamily::uniform:
        if (s >= p1_) return 0.0;
        return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, s, p1_, 15, tol);
      case NoiseFamily::pareto_symmetric: {
        double head = 0.0;
        double lower = s;
        if (s < p2_) {
          head = 0.5 * (p2_ - s);
          lower = p2_;
        }
        // Substituting y = lower / u maps [lower, inf) to (0, 1].
        // survival(lower / u) lower / u^2, written to stay finite as u -> 0.
        const double c = 0.5 * std::pow(p2_ / lower, p1_) * lower;
        auto g = [&](double u) { return u <= 0.0 ? 0.0 : c * std::pow(u, p1_ - 2.0); };
        boost::math::quadrature::tanh_sinh<double> integrator;
        return head + integrator.integrate(g, 0.0, 1.0, tol);
      }
      default: {
        boost::math::quadrature::exp_sinh<double> integrator;
        return integrator.integrate(f, s, std::numeric_limits<double>::infinity(), tol);
      }
    }
  }

  double variance() const {
    switch (family_) {
      case NoiseFamily::rademacher: return p1_ * p1_;
      case NoiseFamily::uniform: return p1_ * p1_ / 3.0;
      case NoiseFamily::gaussian: return p1_ * p1_;
      case NoiseFamily::laplace: return 2.0 * p1_ * p1_;
      case NoiseFamily::stretched_exponential: return p2_ * p2_ * std::tgamma(1.0 + 2.0 / p1_);
      case NoiseFamily::pareto_symmetric:
        if (p1_ <= 2.0) throw Error(ErrorCode::InfiniteVariance, "pareto with a=" + format_double(p1_));
        return p1_ * p2_ * p2_ / (p1_ - 2.0);
    }
    return 0.0;
  }

  /// E|e|.
  double abs_mean() const {
    switch (family_) {
      case NoiseFamily::rademacher: return p1_;
      case NoiseFamily::uniform: return 0.5 * p1_;
      case NoiseFamily::gaussian: return p1_ * std::sqrt(2.0 / boost::math::constants::pi<double>());
      case NoiseFamily::laplace: return p1_;
      case NoiseFamily::stretched_exponential: return p2_ * std::tgamma(1.0 + 1.0 / p1_);
      case NoiseFamily::pareto_symmetric: return p1_ * p2_ / (p1_ - 1.0);
    }
    return 0.0;
  }

  TailClass tail_class() const {
    switch (family_) {
      case NoiseFamily::rademacher:
      case NoiseFamily::uniform: return {TailClass::Kind::bounded, 0.0};
      case NoiseFamily::gaussian: return {TailClass::Kind::stretched, 2.0};
      case NoiseFamily::laplace: return {TailClass::Kind::stretched, 1.0};
      case NoiseFamily::stretched_exponential: return {TailClass::Kind::stretched, p1_};
      case NoiseFamily::pareto_symmetric: return {TailClass::Kind::polynomial, p1_};
    }
    return {TailClass::Kind::bounded, 0.0};
  }

  /// Atoms of the law when it has finite support, else nullopt.
  std::optional<std::vector<std::pair<double, double>>> finite_support() const {
    if (family_ != NoiseFamily::rademacher) return std::nullopt;
    return std::vector<std::pair<double, double>>{{-p1_, 0.5}, {p1_, 0.5}};
  }

  std::string to_string() const {
    switch (family_) {
      case NoiseFamily::rademacher: return "rademacher(a=" + format_double(p1_) + ")";
      case NoiseFamily::uniform: return "uniform(a=" + format_double(p1_) + ")";
      case NoiseFamily::gaussian: return "gaussian(sigma=" + format_double(p1_) + ")";
      case NoiseFamily::laplace: return "laplace(b=" + format_double(p1_) + ")";
      case NoiseFamily::stretched_exponential:
        return "stretched_exp(alpha=" + format_double(p1_) + ", scale=" + format_double(p2_) + ")";
      case NoiseFamily::pareto_symmetric:
        return "pareto(a=" + format_double(p1_) + ", x_min=" + format_double(p2_) + ")";
    }
    return {};
  }

 private:
  NoiseModel(NoiseFamily f, double p1, double p2) : family_(f), p1_(p1), p2_(p2) {}

  static NoiseModel make(NoiseFamily f, double p1, double p2) {
    auto bad = [](const std::string& msg) { return Error(ErrorCode::InvalidParams, msg); };
    if (!std::isfinite(p1) || !std::isfinite(p2)) throw bad("non-finite noise parameter");
    switch (f) {
      case NoiseFamily::stretched_exponential:
        if (p1 <= 0.0 || p2 <= 0.0) throw bad("stretched_exp needs alpha > 0 and scale > 0");
        break;
      case NoiseFamily::pareto_symmetric:
        if (p1 <= 1.0) throw bad("pareto needs a > 1 for an integrable law");
        if (p2 <= 0.0) throw bad("pareto needs x_min > 0");
        break;
      default:
        if (p1 <= 0.0) throw bad("noise scale must be positive");
    }
    return NoiseModel(f, p1, p2);
  }

  template <NoiseFamily F, class Urbg>
  double sample_magnitude(Urbg& g) const {
    if constexpr (F == NoiseFamily::rademacher) {
      return p1_;
    } else if constexpr (F == NoiseFamily::uniform) {
      return p1_ * uniform_open01(g);
    } else if constexpr (F == NoiseFamily::gaussian) {
      return p1_ * std::abs(boost::random::normal_distribution<double>()(g));
    } else if constexpr (F == NoiseFamily::laplace) {
      return p1_ * boost::random::exponential_distribution<double>()(g);
    } else if constexpr (F == NoiseFamily::stretched_exponential) {
      return p2_ * std::pow(-std::log(uniform_open01(g)), 1.0 / p1_);
    } else {
      return p2_ * std::pow(uniform_open01(g), -1.0 / p1_);
    }
  }

  NoiseFamily family_;
  double p1_;
  double p2_;
};

inline double sample(const NoiseModel& model, CounterStream& stream) { return model.sample(stream); }
inline double mean_excess(const NoiseModel& model, double s) { return model.mean_excess(s); }
inline double variance(const NoiseModel& model) { return model.variance(); }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::InvalidParams, "not a number: '" + std::string(text) + "'");
  return value;
}

}  // namespace detail

/// Parses `family(args)` where args are positional or key=value, e.g.
/// `stretched_exp(alpha=2.5, scale=1.0)` or `rademacher(1)`.
inline NoiseModel parse_noise(std::string_view text) {
  text = detail::trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')')
    throw Error(ErrorCode::InvalidParams, "noise must look like family(params): '" + std::string(text) + "'");
  const std::string name(detail::trim(text.substr(0, open)));
  std::string_view body = text.substr(open + 1, text.size() - open - 2);

  std::vector<std::pair<std::string, double>> args;
  while (!detail::trim(body).empty()) {
    const auto comma = body.find(',');
    std::string_view item = detail::trim(body.substr(0, comma));
    body = comma == std::string_view::npos ? std::string_view{} : body.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      args.emplace_back("", detail::parse_number(item));
    else
      args.emplace_back(std::string(detail::trim(item.substr(0, eq))), detail::parse_number(item.substr(eq + 1)));
  }

  // Resolve parameters by position or name.
  auto take = [&](std::size_t pos, std::initializer_list<const char*> names, std::optional<double> fallback) {
    for (const auto& [k, v] : args)
      for (const char* n : names)
        if (k == n) return v;
    if (pos < args.size() && args[pos].first.empty()) return args[pos].second;
    if (fallback) return *fallback;
    throw Error(ErrorCode::InvalidParams, name + ": missing parameter '" + *names.begin() + "'");
  };
  auto check_keys = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : args) {
      if (k.empty()) continue;
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) throw Error(ErrorCode::InvalidParams, name + ": unknown parameter '" + k + "'");
    }
    if (args.size() > allowed.size()) throw Error(ErrorCode::InvalidParams, name + ": too many parameters");
  };

  if (name == "rademacher") {
    check_keys({"a"});
    return NoiseModel::rademacher(take(0, {"a"}, 1.0));
  }
  if (name == "uniform") {
    check_keys({"a"});
    return NoiseModel::uniform(take(0, {"a"}, 1.0));
  }
  if (name == "gaussian" || name == "normal") {
    check_keys({"sigma"});
    return NoiseModel::gaussian(take(0, {"sigma"}, 1.0));
  }
  if (name == "laplace") {
    check_keys({"b"});
    return NoiseModel::laplace(take(0, {"b"}, 1.0));
  }
  if (name == "stretched_exp" || name == "stretched_exponential") {
    check_keys({"alpha", "scale"});
    return NoiseModel::stretched_exponential(take(0, {"alpha"}, std::nullopt), take(1, {"scale"}, 1.0));
  }
  if (name == "pareto" || name == "pareto_symmetric") {
    check_keys({"a", "x_min"});
    return NoiseModel::pareto_symmetric(take(0, {"a"}, std::nullopt), take(1, {"x_min"}, 1.0));
  }
  throw Error(ErrorCode::InvalidParams, "unknown noise family '" + name + "'");
}

}  // namespace harness
