#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "harness/error.hpp"

namespace harness {

using Offset = std::vector<int>;

struct KernelEntry {
  Offset offset;
  double weight;
};

/// Finite-range, zero-mean, homogeneous averaging kernel on Z^d.
///
/// Entries are kept in lexicographic offset order with strictly positive
/// weights; that order is the summation order used everywhere the kernel is
/// applied, which makes every evolution bit-reproducible.
class Kernel {
 public:
  int dim() const noexcept { return dim_; }
  int range() const noexcept { return range_; }
  const std::vector<KernelEntry>& entries() const noexcept { return entries_; }

  double weight(const Offset& j) const {
    for (const auto& e : entries_)
      if (e.offset == j) return e.weight;
    return 0.0;
  }

  friend bool operator==(const Kernel& a, const Kernel& b) {
    if (a.dim_ != b.dim_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t k = 0; k < a.entries_.size(); ++k)
      if (a.entries_[k].offset != b.entries_[k].offset || a.entries_[k].weight != b.entries_[k].weight)
        return false;
    return true;
  }

 private:
  friend Kernel kernel_validate(int dim, const std::map<Offset, double>& raw_weights);
  int dim_ = 0;
  int range_ = 0;
  std::vector<KernelEntry> entries_;
};

namespace detail {

/// Largest dense box (cells) any convolution may allocate: 2^27 doubles = 1 GiB.
inline constexpr double kMaxBoxCells = 134217728.0;

/// Dense row-major indexing of the box [-radius, radius]^dim (last axis contiguous).
struct BoxIndex {
  int dim = 0;
  int radius = 0;
  std::int64_t side = 1;
  std::size_t size = 1;

  BoxIndex() = default;
  BoxIndex(int d, int r) : dim(d), radius(r), side(2 * static_cast<std::int64_t>(r) + 1) {
    double total = 1.0;
    for (int k = 0; k < d; ++k) total *= static_cast<double>(side);
    if (total > kMaxBoxCells) throw Error(ErrorCode::TooLarge, "box of radius " + std::to_string(r) + " in d=" + std::to_string(d));
    size = 1;
    for (int k = 0; k < d; ++k) size *= static_cast<std::size_t>(side);
  }

  std::size_t index(const Offset& j) const {
    std::size_t idx = 0;
    for (int k = 0; k < dim; ++k) idx = idx * static_cast<std::size_t>(side) + static_cast<std::size_t>(j[k] + radius);
    return idx;
  }

  Offset offset(std::size_t idx) const {
    Offset j(dim);
    for (int k = dim - 1; k >= 0; --k) {
      j[k] = static_cast<int>(idx % static_cast<std::size_t>(side)) - radius;
      idx /= static_cast<std::size_t>(side);
    }
    return j;
  }

  bool contains(const Offset& j) const {
    for (int k = 0; k < dim; ++k)
      if (j[k] < -radius || j[k] > radius) return false;
    return true;
  }
};

/// Rank and |determinant| of the lattice generated by integer row vectors,
/// via row-echelon reduction with Euclidean steps (Hermite-style).  The
/// lattice equals Z^d exactly when rank == d and every pivot is +-1.
inline bool generates_full_lattice(std::vector<std::vector<std::int64_t>> rows, int dim) {
  std::size_t pivot_row = 0;
  for (int col = 0; col < dim; ++col) {
    // Euclid on column `col` among rows >= pivot_row until one nonzero remains.
    while (true) {
      std::size_t best = rows.size();
      for (std::size_t r = pivot_row; r < rows.size(); ++r) {
        if (rows[r][col] == 0) continue;
        if (best == rows.size() || std::llabs(rows[r][col]) < std::llabs(rows[best][col])) best = r;
      }
      if (best == rows.size()) return false;  // column has no pivot -> rank deficient
      std::swap(rows[pivot_row], rows[best]);
      bool reduced = true;
      for (std::size_t r = pivot_row + 1; r < rows.size(); ++r) {
        if (rows[r][col] == 0) continue;
        const std::int64_t q = rows[r][col] / rows[pivot_row][col];
        for (int c = col; c < dim; ++c) rows[r][c] -= q * rows[pivot_row][c];
        if (rows[r][col] != 0) reduced = false;
      }
      if (reduced) break;
    }
    if (std::llabs(rows[pivot_row][col]) != 1) return false;
    ++pivot_row;
  }
  return true;
}

}  // namespace detail

/// Validates raw (offset -> weight) data and builds a Kernel.
inline Kernel kernel_validate(int dim, const std::map<Offset, double>& raw_weights) {
  if (dim < 1) throw Error(ErrorCode::InvalidParams, "dimension must be positive");
  if (raw_weights.empty()) throw Error(ErrorCode::InvalidParams, "kernel has no weights");

  Kernel k;
  k.dim_ = dim;
  double sum = 0.0, comp = 0.0;
  std::vector<double> first_moment(dim, 0.0);
  for (const auto& [offset, w] : raw_weights) {
    if (static_cast<int>(offset.size()) != dim)
      throw Error(ErrorCode::InvalidParams, "offset of length " + std::to_string(offset.size()) + " in d=" + std::to_string(dim));
    if (!std::isfinite(w)) throw Error(ErrorCode::InvalidParams, "non-finite weight");
    if (w < 0.0) throw Error(ErrorCode::NegativeWeight, "weight " + std::to_string(w));
    if (w == 0.0) continue;
    // Neumaier summation.
    const double t = sum + w;
    comp += std::abs(sum) >= std::abs(w) ? (sum - t) + w : (w - t) + sum;
    sum = t;
    for (int c = 0; c < dim; ++c) {
      first_moment[c] += w * offset[c];
      k.range_ = std::max(k.range_, std::abs(offset[c]));
    }
    k.entries_.push_back({offset, w});
  }
  sum += comp;
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::NotStochastic, "weights sum to " + std::to_string(sum));
  for (int c = 0; c < dim; ++c)
    if (std::abs(first_moment[c]) > 1e-12)
      throw Error(ErrorCode::NonZeroMean, "mean along axis " + std::to_string(c) + " is " + std::to_string(first_moment[c]));

  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& e : k.entries_) {
    if (std::all_of(e.offset.begin(), e.offset.end(), [](int x) { return x == 0; })) continue;
    rows.emplace_back(e.offset.begin(), e.offset.end());
  }
  if (!detail::generates_full_lattice(std::move(rows), dim))
    throw Error(ErrorCode::DegenerateSpan, "support does not generate Z^" + std::to_string(dim));
  return k;
}

/// Symmetric nearest-neighbour kernel: weight 1/(2d) on each of +-e_k.
inline Kernel nearest_neighbor_kernel(int dim) {
  std::map<Offset, double> w;
  for (int k = 0; k < dim; ++k) {
    Offset plus(dim, 0), minus(dim, 0);
    plus[k] = 1;
    minus[k] = -1;
    w[plus] = 1.0 / (2.0 * dim);
    w[minus] = 1.0 / (2.0 * dim);
  }
  return kernel_validate(dim, w);
}

/// r-step transition probabilities p_r(j), stored densely on the box of radius r*v.
class StepDistribution {
 public:
  StepDistribution(int step, int dim, int radius) : step_(step), box_(dim, radius), probs_(box_.size, 0.0) {}

  int step() const noexcept { return step_; }
  int dim() const noexcept { return box_.dim; }
  int radius() const noexcept { return box_.radius; }
  const std::vector<double>& dense() const noexcept { return probs_; }
  const detail::BoxIndex& box() const noexcept { return box_; }

  double at(const Offset& j) const { return box_.contains(j) ? probs_[box_.index(j)] : 0.0; }

  /// Nonzero entries in lexicographic order.
  std::vector<std::pair<Offset, double>> entries() const {
    std::vector<std::pair<Offset, double>> out;
    for (std::size_t i = 0; i < probs_.size(); ++i)
      if (probs_[i] != 0.0) out.emplace_back(box_.offset(i), probs_[i]);
    return out;
  }

  double total() const {
    double s = 0.0;
    for (double p : probs_) s += p;
    return s;
  }

  double sum_of_squares() const {
    double sum = 0.0, comp = 0.0;
    for (double p : probs_) {
      const double x = p * p;
      const double t = sum + x;
      comp += sum >= x ? (sum - t) + x : (x - t) + sum;
      sum = t;
    }
    return sum + comp;
  }

  double max_prob() const { return *std::max_element(probs_.begin(), probs_.end()); }

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [j, p] : this->entries()) entries.push_back({j, p});
    return {{"step", step_}, {"dim", box_.dim}, {"entries", entries}};
  }

  std::vector<double>& mutable_dense() noexcept { return probs_; }

 private:
  int step_;
  detail::BoxIndex box_;
  std::vector<double> probs_;
};

namespace detail {

inline constexpr double kUnderflowPrune = 1e-300;

/// Scatters `a` against `b` into a fresh distribution of radius a.radius + b.radius.
inline StepDistribution convolve_dense(const StepDistribution& a, const StepDistribution& b) {
  const int dim = a.dim();
  StepDistribution out(a.step() + b.step(), dim, a.radius() + b.radius());
  const auto& bi = out.box();
  auto& dst = out.mutable_dense();
  const auto b_entries = b.entries();
  std::vector<std::int64_t> deltas;
  for (const auto& [j, p] : b_entries) {
    std::int64_t d = 0;
    for (int k = 0; k < dim; ++k) d = d * bi.side + j[k];
    deltas.push_back(d);
  }
  const auto& src = a.dense();
  const auto& ai = a.box();
  // Odometer over a's box, tracking the matching flat index in out's box.
  Offset pos(dim, -ai.radius);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double p = src[i];
    if (p != 0.0) {
      const auto base = static_cast<std::int64_t>(bi.index(pos));
      for (std::size_t e = 0; e < deltas.size(); ++e) dst[static_cast<std::size_t>(base + deltas[e])] += p * b_entries[e].second;
    }
    for (int k = dim - 1; k >= 0; --k) {
      if (++pos[k] <= ai.radius) break;
      pos[k] = -ai.radius;
    }
  }
  for (double& x : dst)
    if (x < kUnderflowPrune) x = 0.0;
  return out;
}

inline StepDistribution kernel_as_distribution(const Kernel& kernel) {
  StepDistribution one(1, kernel.dim(), kernel.range());
  for (const auto& e : kernel.entries()) one.mutable_dense()[one.box().index(e.offset)] = e.weight;
  return one;
}

inline StepDistribution point_mass(int dim) {
  StepDistribution zero(0, dim, 0);
  zero.mutable_dense()[0] = 1.0;
  return zero;
}

}  // namespace detail

/// Convolution of two step distributions of the same kernel: p_r * p_s = p_{r+s}.
inline StepDistribution convolve(const StepDistribution& a, const StepDistribution& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::InvalidArgument, "dimension mismatch in convolve");
  return detail::convolve_dense(a, b);
}

/// Exact r-fold self-convolution of the kernel.
inline StepDistribution kernel_power(const Kernel& kernel, int r) {
  if (r < 0) throw Error(ErrorCode::InvalidArgument, "negative step count");
  detail::BoxIndex(kernel.dim(), kernel.range() * r);  // fail fast before allocating
  const auto one = detail::kernel_as_distribution(kernel);
  auto cur = detail::point_mass(kernel.dim());
  for (int k = 0; k < r; ++k) cur = detail::convolve_dense(cur, one);
  return cur;
}

/// s(m) = sum_{r<m} sum_j p_r(j)^2 for m = 1..n; element m-1 holds s(m).
inline std::vector<double> collision_sum(const Kernel& kernel, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "collision_sum needs n >= 1");
  detail::BoxIndex(kernel.dim(), kernel.range() * (n - 1));
  const auto one = detail::kernel_as_distribution(kernel);
  auto cur = detail::point_mass(kernel.dim());
  std::vector<double> s(static_cast<std::size_t>(n));
  double acc = 0.0, comp = 0.0;
  for (int r = 0; r < n; ++r) {
    const double x = cur.sum_of_squares();
    const double t = acc + x;
    comp += acc >= x ? (acc - t) + x : (x - t) + acc;
    acc = t;
    s[static_cast<std::size_t>(r)] = acc + comp;
    if (r + 1 < n) cur = detail::convolve_dense(cur, one);
  }
  return s;
}

/// Collision sum for the walk wrapped onto a torus of side L (periodic images
/// folded together).  Equals collision_sum exactly while L > 2 v (n-1).
inline std::vector<double> collision_sum_torus(const Kernel& kernel, int side, int n) {
  if (n < 1 || side < 1) throw Error(ErrorCode::InvalidArgument, "collision_sum_torus needs n >= 1 and L >= 1");
  detail::BoxIndex(kernel.dim(), kernel.range() * (n - 1));
  const int dim = kernel.dim();
  const auto one = detail::kernel_as_distribution(kernel);
  auto cur = detail::point_mass(dim);
  std::size_t cells = 1;
  for (int k = 0; k < dim; ++k) cells *= static_cast<std::size_t>(side);
  std::vector<double> folded(cells);
  std::vector<double> s(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    std::fill(folded.begin(), folded.end(), 0.0);
    const auto& bi = cur.box();
    const auto& dense = cur.dense();
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] == 0.0) continue;
      const Offset j = bi.offset(i);
      std::size_t idx = 0;
      for (int k = 0; k < dim; ++k) idx = idx * static_cast<std::size_t>(side) + static_cast<std::size_t>(((j[k] % side) + side) % side);
      folded[idx] += dense[i];
    }
    for (double p : folded) acc += p * p;
    s[static_cast<std::size_t>(r)] = acc;
    if (r + 1 < n) cur = detail::convolve_dense(cur, one);
  }
  return s;
}

/// max_j p_k(j).
inline double sup_step_prob(const Kernel& kernel, int k) { return kernel_power(kernel, k).max_prob(); }

/// Kernel as a JSON list of [offset-vector, weight] pairs.
inline nlohmann::json kernel_to_json(const Kernel& kernel) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : kernel.entries()) out.push_back({e.offset, e.weight});
  return out;
}

/// Parses either the keyword "nn" or a JSON list of [offset, weight] pairs.
/// One-dimensional offsets may be written as bare integers.
inline Kernel kernel_from_spec(int dim, const std::string& text) {
  if (text == "nn" || text == "nearest_neighbor") return nearest_neighbor_kernel(dim);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidParams, std::string("kernel is neither 'nn' nor JSON: ") + ex.what());
  }
  if (!parsed.is_array()) throw Error(ErrorCode::InvalidParams, "kernel JSON must be a list of [offset, weight] pairs");
  std::map<Offset, double> raw;
  for (const auto& item : parsed) {
    if (!item.is_array() || item.size() != 2) throw Error(ErrorCode::InvalidParams, "kernel entry must be [offset, weight]");
    Offset j;
    if (item[0].is_number_integer())
      j = {item[0].get<int>()};
    else
      j = item[0].get<Offset>();
    raw[j] += item[1].get<double>();
  }
  return kernel_validate(dim, raw);
}

}  // namespace harness
