#pragma once

// The L2 projection onto sigma(g)-measurable functions for step g, its
// Hilbert-Schmidt norm, and mass-weighted isotonic regression.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "cfwd/step_function.hpp"

namespace cfwd {

/// Maximal runs of pieces sharing one value. Consecutive blocks strictly increase.
struct LevelSetPartition {
  struct Block {
    std::size_t first;  // piece index, inclusive
    std::size_t last;   // piece index, inclusive
    double mass;
    double value;
    double lower;  // label interval [lower, upper)
    double upper;
  };
  std::vector<Block> blocks;

  std::size_t size() const noexcept { return blocks.size(); }

  std::size_t block_of_piece(std::size_t k) const {
    std::size_t lo = 0, hi = blocks.size();
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (blocks[mid].first <= k) lo = mid; else hi = mid;
    }
    return lo;
  }
};

/// Exact value equality; no tolerance.
inline LevelSetPartition level_sets(const StepFunction& g) {
  LevelSetPartition out;
  const auto& bp = g.breakpoints();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!out.blocks.empty() && out.blocks.back().value == g.value(k)) {
      auto& b = out.blocks.back();
      b.last = k;
      b.upper = bp[k + 1];
      continue;
    }
    out.blocks.push_back({k, k, 0.0, g.value(k), bp[k], bp[k + 1]});
  }
  // Block masses from breakpoints rather than summed piece masses, so a constant g has mass exactly 1.
  for (auto& b : out.blocks) b.mass = b.upper - b.lower;
  return out;
}

/**
 * Block means of raw piece values over the level sets of g.
 * `values` and `masses` must be aligned with the pieces of g.
 */
inline std::vector<double> project_values(const LevelSetPartition& parts, std::span<const double> values,
                                          std::span<const double> masses) {
  std::vector<double> out(values.size());
  for (const auto& b : parts.blocks) {
    double num = 0.0, den = 0.0;
    bool flat = true;
    for (std::size_t k = b.first; k <= b.last; ++k) {
      num += masses[k] * values[k];
      den += masses[k];
      flat = flat && values[k] == values[b.first];
    }
    // A block that is already constant keeps its value bit for bit (idempotence).
    const double mean = flat ? values[b.first] : num / den;
    for (std::size_t k = b.first; k <= b.last; ++k) out[k] = mean;
  }
  return out;
}

/// pr_g h on the common refinement of g and h.
inline StepFunction project(const StepFunction& g, const StepFunction& h) {
  auto [gr, hr] = common_refinement(g, h);
  const auto masses = hr.masses();
  auto vals = project_values(level_sets(gr), hr.values(), masses);
  return {hr.breakpoints(), std::move(vals)};
}

/// Lebesgue measure of the level set of g containing u.
inline double mass(const StepFunction& g, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("mass: label must lie in (0,1)");
  const auto parts = level_sets(g);
  return parts.blocks[parts.block_of_piece(g.piece_index(u))].mass;
}

/// Squared Hilbert-Schmidt norm of pr_g, i.e. the number of distinct values of g.
inline double hs_norm_sq(const StepFunction& g) {
  double acc = 0.0;
  for (const auto& b : level_sets(g).blocks) acc += b.mass / b.mass;
  return acc;
}

/// The same quantity as the integral of 1/m_g, summed piece by piece.
inline double hs_norm_sq_integral(const StepFunction& g) {
  const auto parts = level_sets(g);
  double acc = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) acc += g.mass(k) / parts.blocks[parts.block_of_piece(k)].mass;
  return acc;
}

/// Result of a weighted isotonic regression, with its pooled blocks.
struct IsotonicFit {
  std::vector<double> values;
  /// Pooled blocks as [first, last] piece ranges, in order. Ties are pooled.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
};

/**
 * Pool-adjacent-violators: the minimizer of sum w_k (x_k - v_k)^2 over non-decreasing x.
 * Single forward pass with a merge stack; adjacent blocks with equal means are merged.
 */
inline IsotonicFit isotonic_fit(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw std::invalid_argument("isotonic: values/weights length mismatch");
  struct Pool {
    std::size_t first, last;
    double weight, weighted_sum, mean;
  };
  std::vector<Pool> stack;
  stack.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(weights[k] > 0.0)) throw std::invalid_argument("isotonic: weights must be positive");
    Pool p{k, k, weights[k], weights[k] * values[k], values[k]};
    while (!stack.empty() && stack.back().mean >= p.mean) {
      const Pool& q = stack.back();
      const bool tie = q.mean == p.mean;
      p.first = q.first;
      p.weight += q.weight;
      p.weighted_sum += q.weighted_sum;
      // Pooling equal means must not move the value by rounding.
      if (!tie) p.mean = p.weighted_sum / p.weight;
      stack.pop_back();
    }
    stack.push_back(p);
  }
  IsotonicFit fit;
  fit.values.resize(values.size());
  fit.blocks.reserve(stack.size());
  for (const auto& p : stack) {
    for (std::size_t k = p.first; k <= p.last; ++k) fit.values[k] = p.mean;
    fit.blocks.emplace_back(p.first, p.last);
  }
  return fit;
}

inline std::vector<double> isotonic(std::span<const double> values, std::span<const double> weights) {
  return isotonic_fit(values, weights).values;
}

/**
 * (pr_f h_eps^u, pr_f h_eps^v) where h_eps^u = I[u, (u+eps) ^ 1) / (eps ^ (1-u)).
 * Level-set blocks of a step function are intervals, so the value is a finite sum of overlaps.
 */
inline double inner_pr_h_eps(const StepFunction& f, double u, double v, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("inner_pr_h_eps: eps must be positive");
  if (!(u >= 0.0 && u < v && v < 1.0)) throw std::domain_error("inner_pr_h_eps: need 0 <= u < v < 1");
  const double end_u = std::min(u + eps, 1.0), end_v = std::min(v + eps, 1.0);
  const double width_u = end_u - u, width_v = end_v - v;
  double acc = 0.0;
  for (const auto& b : level_sets(f).blocks) {
    const double ou = std::max(0.0, std::min(b.upper, end_u) - std::max(b.lower, u));
    const double ov = std::max(0.0, std::min(b.upper, end_v) - std::max(b.lower, v));
    if (ou > 0.0 && ov > 0.0) acc += ou * ov / (width_u * width_v * b.mass);
  }
  return acc;
}

}  // namespace cfwd
