#pragma once

// Non-decreasing right-continuous step functions on [0,1] and the dyadic
// staircase discretization of (g, xi).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfwd {

/// Tolerance used when validating breakpoints supplied from text or arithmetic.
inline constexpr double kBreakpointTolerance = 1e-12;

/**
 * A non-decreasing step function on [0,1] with finitely many pieces.
 *
 * Piece k (0-based) holds value values()[k] on [breakpoints()[k], breakpoints()[k+1]).
 * The first breakpoint is exactly 0 and the last exactly 1, so the piece masses
 * always sum to 1. Adjacent pieces with equal values are kept apart unless
 * merged() is called: the particle engine relies on stable piece identity.
 */
class StepFunction {
 public:
  StepFunction(std::vector<double> breakpoints, std::vector<double> values)
      : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
    validate();
  }

  /// n pieces of equal mass.
  static StepFunction uniform(std::vector<double> values) {
    const std::size_t n = values.size();
    if (n == 0) throw std::invalid_argument("StepFunction: no pieces");
    std::vector<double> bp(n + 1);
    for (std::size_t k = 0; k <= n; ++k) bp[k] = static_cast<double>(k) / static_cast<double>(n);
    return {std::move(bp), std::move(values)};
  }

  static StepFunction constant(double c) { return {{0.0, 1.0}, {c}}; }

  /// Pieces with the given masses; the last breakpoint is pinned to 1.
  static StepFunction from_masses(std::span<const double> masses, std::vector<double> values) {
    std::vector<double> bp{0.0};
    double acc = 0.0;
    for (double m : masses) {
      acc += m;
      bp.push_back(acc);
    }
    if (std::abs(acc - 1.0) > kBreakpointTolerance)
      throw std::invalid_argument("StepFunction: masses must sum to 1");
    bp.back() = 1.0;
    return {std::move(bp), std::move(values)};
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double value(std::size_t k) const { return values_.at(k); }
  double mass(std::size_t k) const { return breakpoints_.at(k + 1) - breakpoints_[k]; }

  std::vector<double> masses() const {
    std::vector<double> m(size());
    for (std::size_t k = 0; k < size(); ++k) m[k] = mass(k);
    return m;
  }

  /// Index of the piece containing label u; u = 1 belongs to the last piece.
  std::size_t piece_index(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("label outside [0,1]: " + std::to_string(u));
    if (u == 1.0) return size() - 1;
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), u);
    return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  }

  /// Right-continuous evaluation with the left limit taken at u = 1.
  double operator()(double u) const { return values_[piece_index(u)]; }
  double eval(double u) const { return (*this)(u); }

  /// Exact integral of f over [a,b].
  double integral(double a, double b) const {
    if (!(a >= 0.0 && b <= 1.0 && a <= b)) throw std::domain_error("integral: need 0 <= a <= b <= 1");
    double acc = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
      const double lo = std::max(a, breakpoints_[k]);
      const double hi = std::min(b, breakpoints_[k + 1]);
      if (hi > lo) acc += (hi - lo) * values_[k];
    }
    return acc;
  }

  double integral() const {
    double acc = 0.0;
    for (std::size_t k = 0; k < size(); ++k) acc += mass(k) * values_[k];
    return acc;
  }

  /// Mean value of f over [a,b).
  double block_average(double a, double b) const {
    if (!(a >= 0.0 && b <= 1.0)) throw std::domain_error("block_average: labels outside [0,1]");
    if (!(a < b)) throw std::domain_error("block_average: need a < b");
    return integral(a, b) / (b - a);
  }

  /// The same function on a finer set of breakpoints (a superset of the current ones).
  StepFunction refined(std::span<const double> extra) const {
    std::vector<double> bp = breakpoints_;
    for (double x : extra) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("refine: breakpoint outside [0,1]");
      bp.push_back(x);
    }
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    std::vector<double> vals(bp.size() - 1);
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) vals[k] = (*this)(bp[k]);
    return {std::move(bp), std::move(vals)};
  }

  /// Canonical form: adjacent pieces with exactly equal values merged.
  StepFunction merged() const {
    std::vector<double> bp{0.0};
    std::vector<double> vals{values_[0]};
    for (std::size_t k = 1; k < size(); ++k) {
      if (values_[k] == vals.back()) continue;
      bp.push_back(breakpoints_[k]);
      vals.push_back(values_[k]);
    }
    bp.push_back(1.0);
    return {std::move(bp), std::move(vals)};
  }

  std::size_t distinct_values() const {
    std::size_t count = 1;
    for (std::size_t k = 1; k < size(); ++k)
      if (values_[k] != values_[k - 1]) ++count;
    return count;
  }

  friend bool operator==(const StepFunction&, const StepFunction&) = default;

 private:
  void validate() {
    if (values_.empty()) throw std::invalid_argument("StepFunction: no pieces");
    if (breakpoints_.size() != values_.size() + 1)
      throw std::invalid_argument("StepFunction: need exactly one more breakpoint than values");
    if (std::abs(breakpoints_.front()) > kBreakpointTolerance)
      throw std::invalid_argument("StepFunction: first breakpoint must be 0");
    if (std::abs(breakpoints_.back() - 1.0) > kBreakpointTolerance)
      throw std::invalid_argument("StepFunction: last breakpoint must be 1");
    breakpoints_.front() = 0.0;
    breakpoints_.back() = 1.0;
    for (std::size_t k = 0; k + 1 < breakpoints_.size(); ++k)
      if (!(breakpoints_[k] < breakpoints_[k + 1]))
        throw std::invalid_argument("StepFunction: breakpoints must be strictly increasing");
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!std::isfinite(values_[k])) throw std::invalid_argument("StepFunction: non-finite value");
      if (k > 0 && values_[k] < values_[k - 1])
        throw std::invalid_argument("StepFunction: values must be non-decreasing (monotonicity violated at piece " +
                                    std::to_string(k) + ")");
    }
  }

  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

/// Both functions on the union of their breakpoints.
inline std::pair<StepFunction, StepFunction> common_refinement(const StepFunction& f, const StepFunction& h) {
  return {f.refined(h.breakpoints()), h.refined(f.breakpoints())};
}

/// L2 inner product on [0,1].
inline double inner_product(const StepFunction& f, const StepFunction& h) {
  auto [a, b] = common_refinement(f, h);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a.mass(k) * a.value(k) * b.value(k);
  return acc;
}

inline double l2_norm(const StepFunction& f) { return std::sqrt(inner_product(f, f)); }

/// (integral |f|^p)^(1/p)
inline double lp_norm(const StepFunction& f, double p) {
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) acc += f.mass(k) * std::pow(std::abs(f.value(k)), p);
  return std::pow(acc, 1.0 / p);
}

template <class F>
concept LabelFunction = std::invocable<const F&, double> && std::convertible_to<std::invoke_result_t<const F&, double>, double>;

/**
 * Dyadic staircase of a non-decreasing potential at level n:
 * value xi((k-1)/2^n) + k/4^n on [(k-1)/2^n, k/2^n), k = 1..2^n.
 * The k/4^n term makes the result strictly increasing. Only dyadic points are sampled.
 */
template <LabelFunction F>
StepFunction dyadic_discretize_xi(const F& xi, int level) {
  if (level < 1 || level > 30) throw std::domain_error("dyadic_discretize_xi: level must be in [1,30]");
  const std::size_t pieces = std::size_t{1} << level;
  const double width = std::ldexp(1.0, -level);
  const double bump = std::ldexp(1.0, -2 * level);
  std::vector<double> values(pieces);
  for (std::size_t k = 1; k <= pieces; ++k)
    values[k - 1] = static_cast<double>(k) * bump + static_cast<double>(xi(static_cast<double>(k - 1) * width));
  for (std::size_t k = 1; k < pieces; ++k)
    if (!(values[k] > values[k - 1])) throw std::domain_error("dyadic_discretize_xi: potential is not non-decreasing");
  return StepFunction::uniform(std::move(values));
}

inline StepFunction dyadic_discretize_xi(const StepFunction& xi, int level) {
  return dyadic_discretize_xi([&xi](double u) { return xi(u); }, level);
}

namespace detail {

// 8-point Gauss-Legendre nodes/weights on [-1,1].
inline constexpr double kGaussNodes[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                          0.9602898564975363};
inline constexpr double kGaussWeights[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                            0.1012285362903763};

template <class F>
double gauss_mean(const F& f, double a, double b, int panels = 16) {
  const double h = (b - a) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    const double half = 0.5 * h;
    for (int i = 0; i < 4; ++i)
      acc += kGaussWeights[i] * (f(mid - half * kGaussNodes[i]) + f(mid + half * kGaussNodes[i])) * half;
  }
  return acc / (b - a);
}

inline int dyadic_level_of(const StepFunction& xi_n) {
  const std::size_t n = xi_n.size();
  if (n < 2 || (n & (n - 1)) != 0) throw std::domain_error("not a dyadic staircase: piece count must be 2^n");
  int level = 0;
  while ((std::size_t{1} << level) < n) ++level;
  for (std::size_t k = 0; k <= n; ++k)
    if (xi_n.breakpoints()[k] != std::ldexp(static_cast<double>(k), -level))
      throw std::domain_error("not a dyadic staircase: breakpoints must be k/2^n");
  return level;
}

}  // namespace detail

/// Block means of g over the uniform dyadic blocks of xi_n. Exact for step inputs.
inline StepFunction dyadic_discretize_g(const StepFunction& g, const StepFunction& xi_n) {
  const int level = detail::dyadic_level_of(xi_n);
  const std::size_t pieces = xi_n.size();
  const double width = std::ldexp(1.0, -level);
  std::vector<double> values(pieces);
  for (std::size_t k = 0; k < pieces; ++k)
    values[k] = g.block_average(static_cast<double>(k) * width, static_cast<double>(k + 1) * width);
  for (std::size_t k = 1; k < pieces; ++k) values[k] = std::max(values[k], values[k - 1]);
  return StepFunction::uniform(std::move(values));
}

/// Block means of a callable g, by composite Gauss-Legendre quadrature (exact for polynomials of degree <= 15).
template <LabelFunction F>
StepFunction dyadic_discretize_g(const F& g, const StepFunction& xi_n) {
  const int level = detail::dyadic_level_of(xi_n);
  const std::size_t pieces = xi_n.size();
  const double width = std::ldexp(1.0, -level);
  std::vector<double> values(pieces);
  for (std::size_t k = 0; k < pieces; ++k)
    values[k] = detail::gauss_mean(g, static_cast<double>(k) * width, static_cast<double>(k + 1) * width);
  for (std::size_t k = 1; k < pieces; ++k) values[k] = std::max(values[k], values[k - 1]);
  return StepFunction::uniform(std::move(values));
}

/// Block means of the identity over 2^level equal pieces: (2k-1)/2^(level+1).
inline StepFunction identity_staircase(int level) {
  if (level < 0 || level > 30) throw std::domain_error("identity_staircase: level must be in [0,30]");
  const std::size_t pieces = std::size_t{1} << level;
  std::vector<double> values(pieces);
  for (std::size_t k = 0; k < pieces; ++k)
    values[k] = std::ldexp(static_cast<double>(2 * k + 1), -(level + 1));
  return StepFunction::uniform(std::move(values));
}

}  // namespace cfwd
