#pragma once

// Sticky-reflected semimartingale on [0, inf):
//   y(t) = y0 + int rho I{y>0} dB + xi0 int I{y=0} ds
// simulated by a change of clock. The driving walk N runs on the clock of
// positive time; its running minimum gives the local time at zero
//   l = max(0, -y0 - min N),
// and every increase of l is followed by a stretch of l-increase / xi0 real time
// spent exactly at zero. Each grid step is either a diffusing step (advances
// the walk clock) or a holding step (y stays 0), so R_t and R0_t are step counts.
// The running minimum includes the exact Brownian-bridge minimum inside each
// walk step, so first passage is not delayed by grid monitoring.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cfwd/noise.hpp"

namespace cfwd {

struct StickyParams {
  double y0 = 0.0;
  double xi0 = 0.0;
  double rho = 1.0;  // constant diffusion factor in [1, rho_max]
  double rho_max = std::numeric_limits<double>::infinity();
  /// Optional state-dependent factor rho(t, y); overrides rho when set.
  std::function<double(double, double)> rho_fn;

  void validate() const {
    if (!(y0 >= 0.0) || !std::isfinite(y0)) throw std::domain_error("sticky: y0 must be a non-negative number");
    if (!(xi0 >= 0.0) || !std::isfinite(xi0)) throw std::domain_error("sticky: xi0 must be a non-negative number");
    if (!(rho >= 1.0 && rho <= rho_max)) throw std::domain_error("sticky: rho must lie in [1, rho_max]");
  }
};

class StickyPath {
 public:
  StickyPath(StickyParams params, double dt) : params_(std::move(params)), dt_(dt) {}

  const StickyParams& params() const noexcept { return params_; }
  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return y_.empty() ? 0 : y_.size() - 1; }
  double time(std::size_t j) const noexcept { return static_cast<double>(j) * dt_; }
  double y(std::size_t j) const { return y_.at(j); }
  bool at_zero(std::size_t j) const { return y_.at(j) == 0.0; }
  const std::vector<double>& values() const noexcept { return y_; }

  /// Diffusing and holding step counts up to grid point j; they always add up to j.
  std::size_t positive_steps(std::size_t j) const { return positive_.at(j); }
  std::size_t zero_steps(std::size_t j) const { return j - positive_.at(j); }

  /// Time spent diffusing (y > 0) on [0, t_j].
  double positive_time(std::size_t j) const { return static_cast<double>(positive_steps(j)) * dt_; }
  /// Time spent held at zero on [0, t_j].
  double zero_time(std::size_t j) const { return static_cast<double>(zero_steps(j)) * dt_; }
  double positive_time() const { return positive_time(steps()); }
  double zero_time() const { return zero_time(steps()); }

  void push(double y, bool diffusing) {
    const std::size_t prev = positive_.empty() ? 0 : positive_.back();
    y_.push_back(y);
    positive_.push_back(positive_.empty() ? 0 : prev + (diffusing ? 1 : 0));
  }

 private:
  StickyParams params_;
  double dt_;
  std::vector<double> y_;
  std::vector<std::size_t> positive_;
};

/// ceil(T/dt) steps of the time-change scheme; deterministic in (seed, replica).
inline StickyPath simulate_sticky(const StickyParams& params, double horizon, double dt, std::uint64_t seed,
                                  std::uint64_t replica = 0) {
  params.validate();
  if (!(dt > 0.0)) throw std::domain_error("sticky: dt must be positive");
  if (!(horizon >= 0.0)) throw std::domain_error("sticky: horizon must be non-negative");
  const std::size_t steps = horizon == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const NoiseStream noise(seed, replica, StreamTag::kSticky);

  StickyPath path(params, dt);
  double walk = 0.0, walk_min = 0.0, local_time = 0.0;
  double hold = 0.0;  // outstanding time to spend at zero; may go slightly negative (carried credit)
  bool absorbed = params.y0 == 0.0 && params.xi0 == 0.0;
  double y = params.y0;
  path.push(y, false);
  const double sqrt_dt = std::sqrt(dt);

  for (std::size_t j = 0; j < steps; ++j) {
    if (absorbed || hold > 0.0) {
      hold -= dt;
      path.push(0.0, false);
      continue;
    }
    const double rho = params.rho_fn ? params.rho_fn(static_cast<double>(j) * dt, y) : params.rho;
    if (!(rho >= 1.0 && rho <= params.rho_max)) throw std::domain_error("sticky: rho hook left [1, rho_max]");
    const double start = walk;
    walk += rho * sqrt_dt * noise.gaussian(j, 0);
    // Minimum of the Brownian bridge from start to walk with variance rho^2 dt.
    const double spread = walk - start;
    const double bridge_min =
        0.5 * (start + walk - std::sqrt(spread * spread - 2.0 * rho * rho * dt * std::log(noise.uniform(j, 1))));
    const bool new_min = bridge_min < walk_min;
    if (new_min) walk_min = bridge_min;
    const double l = std::max(0.0, -params.y0 - walk_min);
    if (l > local_time) {
      if (params.xi0 == 0.0) absorbed = true;
      else hold += (l - local_time) / params.xi0;
      local_time = l;
    }
    if (absorbed) y = 0.0;
    else if (local_time > 0.0) y = walk - walk_min;
    else y = params.y0 + walk;
    path.push(y, true);
  }
  return path;
}

/// sqrt(2t/pi) (xi0 t + y0): bound on the expected time spent away from zero.
inline double sitting_bound(double xi0, double y0, double t) {
  if (!(xi0 >= 0.0 && y0 >= 0.0 && t >= 0.0)) throw std::domain_error("sitting_bound: arguments must be non-negative");
  return std::sqrt(2.0 * t / std::acos(-1.0)) * (xi0 * t + y0);
}

}  // namespace cfwd
