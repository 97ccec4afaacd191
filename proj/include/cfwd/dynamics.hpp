#pragma once

// Time stepping for the finite sticky-reflected particle system.
//
// One step: every cluster receives one shared Gaussian increment scaled by
// 1/sqrt(cluster mass), every piece moves by its intra-cluster potential drift,
// and the tentative positions are projected back onto the monotone cone by
// mass-weighted pool-adjacent-violators. Pooled blocks become the new clusters.
//
// Contact hold: a collision resolved by the projection transfers an impulse
// across the boundary between the pooled pieces. Under ContactRule::kLocalTimeHold
// that boundary stays locked until the separating drift has paid the impulse
// back, which is what makes the contacts sticky rather than reflecting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfwd/noise.hpp"
#include "cfwd/projection.hpp"
#include "cfwd/step_function.hpp"

namespace cfwd {

enum class ContactRule {
  kProjectionOnly,  // plain projection after every step: contacts reflect
  kLocalTimeHold,   // contacts stay closed until the drift repays the collision impulse
};

struct SimOptions {
  double noise_scale = 1.0;  // 0 gives the deterministic debug mode
  ContactRule contact = ContactRule::kLocalTimeHold;
};

struct Cluster {
  std::size_t first;  // inclusive piece range
  std::size_t last;
  double mass;
};

/**
 * Positions of all pieces plus the exact cluster partition.
 *
 * Invariants (checked by check_invariants()):
 *  - positions non-decreasing; equal inside a cluster, strictly increasing across clusters;
 *  - clusters partition the pieces into contiguous ranges;
 *  - potentials non-decreasing, masses positive and summing to 1.
 */
struct ParticleState {
  std::vector<double> breakpoints;  // label grid of the pieces, 0 = first < ... < last = 1
  std::vector<double> masses;
  std::vector<double> positions;
  std::vector<double> potentials;
  std::vector<Cluster> clusters;
  std::vector<std::size_t> cluster_of;  // piece -> cluster index
  /// Outstanding collision impulse per boundary (boundary j sits between pieces j and j+1).
  std::vector<double> contact_debt;
  double time = 0.0;
  std::uint64_t step_index = 0;

  std::size_t size() const noexcept { return masses.size(); }
  double cluster_mass(std::size_t k) const { return clusters[cluster_of[k]].mass; }
  bool same_cluster(std::size_t k, std::size_t l) const { return cluster_of[k] == cluster_of[l]; }

  void rebuild_cluster_index() {
    cluster_of.assign(size(), 0);
    for (std::size_t c = 0; c < clusters.size(); ++c)
      for (std::size_t k = clusters[c].first; k <= clusters[c].last; ++k) cluster_of[k] = c;
  }

  /// Throws std::logic_error describing the first violated invariant.
  void check_invariants() const {
    const std::size_t n = size();
    if (positions.size() != n || potentials.size() != n || cluster_of.size() != n)
      throw std::logic_error("ParticleState: inconsistent sizes");
    if (clusters.empty() || clusters.front().first != 0 || clusters.back().last + 1 != n)
      throw std::logic_error("ParticleState: clusters do not cover all pieces");
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto& cl = clusters[c];
      if (c > 0 && cl.first != clusters[c - 1].last + 1) throw std::logic_error("ParticleState: clusters not contiguous");
      for (std::size_t k = cl.first; k <= cl.last; ++k)
        if (positions[k] != positions[cl.first]) throw std::logic_error("ParticleState: cluster with two positions");
      if (c > 0 && !(positions[cl.first] > positions[clusters[c - 1].first]))
        throw std::logic_error("ParticleState: order violated at piece " + std::to_string(cl.first));
    }
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!(masses[k] > 0.0)) throw std::logic_error("ParticleState: non-positive mass");
      if (k > 0 && potentials[k] < potentials[k - 1]) throw std::logic_error("ParticleState: potential decreasing");
      total += masses[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::logic_error("ParticleState: masses do not sum to 1");
  }
};

/// Time-0 state; pieces with equal initial position start in one cluster.
inline ParticleState init(const StepFunction& g, const StepFunction& xi) {
  auto [gr, xr] = common_refinement(g, xi);
  ParticleState s;
  s.breakpoints = gr.breakpoints();
  s.masses = gr.masses();
  s.positions = gr.values();
  s.potentials = xr.values();
  for (const auto& b : level_sets(gr).blocks) s.clusters.push_back({b.first, b.last, b.mass});
  s.rebuild_cluster_index();
  s.contact_debt.assign(s.size() > 0 ? s.size() - 1 : 0, 0.0);
  return s;
}

/// xi_k minus the mass-weighted mean of xi over the cluster of k.
inline std::vector<double> cluster_drifts(const ParticleState& s) {
  std::vector<double> d(s.size(), 0.0);
  for (const auto& c : s.clusters) {
    if (c.first == c.last) continue;
    double num = 0.0, den = 0.0;
    bool flat = true;
    for (std::size_t k = c.first; k <= c.last; ++k) {
      num += s.masses[k] * s.potentials[k];
      den += s.masses[k];
      flat = flat && s.potentials[k] == s.potentials[c.first];
    }
    if (flat) continue;
    const double mean = num / den;
    for (std::size_t k = c.first; k <= c.last; ++k) d[k] = s.potentials[k] - mean;
  }
  return d;
}

/// Everything one step produced besides the new state, for bookkeeping.
struct StepRecord {
  std::vector<double> drifts;            // per piece, at the pre-step partition
  std::vector<double> cluster_increments;  // per pre-step cluster, sqrt(dt/M) Z
  double center_increment = 0.0;           // sum over clusters of M * sqrt(dt/M) Z
};

namespace detail {

inline void assign_partition_from_fit(ParticleState& s, const std::vector<std::size_t>& unit_first,
                                      const std::vector<std::size_t>& unit_last, const IsotonicFit& fit) {
  s.clusters.clear();
  for (const auto& [ufirst, ulast] : fit.blocks) {
    const std::size_t first = unit_first[ufirst], last = unit_last[ulast];
    double m = 0.0;
    for (std::size_t k = first; k <= last; ++k) m += s.masses[k];
    s.clusters.push_back({first, last, m});
  }
  if (s.clusters.size() == 1) s.clusters.front().mass = 1.0;
  s.rebuild_cluster_index();
}

}  // namespace detail

/**
 * Advances the state by dt using the given standard normal draw z[c] for each cluster c
 * (clusters numbered in label order at the start of the step).
 */
inline ParticleState step_with_noise(const ParticleState& s, double dt, std::span<const double> z,
                                     const SimOptions& opt = {}, StepRecord* record = nullptr) {
  if (!(dt > 0.0)) throw std::domain_error("step: dt must be positive");
  if (z.size() != s.clusters.size()) throw std::invalid_argument("step: need one normal draw per cluster");
  const std::size_t n = s.size();
  const auto drifts = cluster_drifts(s);

  std::vector<double> tentative(n);
  std::vector<double> increments(s.clusters.size());
  double center_increment = 0.0;
  for (std::size_t c = 0; c < s.clusters.size(); ++c) {
    const auto& cl = s.clusters[c];
    increments[c] = std::sqrt(dt / cl.mass) * (opt.noise_scale * z[c]);
    center_increment += cl.mass * increments[c];
    const double base = s.positions[cl.first] + increments[c];
    for (std::size_t k = cl.first; k <= cl.last; ++k) tentative[k] = base + drifts[k] * dt;
  }

  // Locked boundaries glue pieces into units before the projection.
  const bool hold = opt.contact == ContactRule::kLocalTimeHold;
  std::vector<std::size_t> unit_first, unit_last;
  std::vector<double> unit_value, unit_weight;
  for (std::size_t k = 0; k < n; ++k) {
    const bool glued = k > 0 && hold && s.contact_debt[k - 1] > 0.0;
    if (glued) {
      unit_last.back() = k;
      unit_weight.back() += s.masses[k];
      unit_value.back() += s.masses[k] * tentative[k];
    } else {
      unit_first.push_back(k);
      unit_last.push_back(k);
      unit_weight.push_back(s.masses[k]);
      unit_value.push_back(s.masses[k] * tentative[k]);
    }
  }
  for (std::size_t u = 0; u < unit_value.size(); ++u) {
    bool flat = true;
    for (std::size_t k = unit_first[u]; k <= unit_last[u]; ++k) flat = flat && tentative[k] == tentative[unit_first[u]];
    unit_value[u] = flat ? tentative[unit_first[u]] : unit_value[u] / unit_weight[u];
  }

  const IsotonicFit fit = isotonic_fit(unit_value, unit_weight);

  ParticleState next;
  next.breakpoints = s.breakpoints;
  next.masses = s.masses;
  next.potentials = s.potentials;
  next.positions.resize(n);
  next.contact_debt = s.contact_debt;
  next.time = s.time + dt;
  next.step_index = s.step_index + 1;
  detail::assign_partition_from_fit(next, unit_first, unit_last, fit);
  std::size_t u = 0;
  for (const auto& cl : next.clusters) {
    // Every piece of a pooled block gets the block value of its first unit: one value per cluster.
    while (unit_last[u] < cl.first) ++u;
    const double v = fit.values[u];
    for (std::size_t k = cl.first; k <= cl.last; ++k) next.positions[k] = v;
  }

  // Impulse transmitted across each boundary inside a cluster; compression adds debt, drift tension repays it.
  for (const auto& cl : next.clusters) {
    double flux = 0.0;
    for (std::size_t k = cl.first; k < cl.last; ++k) {
      flux += s.masses[k] * (next.positions[k] - tentative[k]);
      if (hold) next.contact_debt[k] -= flux;
    }
  }
  if (!hold) std::fill(next.contact_debt.begin(), next.contact_debt.end(), 0.0);

  for (std::size_t c = 1; c < next.clusters.size(); ++c)
    if (!(next.positions[next.clusters[c].first] > next.positions[next.clusters[c - 1].first]))
      throw std::logic_error("step: monotonicity post-check failed");

  if (record) {
    record->drifts = drifts;
    record->cluster_increments = std::move(increments);
    record->center_increment = center_increment;
  }
  return next;
}

/// Advances the state by dt; cluster c at step j draws noise.gaussian(j, c).
inline ParticleState step(const ParticleState& s, double dt, const NoiseStream& noise, const SimOptions& opt = {},
                          StepRecord* record = nullptr) {
  std::vector<double> z(s.clusters.size(), 0.0);
  if (opt.noise_scale != 0.0)
    for (std::size_t c = 0; c < z.size(); ++c) z[c] = noise.gaussian(s.step_index, static_cast<std::uint32_t>(c));
  return step_with_noise(s, dt, z, opt, record);
}

inline double center_of_mass(const ParticleState& s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) acc += s.masses[k] * s.positions[k];
  return acc;
}

/**
 * A simulated path on the grid t_j = j dt, stored row-major (grid point, piece).
 *
 * drift(j,k) is A(u,t_j) = sum of (xi_k - cluster mean) dt over earlier steps, martingale(j,k)
 * is X - g - A, and qv(j,k) is the sum of dt / (cluster mass) over earlier steps.
 */
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(const ParticleState& initial)
      : pieces_(initial.size()), breakpoints_(initial.breakpoints), initial_(initial.positions), masses_(initial.masses) {
    append_state(initial);
    drift_.insert(drift_.end(), pieces_, 0.0);
    qv_.insert(qv_.end(), pieces_, 0.0);
  }

  std::size_t pieces() const noexcept { return pieces_; }
  std::size_t points() const noexcept { return times_.size(); }
  std::size_t steps() const noexcept { return times_.empty() ? 0 : times_.size() - 1; }
  const std::vector<double>& times() const noexcept { return times_; }
  /// Grid step; 0 for a trajectory without steps.
  double dt() const noexcept { return dt_; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }

  /// Piece holding label u (u = 1 belongs to the last piece).
  std::size_t piece_of(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("label outside [0,1]");
    if (u == 1.0) return pieces_ - 1;
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), u);
    return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  }
  const std::vector<double>& initial_positions() const noexcept { return initial_; }

  double position(std::size_t j, std::size_t k) const { return positions_[j * pieces_ + k]; }
  std::size_t cluster_id(std::size_t j, std::size_t k) const { return cluster_ids_[j * pieces_ + k]; }
  double cluster_mass(std::size_t j, std::size_t k) const { return cluster_masses_[j * pieces_ + k]; }
  std::size_t cluster_count(std::size_t j) const { return cluster_counts_[j]; }
  double drift(std::size_t j, std::size_t k) const { return drift_[j * pieces_ + k]; }
  double qv(std::size_t j, std::size_t k) const { return qv_[j * pieces_ + k]; }
  double martingale(std::size_t j, std::size_t k) const { return position(j, k) - initial_[k] - drift(j, k); }
  bool same_cluster(std::size_t j, std::size_t k, std::size_t l) const { return cluster_id(j, k) == cluster_id(j, l); }

  /// Centre of mass (X_t, 1) at grid point j.
  double center_of_mass(std::size_t j) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < pieces_; ++k) acc += masses_[k] * position(j, k);
    return acc;
  }
  /// sum over clusters of sqrt(M dt) Z for step j -> j+1.
  double center_increment(std::size_t j) const { return center_increments_[j]; }

  void append(const ParticleState& next, const StepRecord& rec, double dt) {
    const std::size_t j = points() - 1;
    dt_ = dt;
    for (std::size_t k = 0; k < pieces_; ++k) {
      drift_.push_back(drift(j, k) + rec.drifts[k] * dt);
      qv_.push_back(qv(j, k) + dt / cluster_mass(j, k));
    }
    center_increments_.push_back(rec.center_increment);
    append_state(next);
  }

 private:
  void append_state(const ParticleState& s) {
    times_.push_back(s.time);
    cluster_counts_.push_back(s.clusters.size());
    for (std::size_t k = 0; k < pieces_; ++k) {
      positions_.push_back(s.positions[k]);
      cluster_ids_.push_back(s.cluster_of[k]);
      cluster_masses_.push_back(s.cluster_mass(k));
    }
  }

  std::size_t pieces_ = 0;
  std::vector<double> breakpoints_;
  double dt_ = 0.0;
  std::vector<double> initial_;
  std::vector<double> masses_;
  std::vector<double> times_;
  std::vector<double> positions_;
  std::vector<std::size_t> cluster_ids_;
  std::vector<double> cluster_masses_;
  std::vector<std::size_t> cluster_counts_;
  std::vector<double> drift_;
  std::vector<double> qv_;
  std::vector<double> center_increments_;
};

/// Number of grid steps covering [0,T] with step dt.
inline std::size_t step_count(double horizon, double dt) {
  if (!(horizon >= 0.0)) throw std::domain_error("horizon must be non-negative");
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  if (horizon == 0.0) return 0;
  if (dt > horizon) throw std::domain_error("dt must not exceed the horizon");
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

/// Simulates ceil(T/dt) steps from init(g, xi); deterministic in (seed, replica).
inline Trajectory simulate(const StepFunction& g, const StepFunction& xi, double horizon, double dt, std::uint64_t seed,
                           std::uint64_t replica, const SimOptions& opt = {}) {
  const std::size_t steps = step_count(horizon, dt);
  ParticleState state = init(g, xi);
  Trajectory traj(state);
  const NoiseStream noise(seed, replica, StreamTag::kParticles);
  StepRecord rec;
  for (std::size_t j = 0; j < steps; ++j) {
    ParticleState next = step(state, dt, noise, opt, &rec);
    next.time = static_cast<double>(j + 1) * dt;
    traj.append(next, rec, dt);
    state = std::move(next);
  }
  return traj;
}

/// Sum of squared martingale increments of piece k over the grid.
inline double realized_qv(const Trajectory& traj, std::size_t k) {
  if (k >= traj.pieces()) throw std::out_of_range("realized_qv: piece index");
  double acc = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j) {
    const double dm = traj.martingale(j + 1, k) - traj.martingale(j, k);
    acc += dm * dm;
  }
  return acc;
}

/// Sum of products of martingale increments of pieces k and l.
inline double realized_cross_qv(const Trajectory& traj, std::size_t k, std::size_t l) {
  if (k >= traj.pieces() || l >= traj.pieces()) throw std::out_of_range("realized_cross_qv: piece index");
  if (k == l) throw std::invalid_argument("realized_cross_qv: need distinct pieces");
  double acc = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j)
    acc += (traj.martingale(j + 1, k) - traj.martingale(j, k)) * (traj.martingale(j + 1, l) - traj.martingale(j, l));
  return acc;
}

/// sum_j dt I{k,l in one cluster at t_j} / M_C(t_j): the grid version of the cross-variation.
inline double indicator_cross_qv(const Trajectory& traj, std::size_t k, std::size_t l) {
  double acc = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j)
    if (traj.same_cluster(j, k, l)) acc += traj.dt() / traj.cluster_mass(j, k);
  return acc;
}

/// Bracket of the centre of mass: sum_j dt * (sum over clusters of M_C), which is t on every path.
inline double center_bracket_qv(const Trajectory& traj) {
  double acc = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j) {
    double total = 0.0;
    std::size_t last_id = traj.pieces();
    for (std::size_t k = 0; k < traj.pieces(); ++k) {
      if (traj.cluster_id(j, k) == last_id) continue;
      last_id = traj.cluster_id(j, k);
      total += traj.cluster_mass(j, k);
    }
    acc += traj.dt() * total;
  }
  return acc;
}

/// Sum of squared centre-of-mass increments over the grid.
inline double realized_center_qv(const Trajectory& traj) {
  double acc = 0.0;
  for (std::size_t j = 0; j < traj.steps(); ++j) {
    const double d = traj.center_of_mass(j + 1) - traj.center_of_mass(j);
    acc += d * d;
  }
  return acc;
}

}  // namespace cfwd
