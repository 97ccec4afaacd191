#pragma once

// Monte Carlo checks of the moment and probability bounds for the particle
// system, run over replica ensembles.
//
// Every check returns a VerificationReport. Bound checks pass when
// lhs <= rhs + 3 se. Checks whose constants are not explicit are report-only
// and never carry a pass/fail verdict.
//
// Replicas may run on several threads, but each result is stored at its
// replica index and reduced sequentially, so reports are bit-identical for any
// thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "cfwd/dynamics.hpp"
#include "cfwd/step_function.hpp"
#include "cfwd/sticky1d.hpp"

namespace cfwd {

/// Mean and variance accumulator (Welford); merge() combines two partial results.
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
    min_ = std::min(min_, o.min_);
    max_ = std::max(max_, o.max_);
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double se() const noexcept { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

enum class ReportKind {
  kBound,       // pass iff lhs <= rhs + 3 se
  kAgreement,   // pass iff |lhs - rhs| <= 3 se
  kComposite,   // verdict from several sub-checks listed in extras
  kReportOnly,  // estimate plus structural factor, no verdict
};

enum class Verdict { kPass, kFail, kReportOnly };

inline const char* to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    default: return "report-only";
  }
}

inline const char* to_string(ReportKind k) noexcept {
  switch (k) {
    case ReportKind::kBound: return "bound";
    case ReportKind::kAgreement: return "agreement";
    case ReportKind::kComposite: return "composite";
    default: return "report-only";
  }
}

using NamedValues = std::vector<std::pair<std::string, double>>;

struct VerificationReport {
  std::string name;
  NamedValues params;  // in insertion order
  double lhs = 0.0;
  double rhs = 0.0;  // bound, reference value, or structural factor for report-only checks
  double se = 0.0;
  std::size_t replicas = 0;
  ReportKind kind = ReportKind::kBound;
  Verdict verdict = Verdict::kReportOnly;
  std::uint64_t seed = 0;
  NamedValues extras;

  bool failed() const noexcept { return verdict == Verdict::kFail; }

  double param(std::string_view key) const { return lookup(params, key); }
  double extra(std::string_view key) const { return lookup(extras, key); }

 private:
  static double lookup(const NamedValues& v, std::string_view key) {
    for (const auto& [k, x] : v)
      if (k == key) return x;
    throw std::out_of_range("report has no entry '" + std::string(key) + "'");
  }
};

inline Verdict bound_verdict(double lhs, double rhs, double se) { return lhs <= rhs + 3.0 * se ? Verdict::kPass : Verdict::kFail; }
inline Verdict agreement_verdict(double lhs, double rhs, double se) {
  return std::abs(lhs - rhs) <= 3.0 * se ? Verdict::kPass : Verdict::kFail;
}

/// Calls fn(i) for i in [0, count) on up to `threads` workers; results come back in index order.
template <class Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(count);
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// A replica ensemble of the particle system: replica i uses noise stream (seed, i).
struct EnsembleSpec {
  StepFunction g = StepFunction::constant(0.0);
  StepFunction xi = StepFunction::constant(0.0);
  double horizon = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  std::size_t replicas = 1000;
  unsigned threads = 1;
  SimOptions options{};

  void validate() const {
    if (replicas == 0) throw std::invalid_argument("ensemble: replicas must be positive");
    step_count(horizon, dt);
  }
};

/// Simulates every replica and maps it through fn(trajectory); results in replica order.
template <class Fn>
auto map_ensemble(const EnsembleSpec& spec, Fn&& fn) {
  spec.validate();
  return parallel_map(spec.replicas, spec.threads, [&](std::size_t i) {
    return fn(simulate(spec.g, spec.xi, spec.horizon, spec.dt, spec.seed, i, spec.options));
  });
}

/// The functions G, G0 and G1 built from the initial condition g and potential xi.
class GFunction {
 public:
  using Fn = std::function<double(double)>;

  GFunction(Fn g, Fn xi) : g_(std::move(g)), xi_(std::move(xi)) {}
  GFunction(const StepFunction& g, const StepFunction& xi)
      : g_([g](double u) { return g(u); }), xi_([xi](double u) { return xi(u); }) {}

  double G(double r1, double r2, double u, double t) const {
    if (!(r1 >= 0.0 && r2 >= 0.0 && u - r1 >= 0.0 && u + r2 <= 1.0))
      throw std::domain_error("G: need u - r1 >= 0 and u + r2 <= 1");
    if (!(t >= 0.0)) throw std::domain_error("G: need t >= 0");
    const double gp = g_(u + r2) - g_(u), gm = g_(u) - g_(u - r1);
    const double xp = xi_(u + r2) - xi_(u), xm = xi_(u) - xi_(u - r1);
    return 2.0 * gp * gm + 2.0 * xm * (t * gp + 0.5 * t * t * xp) + 2.0 * xp * (t * gm + 0.5 * t * t * xm);
  }

  double G0(double r, double u, double t) const {
    if (!(r >= 0.0 && u >= 0.0 && u + r <= 1.0)) throw std::domain_error("G0: need u >= 0, r >= 0, u + r <= 1");
    if (!(t >= 0.0)) throw std::domain_error("G0: need t >= 0");
    return (xi_(u + r) - xi_(u)) * t + g_(u + r) - g_(u);
  }

  double G1(double r, double u, double t) const {
    if (!(r >= 0.0 && u <= 1.0 && u - r >= 0.0)) throw std::domain_error("G1: need u <= 1, r >= 0, u - r >= 0");
    if (!(t >= 0.0)) throw std::domain_error("G1: need t >= 0");
    return (xi_(u) - xi_(u - r)) * t + g_(u) - g_(u - r);
  }

 private:
  Fn g_;
  Fn xi_;
};

namespace detail {

inline std::size_t grid_index(double t, double dt, std::size_t steps) {
  if (t == 0.0) return 0;
  const std::size_t j = step_count(t, dt);
  if (j > steps) throw std::domain_error("probe time beyond the simulated horizon");
  return j;
}

inline VerificationReport make_report(std::string name, NamedValues params, const EnsembleSpec& spec) {
  VerificationReport rep;
  rep.name = std::move(name);
  rep.params = std::move(params);
  rep.params.emplace_back("T", spec.horizon);
  rep.params.emplace_back("dt", spec.dt);
  rep.replicas = spec.replicas;
  rep.seed = spec.seed;
  return rep;
}

/// dt * #{grid steps j < steps_t with cluster mass of piece k below r}.
inline double small_mass_time(const Trajectory& tr, std::size_t k, double r, std::size_t steps_t) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < steps_t; ++j) hits += tr.cluster_mass(j, k) < r ? 1 : 0;
  return static_cast<double>(hits) * tr.dt();
}

}  // namespace detail

/// One point (u, r, t) of the small-mass occupation bound.
struct MassLemmaPoint {
  double u;
  double r;
  double t;
};

inline void validate_mass_point(const MassLemmaPoint& p, double horizon) {
  if (!(p.u > 0.0 && p.u < 1.0)) throw std::domain_error("mass lemma: u must lie in (0,1)");
  if (!(p.r > 0.0 && p.r <= std::min(p.u, 1.0 - p.u))) throw std::domain_error("mass lemma: need 0 < r <= min(u, 1-u)");
  if (!(p.t >= 0.0 && p.t <= horizon)) throw std::domain_error("mass lemma: t must lie in [0, T]");
}

/**
 * int_0^t P{m(u,s) < r} ds <= r G(r,r,u,t) for each point, all from one ensemble.
 * The cluster mass is read at the left end of each grid step.
 */
inline std::vector<VerificationReport> check_mass_lemma_grid(const EnsembleSpec& spec,
                                                             const std::vector<MassLemmaPoint>& points) {
  for (const auto& p : points) validate_mass_point(p, spec.horizon);
  const std::size_t steps = step_count(spec.horizon, spec.dt);
  std::vector<std::size_t> steps_t;
  for (const auto& p : points) steps_t.push_back(detail::grid_index(p.t, spec.dt, steps));

  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    std::vector<double> v(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      v[i] = detail::small_mass_time(tr, tr.piece_of(points[i].u), points[i].r, steps_t[i]);
    return v;
  });

  const GFunction gf(spec.g, spec.xi);
  std::vector<VerificationReport> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    RunningStats st;
    for (const auto& v : per_replica) st.add(v[i]);
    const auto& p = points[i];
    auto rep = detail::make_report("mass_lemma", {{"u", p.u}, {"r", p.r}, {"t", p.t}}, spec);
    rep.kind = ReportKind::kBound;
    rep.lhs = st.mean();
    rep.se = st.se();
    rep.rhs = p.r * gf.G(p.r, p.r, p.u, p.t);
    rep.verdict = bound_verdict(rep.lhs, rep.rhs, rep.se);
    out.push_back(std::move(rep));
  }
  return out;
}

inline VerificationReport check_mass_lemma(const EnsembleSpec& spec, double u, double r, double t) {
  return check_mass_lemma_grid(spec, {{u, r, t}}).front();
}

struct ThreePointsCase {
  double u;
  double r1;
  double r2;
  double lambda;
};

/**
 * P{ sup_{[0,T]} (X(u+r2)-X(u)) > lambda and sup_{[0,T]} (X(u)-X(u-r1)) > lambda } <= G(r1,r2,u,T) / (2 lambda^2),
 * with suprema over grid points.
 */
inline std::vector<VerificationReport> check_three_points_grid(const EnsembleSpec& spec,
                                                               const std::vector<ThreePointsCase>& cases) {
  for (const auto& c : cases) {
    if (!(c.u > 0.0 && c.u < 1.0)) throw std::domain_error("three points: u must lie in (0,1)");
    if (!(c.r1 > 0.0 && c.r1 <= c.u)) throw std::domain_error("three points: need r1 in (0, u]");
    if (!(c.r2 > 0.0 && c.r2 <= 1.0 - c.u)) throw std::domain_error("three points: need r2 in (0, 1-u]");
    if (!(c.lambda > 0.0)) throw std::domain_error("three points: lambda must be positive");
  }
  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    std::vector<double> hit(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      const std::size_t lo = tr.piece_of(c.u - c.r1), mid = tr.piece_of(c.u), hi = tr.piece_of(c.u + c.r2);
      double up = 0.0, down = 0.0;
      for (std::size_t j = 0; j < tr.points(); ++j) {
        up = std::max(up, tr.position(j, hi) - tr.position(j, mid));
        down = std::max(down, tr.position(j, mid) - tr.position(j, lo));
      }
      hit[i] = up > c.lambda && down > c.lambda ? 1.0 : 0.0;
    }
    return hit;
  });

  const GFunction gf(spec.g, spec.xi);
  std::vector<VerificationReport> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    RunningStats st;
    for (const auto& v : per_replica) st.add(v[i]);
    const auto& c = cases[i];
    auto rep = detail::make_report("three_points", {{"u", c.u}, {"r1", c.r1}, {"r2", c.r2}, {"lambda", c.lambda}}, spec);
    rep.kind = ReportKind::kBound;
    rep.lhs = st.mean();
    const double n = static_cast<double>(st.count());
    rep.se = std::sqrt(rep.lhs * (1.0 - rep.lhs) / n);  // binomial
    rep.rhs = gf.G(c.r1, c.r2, c.u, spec.horizon) / (2.0 * c.lambda * c.lambda);
    rep.verdict = bound_verdict(rep.lhs, rep.rhs, rep.se);
    out.push_back(std::move(rep));
  }
  return out;
}

inline VerificationReport check_three_points(const EnsembleSpec& spec, double u, double r1, double r2, double lambda) {
  return check_three_points_grid(spec, {{u, r1, r2, lambda}}).front();
}

struct BoundaryMassCase {
  int side;  // 0 or 1
  double u;
  double r;
  double t;
  double alpha;
};

/**
 * Small-mass occupation time near label 0 or 1 with the structural factor
 * (sqrt(u+r))^alpha G0^alpha, or (sqrt(1-u+r))^alpha G1^alpha. Report-only.
 */
inline std::vector<VerificationReport> check_mass_near_boundary_grid(const EnsembleSpec& spec,
                                                                     const std::vector<BoundaryMassCase>& cases) {
  const std::size_t steps = step_count(spec.horizon, spec.dt);
  std::vector<std::size_t> steps_t;
  for (const auto& c : cases) {
    if (c.side != 0 && c.side != 1) throw std::domain_error("boundary mass: side must be 0 or 1");
    if (!(c.r > 0.0 && c.r < 1.0)) throw std::domain_error("boundary mass: r must lie in (0,1)");
    if (c.side == 0 && !(c.u >= 0.0 && c.u < c.r && c.u + c.r <= 1.0))
      throw std::domain_error("boundary mass: side 0 needs 0 <= u < r and u + r <= 1");
    if (c.side == 1 && !(c.u > 1.0 - c.r && c.u <= 1.0 && c.u - c.r >= 0.0))
      throw std::domain_error("boundary mass: side 1 needs 1 - r < u <= 1 and u - r >= 0");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw std::domain_error("boundary mass: alpha must lie in (0,1)");
    if (!(c.t >= 0.0 && c.t <= spec.horizon)) throw std::domain_error("boundary mass: t must lie in [0, T]");
    steps_t.push_back(detail::grid_index(c.t, spec.dt, steps));
  }
  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    std::vector<double> v(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i)
      v[i] = detail::small_mass_time(tr, tr.piece_of(cases[i].u), cases[i].r, steps_t[i]);
    return v;
  });

  const GFunction gf(spec.g, spec.xi);
  std::vector<VerificationReport> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    RunningStats st;
    for (const auto& v : per_replica) st.add(v[i]);
    const auto& c = cases[i];
    auto rep = detail::make_report(c.side == 0 ? "mass_near_0" : "mass_near_1",
                                   {{"u", c.u}, {"r", c.r}, {"t", c.t}, {"alpha", c.alpha}}, spec);
    rep.kind = ReportKind::kReportOnly;
    rep.verdict = Verdict::kReportOnly;
    rep.lhs = st.mean();
    rep.se = st.se();
    const double reach = c.side == 0 ? c.u + c.r : 1.0 - c.u + c.r;
    const double gval = c.side == 0 ? gf.G0(c.r, c.u, c.t) : gf.G1(c.r, c.u, c.t);
    rep.rhs = std::pow(std::sqrt(reach), c.alpha) * std::pow(gval, c.alpha);
    rep.extras.emplace_back("G_boundary", gval);
    out.push_back(std::move(rep));
  }
  return out;
}

inline VerificationReport check_mass_near_boundary(const EnsembleSpec& spec, int side, double u, double r, double t,
                                                   double alpha) {
  return check_mass_near_boundary_grid(spec, {{side, u, r, t, alpha}}).front();
}

/**
 * E int_0^1 int_0^t m(u,s)^-beta ds du, estimated as sum_k m_k sum_j dt / M_C^beta,
 * with the structural factor 1 + ||g||_p^3 + ||xi||_p. Report-only.
 */
inline std::vector<VerificationReport> check_dispersion_moment_grid(const EnsembleSpec& spec, const std::vector<double>& betas,
                                                                    double p, double t) {
  if (!(p > 2.0)) throw std::domain_error("dispersion moment: p must exceed 2");
  for (double b : betas)
    if (!(b > 0.0 && b < 1.5 - 1.0 / p)) throw std::domain_error("dispersion moment: need 0 < beta < 3/2 - 1/p");
  if (!(t >= 0.0 && t <= spec.horizon)) throw std::domain_error("dispersion moment: t must lie in [0, T]");
  const std::size_t steps_t = detail::grid_index(t, spec.dt, step_count(spec.horizon, spec.dt));

  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    std::vector<double> v(betas.size(), 0.0);
    for (std::size_t j = 0; j < steps_t; ++j)
      for (std::size_t k = 0; k < tr.pieces(); ++k)
        for (std::size_t i = 0; i < betas.size(); ++i)
          v[i] += tr.masses()[k] * tr.dt() / std::pow(tr.cluster_mass(j, k), betas[i]);
    return v;
  });

  const double structural = 1.0 + std::pow(lp_norm(spec.g, p), 3.0) + lp_norm(spec.xi, p);
  std::vector<VerificationReport> out;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    RunningStats st;
    for (const auto& v : per_replica) st.add(v[i]);
    auto rep = detail::make_report("dispersion_moment", {{"beta", betas[i]}, {"p", p}, {"t", t}}, spec);
    rep.kind = ReportKind::kReportOnly;
    rep.verdict = Verdict::kReportOnly;
    rep.lhs = st.mean();
    rep.se = st.se();
    rep.rhs = structural;
    out.push_back(std::move(rep));
  }
  return out;
}

inline VerificationReport check_dispersion_moment(const EnsembleSpec& spec, double beta, double p, double t) {
  return check_dispersion_moment_grid(spec, {beta}, p, t).front();
}

/**
 * E sup_{s <= t} ||X_s - g||_{L_{2+delta}}^{2+delta} over grid points, with the structural factor
 * 1 + ||g||_{2+eps}^3 + ||xi||_{2+eps}. Report-only.
 */
inline VerificationReport check_sup_moment(const EnsembleSpec& spec, double delta, double eps, double t) {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::domain_error("sup moment: delta must lie in [0,1)");
  if (!(eps > 2.0 * delta / (1.0 - delta))) throw std::domain_error("sup moment: need eps > 2 delta / (1 - delta)");
  if (!(t >= 0.0 && t <= spec.horizon)) throw std::domain_error("sup moment: t must lie in [0, T]");
  const std::size_t steps_t = detail::grid_index(t, spec.dt, step_count(spec.horizon, spec.dt));
  const double q = 2.0 + delta;

  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    double sup = 0.0;
    for (std::size_t j = 0; j <= steps_t; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tr.pieces(); ++k)
        acc += tr.masses()[k] * std::pow(std::abs(tr.position(j, k) - tr.initial_positions()[k]), q);
      sup = std::max(sup, acc);
    }
    return sup;
  });
  RunningStats st;
  for (double v : per_replica) st.add(v);
  auto rep = detail::make_report("sup_moment", {{"delta", delta}, {"eps", eps}, {"t", t}}, spec);
  rep.kind = ReportKind::kReportOnly;
  rep.verdict = Verdict::kReportOnly;
  rep.lhs = st.mean();
  rep.se = st.se();
  rep.rhs = 1.0 + std::pow(lp_norm(spec.g, 2.0 + eps), 3.0) + lp_norm(spec.xi, 2.0 + eps);
  return rep;
}

/// Probe (t, s): tests the increment M(t+s) - M(t).
struct MartingaleProbe {
  double t;
  double s;
};

namespace detail {

/// z statistic with a degenerate-sample convention: zero spread and zero mean gives 0.
inline double z_score(double estimate, double se) {
  if (se > 0.0) return estimate / se;
  return std::abs(estimate) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/**
 * The martingale part M = X - g - A of piece k: for each probe, z-tests that the mean increment over
 * [t, t+s] is 0 and that its regression slope on M(t) is 0. Passes if every |z| <= 3.
 */
inline VerificationReport martingale_test(const EnsembleSpec& spec, std::size_t k, std::vector<MartingaleProbe> probes = {},
                                          std::size_t min_replicas = 1000) {
  if (spec.replicas < min_replicas)
    throw std::invalid_argument("martingale test: needs at least " + std::to_string(min_replicas) + " replicas");
  const std::size_t steps = step_count(spec.horizon, spec.dt);
  if (probes.empty()) probes = {{0.0, 0.25 * spec.horizon}, {0.25 * spec.horizon, 0.5 * spec.horizon},
                                {0.5 * spec.horizon, 0.5 * spec.horizon}};
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (const auto& p : probes) {
    if (!(p.t >= 0.0 && p.s > 0.0 && p.t + p.s <= spec.horizon * (1.0 + 1e-12)))
      throw std::domain_error("martingale test: probe outside [0, T]");
    idx.emplace_back(detail::grid_index(p.t, spec.dt, steps), detail::grid_index(std::min(p.t + p.s, spec.horizon), spec.dt, steps));
  }

  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    if (k >= tr.pieces()) throw std::out_of_range("martingale test: piece index");
    std::vector<std::pair<double, double>> v;
    for (const auto& [a, b] : idx) v.emplace_back(tr.martingale(a, k), tr.martingale(b, k) - tr.martingale(a, k));
    return v;
  });

  auto rep = detail::make_report("martingale", {{"piece", static_cast<double>(k)}}, spec);
  rep.kind = ReportKind::kComposite;
  const double n = static_cast<double>(spec.replicas);
  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    RunningStats base, inc;
    for (const auto& v : per_replica) {
      base.add(v[i].first);
      inc.add(v[i].second);
    }
    const double z_mean = detail::z_score(inc.mean(), inc.se());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& v : per_replica) {
      sxx += (v[i].first - base.mean()) * (v[i].first - base.mean());
      sxy += (v[i].first - base.mean()) * (v[i].second - inc.mean());
    }
    double z_slope = 0.0;
    if (sxx > 0.0 && n > 2.0) {
      const double slope = sxy / sxx;
      double rss = 0.0;
      for (const auto& v : per_replica) {
        const double r = (v[i].second - inc.mean()) - slope * (v[i].first - base.mean());
        rss += r * r;
      }
      z_slope = detail::z_score(slope, std::sqrt(rss / (n - 2.0) / sxx));
    }
    const std::string tag = "probe" + std::to_string(i);
    rep.extras.emplace_back(tag + "_t", probes[i].t);
    rep.extras.emplace_back(tag + "_s", probes[i].s);
    rep.extras.emplace_back(tag + "_mean_increment", inc.mean());
    rep.extras.emplace_back(tag + "_z_mean", z_mean);
    rep.extras.emplace_back(tag + "_z_slope", z_slope);
    worst = std::max({worst, std::abs(z_mean), std::abs(z_slope)});
  }
  rep.lhs = worst;
  rep.rhs = 3.0;
  rep.se = 0.0;
  rep.verdict = worst <= 3.0 ? Verdict::kPass : Verdict::kFail;
  return rep;
}

/**
 * Mean realized (cross-)variation of the martingale parts of pieces k, l against the mean of
 * sum_j dt I{same cluster} / M_C. For k = l the realized side is the sum of squared increments.
 * SE combines the SEs of both means; the paired difference is reported alongside.
 */
inline VerificationReport qv_consistency(const EnsembleSpec& spec, std::size_t k, std::size_t l) {
  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    const double realized = k == l ? realized_qv(tr, k) : realized_cross_qv(tr, k, l);
    return std::pair{realized, indicator_cross_qv(tr, k, l)};
  });
  RunningStats real, ind, diff;
  for (const auto& [a, b] : per_replica) {
    real.add(a);
    ind.add(b);
    diff.add(a - b);
  }
  auto rep = detail::make_report("qv_consistency", {{"k", static_cast<double>(k)}, {"l", static_cast<double>(l)}}, spec);
  rep.kind = ReportKind::kAgreement;
  rep.lhs = real.mean();
  rep.rhs = ind.mean();
  rep.se = std::sqrt(real.se() * real.se() + ind.se() * ind.se());
  rep.verdict = agreement_verdict(rep.lhs, rep.rhs, rep.se);
  rep.extras.emplace_back("paired_diff", diff.mean());
  rep.extras.emplace_back("paired_se", diff.se());
  rep.extras.emplace_back("paired_z", detail::z_score(diff.mean(), diff.se()));
  return rep;
}

/**
 * The centre of mass (X_t, 1) as a Wiener process: terminal mean within 4 SE of the start, terminal
 * variance within 10% of T, and on every path the bracket and the increment bookkeeping exact to 1e-9.
 */
inline VerificationReport wiener_center_test(const EnsembleSpec& spec, std::size_t min_replicas = 10000) {
  if (spec.replicas < min_replicas)
    throw std::invalid_argument("wiener centre test: needs at least " + std::to_string(min_replicas) + " replicas");
  struct PathStats {
    double start = 0.0, displacement = 0.0, bracket = 0.0, bookkeeping = 0.0, realized = 0.0;
  };
  const auto per_replica = map_ensemble(spec, [&](const Trajectory& tr) {
    PathStats p;
    p.start = tr.center_of_mass(0);
    p.displacement = tr.center_of_mass(tr.steps()) - p.start;
    p.bracket = center_bracket_qv(tr);
    double noise_sum = 0.0;
    for (std::size_t j = 0; j < tr.steps(); ++j) noise_sum += tr.center_increment(j);
    p.bookkeeping = std::abs(p.displacement - noise_sum);
    p.realized = realized_center_qv(tr);
    return p;
  });
  RunningStats disp, realized;
  double bracket_err = 0.0, book_err = 0.0;
  for (const auto& p : per_replica) {
    disp.add(p.displacement);
    realized.add(p.realized);
    bracket_err = std::max(bracket_err, std::abs(p.bracket - spec.horizon));
    book_err = std::max(book_err, p.bookkeeping);
  }
  auto rep = detail::make_report("wiener_center", {}, spec);
  rep.kind = ReportKind::kComposite;
  rep.lhs = disp.mean();
  rep.rhs = 0.0;
  rep.se = disp.se();
  const bool mean_ok = std::abs(disp.mean()) <= 4.0 * disp.se() || (disp.se() == 0.0 && disp.mean() == 0.0);
  const double var_ratio = disp.variance() / spec.horizon;
  const bool var_ok = var_ratio >= 0.9 && var_ratio <= 1.1;
  const bool bracket_ok = bracket_err <= 1e-9;
  const bool book_ok = book_err <= 1e-9;
  rep.extras = {{"terminal_variance", disp.variance()},
                {"variance_ratio", var_ratio},
                {"max_bracket_error", bracket_err},
                {"max_bookkeeping_error", book_err},
                {"realized_qv_mean", realized.mean()},
                {"realized_qv_se", realized.se()},
                {"mean_ok", mean_ok ? 1.0 : 0.0},
                {"variance_ok", var_ok ? 1.0 : 0.0},
                {"bracket_ok", bracket_ok ? 1.0 : 0.0},
                {"bookkeeping_ok", book_ok ? 1.0 : 0.0}};
  rep.verdict = mean_ok && var_ok && bracket_ok && book_ok ? Verdict::kPass : Verdict::kFail;
  return rep;
}

/**
 * Expected time away from zero of the sticky process against sqrt(2T/pi)(xi0 T + y0).
 * extras carry the mean time at zero, the largest per-path time away from zero, and twice the bound.
 */
inline VerificationReport check_sitting_time(const StickyParams& params, double horizon, double dt, std::size_t replicas,
                                             std::uint64_t seed, unsigned threads = 1) {
  params.validate();
  if (replicas == 0) throw std::invalid_argument("sitting time: replicas must be positive");
  const auto per_replica = parallel_map(replicas, threads, [&](std::size_t i) {
    const StickyPath path = simulate_sticky(params, horizon, dt, seed, i);
    return std::pair{path.positive_time(), path.zero_time()};
  });
  RunningStats away, zero;
  for (const auto& [a, z] : per_replica) {
    away.add(a);
    zero.add(z);
  }
  VerificationReport rep;
  rep.name = "sitting_time";
  rep.params = {{"xi0", params.xi0}, {"y0", params.y0}, {"rho", params.rho}, {"T", horizon}, {"dt", dt}};
  rep.replicas = replicas;
  rep.seed = seed;
  rep.kind = ReportKind::kBound;
  rep.lhs = away.mean();
  rep.se = away.se();
  rep.rhs = sitting_bound(params.xi0, params.y0, horizon);
  rep.verdict = bound_verdict(rep.lhs, rep.rhs, rep.se);
  rep.extras = {{"zero_time_mean", zero.mean()}, {"max_time_away", away.max()}, {"doubled_bound", 2.0 * rep.rhs}};
  return rep;
}

}  // namespace cfwd
