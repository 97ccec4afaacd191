#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "cfwd/verify.hpp"
#include "oracles.hpp"

using cfwd::StepFunction;

namespace {

cfwd::EnsembleSpec four_piece(std::size_t replicas, double dt = 1e-3) {
  cfwd::EnsembleSpec s;
  s.g = cfwd::identity_staircase(2);
  s.xi = cfwd::dyadic_discretize_xi([](double u) { return u; }, 2);
  s.horizon = 1.0;
  s.dt = dt;
  s.seed = 2718;
  s.replicas = replicas;
  return s;
}

cfwd::EnsembleSpec constant_system(std::size_t replicas) {
  cfwd::EnsembleSpec s;
  s.g = StepFunction::uniform({0.5, 0.5, 0.5, 0.5});
  s.xi = StepFunction::constant(1.0);
  s.horizon = 1.0;
  s.dt = 1e-2;
  s.replicas = replicas;
  return s;
}

double identity(double u) { return u; }

}  // namespace

TEST(RunningStats, MatchesTwoPassAndMerges) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(3.0, 2.0);
  std::vector<double> xs(1001);
  for (auto& x : xs) x = normal(rng);
  cfwd::RunningStats all, left, right;
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    all.add(xs[i]);
    (i < 400 ? left : right).add(xs[i]);
    sum += xs[i];
  }
  const double mean = sum / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(all.mean(), mean, 1e-12);
  EXPECT_NEAR(all.variance(), ss / (xs.size() - 1), 1e-10);
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  EXPECT_NEAR(left.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-10);
}

TEST(GFunction, Examples) {
  const cfwd::GFunction constants(StepFunction::constant(1.0), StepFunction::constant(2.0));
  EXPECT_EQ(constants.G(0.2, 0.3, 0.5, 1.0), 0.0);
  EXPECT_EQ(constants.G0(0.1, 0.0, 1.0), 0.0);
  EXPECT_EQ(constants.G1(0.1, 1.0, 1.0), 0.0);

  const auto g = StepFunction::uniform({0, 1, 3, 4});
  const cfwd::GFunction flat_xi(g, StepFunction::constant(0.0));
  // Only 2 (g(u+r2)-g(u)) (g(u)-g(u-r1)) survives: 2 * (4-3) * (3-1).
  EXPECT_EQ(flat_xi.G(0.25, 0.25, 0.5, 7.0), 2.0 * (4.0 - 3.0) * (3.0 - 1.0));

  // g = xi = identity, u = .5, r1 = r2 = .25, t = 1. Each increment is .25, so the three terms are
  // 2(.25)(.25) = .125 and twice 2(.25)(.25 + .5 * .25) = .1875, total 0.5.
  const cfwd::GFunction id(identity, identity);
  EXPECT_NEAR(id.G(0.25, 0.25, 0.5, 1.0), 0.5, 1e-15);

  const cfwd::GFunction id_flat(identity, [](double) { return 0.0; });
  for (double u : {0.0, 0.3, 0.85}) EXPECT_NEAR(id_flat.G0(0.1, u, 5.0), 0.1, 1e-15);
  for (double u : {0.1, 0.3, 1.0}) EXPECT_NEAR(id_flat.G1(0.1, u, 5.0), 0.1, 1e-15);
  EXPECT_NEAR(id.G0(0.1, 0.2, 2.0), 0.3, 1e-15);
  EXPECT_NEAR(id.G1(0.1, 0.7, 2.0), 0.3, 1e-15);
}

TEST(GFunction, DomainAndSign) {
  const cfwd::GFunction id(identity, identity);
  EXPECT_THROW(id.G(0.6, 0.1, 0.5, 1.0), std::domain_error);
  EXPECT_THROW(id.G(0.1, 0.6, 0.5, 1.0), std::domain_error);
  EXPECT_THROW(id.G(0.1, 0.1, 0.5, -1.0), std::domain_error);
  EXPECT_THROW(id.G0(0.5, 0.6, 1.0), std::domain_error);
  EXPECT_THROW(id.G1(0.5, 0.4, 1.0), std::domain_error);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const auto dg = oracle::random_step(rng), dx = oracle::random_step(rng);
    const cfwd::GFunction gf(StepFunction(dg.breakpoints, dg.values), StepFunction(dx.breakpoints, dx.values));
    const double u = unit(rng);
    EXPECT_GE(gf.G(0.999 * u * unit(rng), 0.999 * (1 - u) * unit(rng), u, 3.0 * unit(rng)), 0.0);
  }
}

TEST(MassLemma, ConstantSystemHasZeroOccupation) {
  const auto rep = cfwd::check_mass_lemma(constant_system(50), 0.5, 0.5, 1.0);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.rhs, 0.0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass);
  EXPECT_EQ(rep.kind, cfwd::ReportKind::kBound);
}

TEST(MassLemma, Preconditions) {
  const auto s = constant_system(10);
  EXPECT_THROW(cfwd::check_mass_lemma(s, 0.3, 0.4, 1.0), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_lemma(s, 0.0, 0.1, 1.0), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_lemma(s, 0.5, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_lemma(s, 0.5, 0.2, 2.0), std::domain_error);
}

TEST(MassLemma, TwoEqualPiecesNeverFallBelowHalf) {
  // Both clusters weigh 1/2, so m < r <= 1/2 never happens; G vanishes as g and xi are flat right of u.
  cfwd::EnsembleSpec s;
  s.g = StepFunction::uniform({0.0, 0.2});
  s.xi = StepFunction::uniform({0.0, 1.0});
  s.dt = 2e-3;
  s.replicas = 100;
  const auto rep = cfwd::check_mass_lemma(s, 0.5, 0.5, 1.0);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.rhs, 0.0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass);
}

TEST(MassLemma, FourPieceSystemHolds) {
  const auto rep = cfwd::check_mass_lemma(four_piece(500, 2e-3), 0.5, 0.5, 1.0);
  EXPECT_GT(rep.lhs, 0.0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass) << rep.lhs << " vs " << rep.rhs;
}

TEST(MassLemma, StableUnderTimeStepRefinement) {
  const auto coarse = cfwd::check_mass_lemma(four_piece(1000, 4e-3), 0.5, 0.5, 1.0);
  const auto fine = cfwd::check_mass_lemma(four_piece(1000, 1e-3), 0.5, 0.5, 1.0);
  EXPECT_LE(std::abs(coarse.lhs - fine.lhs), 3.0 * std::hypot(coarse.se, fine.se));
}

TEST(ThreePoints, LimitCases) {
  const auto c = cfwd::check_three_points(constant_system(50), 0.5, 0.25, 0.25, 0.1);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.verdict, cfwd::Verdict::kPass);
  const auto huge = cfwd::check_three_points(four_piece(100, 1e-2), 0.5, 0.25, 0.25, 1e3);
  EXPECT_EQ(huge.lhs, 0.0);
  EXPECT_LT(huge.rhs, 1e-5);
  EXPECT_EQ(huge.verdict, cfwd::Verdict::kPass);
  EXPECT_THROW(cfwd::check_three_points(four_piece(10, 1e-2), 0.5, 0.6, 0.25, 0.1), std::domain_error);
  EXPECT_THROW(cfwd::check_three_points(four_piece(10, 1e-2), 0.5, 0.25, 0.25, 0.0), std::domain_error);
}

TEST(ThreePoints, EightPieceSystemPasses) {
  cfwd::EnsembleSpec s;
  s.g = cfwd::identity_staircase(3);
  s.xi = cfwd::dyadic_discretize_xi(identity, 3);
  s.dt = 2e-3;
  s.replicas = 500;
  for (const auto& rep : cfwd::check_three_points_grid(s, {{0.5, 0.125, 0.125, 0.3}, {0.375, 0.125, 0.25, 0.5}}))
    EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass) << rep.lhs << " vs " << rep.rhs;
}

TEST(BoundaryMass, ReportOnly) {
  const auto c = cfwd::check_mass_near_boundary(constant_system(20), 0, 0.0, 0.5, 1.0, 0.5);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.verdict, cfwd::Verdict::kReportOnly);
  EXPECT_EQ(c.kind, cfwd::ReportKind::kReportOnly);

  auto s = four_piece(200, 1e-2);
  const auto reps = cfwd::check_mass_near_boundary_grid(s, {{0, 0.0, 0.5, 1.0, 0.5}, {0, 0.0, 0.5, 1.0, 0.9}});
  EXPECT_EQ(reps[0].lhs, reps[1].lhs);
  const cfwd::GFunction gf(s.g, s.xi);
  const double g0 = gf.G0(0.5, 0.0, 1.0);
  EXPECT_NEAR(reps[0].rhs, std::pow(std::sqrt(0.5) * g0, 0.5), 1e-14);
  EXPECT_NEAR(reps[1].rhs, std::pow(std::sqrt(0.5) * g0, 0.9), 1e-14);

  EXPECT_THROW(cfwd::check_mass_near_boundary(s, 0, 0.3, 0.2, 1.0, 0.5), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_near_boundary(s, 1, 0.7, 0.2, 1.0, 0.5), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_near_boundary(s, 0, 0.0, 0.2, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(cfwd::check_mass_near_boundary(s, 2, 0.0, 0.2, 1.0, 0.5), std::domain_error);
}

TEST(Dispersion, PermanentClusterIntegratesToT) {
  auto s = constant_system(5);
  const auto rep = cfwd::check_dispersion_moment(s, 0.5, 3.0, 0.5);
  EXPECT_NEAR(rep.lhs, 0.5, 1e-12);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kReportOnly);
  EXPECT_NEAR(rep.rhs, 1.0 + std::pow(0.5, 3.0) + 1.0, 1e-12);
  EXPECT_THROW(cfwd::check_dispersion_moment(s, 0.5, 2.0, 0.5), std::domain_error);
  EXPECT_THROW(cfwd::check_dispersion_moment(s, 1.2, 3.0, 0.5), std::domain_error);
  EXPECT_THROW(cfwd::check_dispersion_moment(s, 0.0, 3.0, 0.5), std::domain_error);
}

TEST(Dispersion, IncreasesWithBeta) {
  const auto reps = cfwd::check_dispersion_moment_grid(four_piece(100, 1e-2), {0.25, 0.5, 0.75, 1.0}, 3.0, 1.0);
  for (std::size_t i = 1; i < reps.size(); ++i) EXPECT_GT(reps[i].lhs, reps[i - 1].lhs);
}

TEST(SupMoment, ReportOnlyAndZeroForFrozenSystem) {
  auto s = constant_system(10);
  s.options.noise_scale = 0.0;
  const auto rep = cfwd::check_sup_moment(s, 0.5, 3.0, 1.0);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kReportOnly);
  EXPECT_THROW(cfwd::check_sup_moment(s, 0.5, 2.0, 1.0), std::domain_error);
  EXPECT_THROW(cfwd::check_sup_moment(s, 1.0, 9.0, 1.0), std::domain_error);
}

TEST(Martingale, ZeroNoiseAndSinglePiece) {
  auto frozen = four_piece(1000, 1e-2);
  frozen.options.noise_scale = 0.0;
  const auto z = cfwd::martingale_test(frozen, 1);
  EXPECT_EQ(z.lhs, 0.0);
  EXPECT_EQ(z.verdict, cfwd::Verdict::kPass);

  cfwd::EnsembleSpec bm;
  bm.dt = 1e-2;
  bm.replicas = 1000;
  const auto rep = cfwd::martingale_test(bm, 0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass) << rep.lhs;

  bm.replicas = 999;
  EXPECT_THROW(cfwd::martingale_test(bm, 0), std::invalid_argument);
}

TEST(Martingale, FourPieceStickySystem) {
  const auto rep = cfwd::martingale_test(four_piece(1000, 2e-3), 2);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass) << rep.lhs;
}

TEST(QvConsistency, TrivialCases) {
  cfwd::EnsembleSpec bm;
  bm.dt = 1e-2;
  bm.replicas = 1000;
  const auto one = cfwd::qv_consistency(bm, 0, 0);
  EXPECT_DOUBLE_EQ(one.rhs, 1.0);
  EXPECT_EQ(one.verdict, cfwd::Verdict::kPass);

  cfwd::EnsembleSpec apart;
  apart.g = StepFunction::uniform({0.0, 50.0});
  apart.dt = 1e-2;
  apart.replicas = 500;
  const auto zero = cfwd::qv_consistency(apart, 0, 1);
  EXPECT_EQ(zero.rhs, 0.0);
  EXPECT_EQ(zero.verdict, cfwd::Verdict::kPass);
}

TEST(WienerCenter, BrownianMotionAndReplicaMinimum) {
  cfwd::EnsembleSpec bm;
  bm.dt = 2.5e-2;
  bm.replicas = 10000;
  const auto rep = cfwd::wiener_center_test(bm);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass);
  EXPECT_LE(rep.extra("max_bracket_error"), 1e-9);
  bm.replicas = 9999;
  EXPECT_THROW(cfwd::wiener_center_test(bm), std::invalid_argument);
}

TEST(Reports, IndependentOfThreadCount) {
  auto s = four_piece(64, 1e-2);
  const auto one = cfwd::check_mass_lemma_grid(s, {{0.5, 0.5, 1.0}, {0.375, 0.25, 0.5}});
  s.threads = 3;
  const auto three = cfwd::check_mass_lemma_grid(s, {{0.5, 0.5, 1.0}, {0.375, 0.25, 0.5}});
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].lhs, three[i].lhs);
    EXPECT_EQ(one[i].se, three[i].se);
  }
}

TEST(ParallelMap, OrderedResultsAndErrors) {
  const auto v = cfwd::parallel_map(100, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
  EXPECT_THROW(cfwd::parallel_map(10, 3,
                                  [](std::size_t i) {
                                    if (i == 7) throw std::runtime_error("boom");
                                    return 0;
                                  }),
               std::runtime_error);
}

TEST(SittingTime, ZeroCaseIsExactlyZero) {
  cfwd::StickyParams p;
  const auto rep = cfwd::check_sitting_time(p, 1.0, 1e-3, 100, 3);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.rhs, 0.0);
  EXPECT_EQ(rep.verdict, cfwd::Verdict::kPass);
}
