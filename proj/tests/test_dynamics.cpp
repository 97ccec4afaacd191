#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "cfwd/dynamics.hpp"
#include "cfwd/verify.hpp"
#include "oracles.hpp"

using cfwd::StepFunction;

namespace {

StepFunction identity_xi(int level) {
  return cfwd::dyadic_discretize_xi([](double u) { return u; }, level);
}

std::vector<std::pair<std::size_t, std::size_t>> ranges(const cfwd::ParticleState& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : s.clusters) out.emplace_back(c.first, c.last);
  return out;
}

}  // namespace

TEST(Init, ClustersAreLevelSetsOfG) {
  EXPECT_EQ(cfwd::init(StepFunction::uniform({0, 1, 2}), StepFunction::constant(0)).clusters.size(), 3u);
  const auto one = cfwd::init(StepFunction::constant(2.0), identity_xi(2));
  ASSERT_EQ(one.clusters.size(), 1u);
  EXPECT_EQ(one.clusters[0].mass, 1.0);
  const auto s = cfwd::init(StepFunction::uniform({0, 0, 1}), StepFunction::uniform({0, 1, 2}));
  EXPECT_EQ(ranges(s), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 2}}));
  s.check_invariants();
}

TEST(ClusterDrifts, Examples) {
  auto s = cfwd::init(StepFunction::uniform({0, 1}), StepFunction::uniform({0, 1}));
  EXPECT_EQ(cfwd::cluster_drifts(s), (std::vector<double>{0.0, 0.0}));

  s = cfwd::init(StepFunction::constant(0), StepFunction::uniform({0, 1}));
  EXPECT_EQ(cfwd::cluster_drifts(s), (std::vector<double>{-0.5, 0.5}));

  const double m[] = {0.25, 0.75};
  s = cfwd::init(StepFunction::constant(0), StepFunction::from_masses(m, {0, 1}));
  const auto d = cfwd::cluster_drifts(s);
  // Weighted mean of xi is 0.25*0 + 0.75*1 = 0.75.
  EXPECT_DOUBLE_EQ(d[0], -0.75);
  EXPECT_DOUBLE_EQ(d[1], 0.25);
}

TEST(ClusterDrifts, CancelWithinClusters) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const auto dg = oracle::random_step(rng), dx = oracle::random_step(rng);
    const auto s = cfwd::init(StepFunction(dg.breakpoints, dg.values), StepFunction(dx.breakpoints, dx.values));
    const auto d = cfwd::cluster_drifts(s);
    for (const auto& c : s.clusters) {
      double acc = 0.0;
      for (std::size_t k = c.first; k <= c.last; ++k) acc += s.masses[k] * d[k];
      EXPECT_NEAR(acc, 0.0, 1e-15);
    }
  }
}

TEST(Step, SingleClusterMovesRigidly) {
  const auto s = cfwd::init(StepFunction::constant(1.0), StepFunction::uniform({2, 2, 2, 2}));
  const double z[] = {0.7};
  const auto next = cfwd::step_with_noise(s, 0.01, z);
  for (double x : next.positions) EXPECT_DOUBLE_EQ(x, 1.0 + 0.1 * 0.7);
  EXPECT_EQ(ranges(next), ranges(s));
}

TEST(Step, CrossingSingletonsArePooledAtWeightedMean) {
  auto s = cfwd::init(StepFunction::uniform({0.0, 1e-9}), StepFunction::uniform({0.0, 1.0}));
  ASSERT_EQ(s.clusters.size(), 2u);
  const double dt = 0.01;
  const double z[] = {5.0, -5.0};
  const auto next = cfwd::step_with_noise(s, dt, z);
  const double t0 = 0.0 + std::sqrt(dt / 0.5) * 5.0, t1 = 1e-9 - std::sqrt(dt / 0.5) * 5.0;
  ASSERT_EQ(next.clusters.size(), 1u);
  EXPECT_NEAR(next.positions[0], 0.5 * t0 + 0.5 * t1, 1e-15);
  EXPECT_EQ(next.positions[0], next.positions[1]);
  next.check_invariants();
}

TEST(Step, CenterOfMassMovesBySumOfClusterIncrements) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 50; ++rep) {
    const auto dg = oracle::random_step(rng, 10), dx = oracle::random_step(rng, 10);
    auto s = cfwd::init(StepFunction(dg.breakpoints, dg.values), StepFunction(dx.breakpoints, dx.values));
    for (int j = 0; j < 100; ++j) {
      std::vector<double> z(s.clusters.size());
      double expected = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) {
        z[c] = normal(rng);
        expected += std::sqrt(s.clusters[c].mass * 0.01) * z[c];
      }
      const auto next = cfwd::step_with_noise(s, 0.01, z);
      EXPECT_NEAR(cfwd::center_of_mass(next) - cfwd::center_of_mass(s), expected, 1e-12);
      next.check_invariants();
      s = next;
    }
  }
}

TEST(Step, RejectsBadInput) {
  const auto s = cfwd::init(StepFunction::uniform({0, 1}), StepFunction::constant(0));
  const double z[] = {0.0};
  EXPECT_THROW(cfwd::step_with_noise(s, 0.01, z), std::invalid_argument);
  const double z2[] = {0.0, 0.0};
  EXPECT_THROW(cfwd::step_with_noise(s, 0.0, z2), std::domain_error);
}

TEST(Simulate, HorizonEdgeCases) {
  const auto g = cfwd::identity_staircase(2);
  const auto xi = identity_xi(2);
  EXPECT_EQ(cfwd::step_count(0.0, 0.1), 0u);
  EXPECT_THROW(cfwd::simulate(g, xi, 0.5, 1.0, 1, 0), std::domain_error);
  EXPECT_THROW(cfwd::simulate(g, xi, 1.0, 0.0, 1, 0), std::domain_error);
  const auto one = cfwd::simulate(g, xi, 0.25, 0.25, 1, 0);
  EXPECT_EQ(one.steps(), 1u);
  const auto direct = cfwd::step(cfwd::init(g, xi), 0.25, cfwd::NoiseStream(1, 0));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(one.position(1, k), direct.positions[k]);
  EXPECT_EQ(cfwd::simulate(g, xi, 1.0, 0.001, 1, 0).steps(), 1000u);
  EXPECT_EQ(cfwd::simulate(g, xi, 1.0, 0.3, 1, 0).steps(), 4u);
}

TEST(Simulate, DeterministicPerSeedAndReplica) {
  const auto g = cfwd::identity_staircase(3);
  const auto xi = identity_xi(3);
  const auto a = cfwd::simulate(g, xi, 0.5, 0.01, 9, 2), b = cfwd::simulate(g, xi, 0.5, 0.01, 9, 2);
  const auto c = cfwd::simulate(g, xi, 0.5, 0.01, 9, 3);
  bool differs = false;
  for (std::size_t j = 0; j < a.points(); ++j)
    for (std::size_t k = 0; k < a.pieces(); ++k) {
      EXPECT_EQ(a.position(j, k), b.position(j, k));
      differs = differs || a.position(j, k) != c.position(j, k);
    }
  EXPECT_TRUE(differs);
}

TEST(Simulate, BookkeepingIdentities) {
  const auto g = cfwd::identity_staircase(3);
  const auto xi = identity_xi(3);
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto tr = cfwd::simulate(g, xi, 1.0, 0.01, 5, r);
    for (std::size_t k = 0; k < tr.pieces(); ++k) {
      double a = 0.0, q = 0.0;
      for (std::size_t j = 0; j < tr.points(); ++j) {
        EXPECT_NEAR(tr.drift(j, k), a, 1e-12);
        EXPECT_NEAR(tr.qv(j, k), q, 1e-12);
        EXPECT_NEAR(tr.position(j, k), g.value(k) + tr.drift(j, k) + tr.martingale(j, k), 1e-9);
        if (j + 1 == tr.points()) break;
        // Left-point drift recomputed from the stored partition at t_j.
        double num = 0.0, den = 0.0;
        for (std::size_t l = 0; l < tr.pieces(); ++l)
          if (tr.same_cluster(j, k, l)) {
            num += tr.masses()[l] * xi.value(l);
            den += tr.masses()[l];
          }
        const double d = tr.cluster_mass(j, k) == tr.masses()[k] ? 0.0 : xi.value(k) - num / den;
        a += d * 0.01;
        q += 0.01 / tr.cluster_mass(j, k);
      }
    }
  }
}

TEST(Simulate, StateInvariantsHoldAlongPaths) {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 30; ++rep) {
    const auto dg = oracle::random_step(rng, 10), dx = oracle::random_step(rng, 10);
    const StepFunction g(dg.breakpoints, dg.values), xi(dx.breakpoints, dx.values);
    for (auto rule : {cfwd::ContactRule::kLocalTimeHold, cfwd::ContactRule::kProjectionOnly}) {
      cfwd::SimOptions opt;
      opt.contact = rule;
      auto s = cfwd::init(g, xi);
      const cfwd::NoiseStream noise(rep, 0);
      for (int j = 0; j < 300; ++j) {
        s = cfwd::step(s, 0.005, noise, opt);
        ASSERT_NO_THROW(s.check_invariants());
        for (std::size_t k = 1; k < s.size(); ++k) ASSERT_LE(s.positions[k - 1], s.positions[k]);
        if (rule == cfwd::ContactRule::kProjectionOnly) {
          for (double debt : s.contact_debt) ASSERT_EQ(debt, 0.0);
        }
      }
    }
  }
}

TEST(Simulate, CoalescenceIsPermanentWithConstantPotential) {
  const auto g = cfwd::identity_staircase(3);
  const auto xi = StepFunction::constant(0.0);
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto tr = cfwd::simulate(g, xi, 1.0, 0.005, 21, r);
    for (std::size_t j = 1; j < tr.points(); ++j) {
      ASSERT_LE(tr.cluster_count(j), tr.cluster_count(j - 1));
      for (std::size_t k = 0; k + 1 < tr.pieces(); ++k)
        if (tr.same_cluster(j - 1, k, k + 1)) { ASSERT_TRUE(tr.same_cluster(j, k, k + 1)); }
    }
  }
}

TEST(Simulate, PiecesSharingGAndXiStayTogether) {
  // Pieces 0,1 share (g, xi); pieces 2,3 share g but not xi.
  const auto g = StepFunction::uniform({0.0, 0.0, 0.5, 0.5});
  const auto xi = StepFunction::uniform({0.0, 0.0, 0.1, 0.4});
  for (std::uint64_t r = 0; r < 50; ++r) {
    const auto tr = cfwd::simulate(g, xi, 1.0, 0.01, 8, r);
    for (std::size_t j = 0; j < tr.points(); ++j) {
      ASSERT_TRUE(tr.same_cluster(j, 0, 1));
      ASSERT_GE(tr.cluster_mass(j, 0), 0.5);
    }
    EXPECT_EQ(cfwd::realized_cross_qv(tr, 0, 1), cfwd::realized_qv(tr, 0));
  }
}

TEST(Simulate, ZeroNoiseIsDeterministicDrift) {
  cfwd::SimOptions opt;
  opt.noise_scale = 0.0;
  const auto g = StepFunction::constant(0.0);
  const auto xi = StepFunction::uniform({0.0, 1.0});
  const auto tr = cfwd::simulate(g, xi, 1.0, 0.01, 1, 0, opt);
  EXPECT_LT(cfwd::realized_qv(tr, 0), 1e-20);
  EXPECT_LT(cfwd::realized_qv(tr, 1), 1e-20);
  EXPECT_EQ(tr.cluster_count(tr.steps()), 2u);
  EXPECT_NEAR(tr.center_of_mass(tr.steps()), 0.0, 1e-15);
}

TEST(Simulate, SinglePieceIsBrownianMotion) {
  cfwd::RunningStats qv, terminal;
  const auto g = StepFunction::constant(0.0);
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const auto tr = cfwd::simulate(g, g, 1.0, 0.01, 3, r);
    qv.add(cfwd::realized_qv(tr, 0));
    terminal.add(tr.position(tr.steps(), 0));
    EXPECT_DOUBLE_EQ(tr.qv(tr.steps(), 0), 1.0);
  }
  EXPECT_LE(std::abs(qv.mean() - 1.0), 3.0 * qv.se());
  EXPECT_LE(std::abs(terminal.mean()), 3.0 * terminal.se());
}

TEST(Simulate, NeverMergedPairHasNoCrossVariation) {
  const auto g = StepFunction::uniform({0.0, 100.0});
  cfwd::RunningStats cross;
  for (std::uint64_t r = 0; r < 1000; ++r) {
    const auto tr = cfwd::simulate(g, StepFunction::constant(0), 1.0, 0.01, 4, r);
    EXPECT_EQ(cfwd::indicator_cross_qv(tr, 0, 1), 0.0);
    cross.add(cfwd::realized_cross_qv(tr, 0, 1));
  }
  EXPECT_LE(std::abs(cross.mean()), 3.0 * cross.se());
}

TEST(Simulate, TwoPieceStickyCrossVariationConvergesToIndicator) {
  // Collision corrections bias the realized cross-variation by O(sqrt(dt)); the gap must shrink accordingly.
  const auto g = StepFunction::constant(0.0);
  const auto xi = StepFunction::uniform({0.0, 1.0});
  auto gap = [&](double dt, double& se) {
    cfwd::RunningStats diff, ind;
    for (std::uint64_t r = 0; r < 2000; ++r) {
      const auto tr = cfwd::simulate(g, xi, 1.0, dt, 6, r);
      ind.add(cfwd::indicator_cross_qv(tr, 0, 1));
      diff.add(cfwd::realized_cross_qv(tr, 0, 1) - cfwd::indicator_cross_qv(tr, 0, 1));
    }
    EXPECT_GT(ind.mean(), 0.5);
    se = diff.se();
    return diff.mean();
  };
  double se_coarse = 0.0, se_fine = 0.0;
  const double coarse = gap(0.02, se_coarse);
  const double fine = gap(0.02 / 64.0, se_fine);
  EXPECT_GT(coarse, 3.0 * se_coarse);
  EXPECT_LE(std::abs(fine), 0.35 * coarse);
}

TEST(CenterOfMass, Examples) {
  EXPECT_DOUBLE_EQ(cfwd::center_of_mass(cfwd::init(cfwd::identity_staircase(1), StepFunction::constant(0))), 0.5);
  const auto tr = cfwd::simulate(StepFunction::constant(0.3), StepFunction::constant(0), 0.5, 0.01, 1, 0);
  for (std::size_t j = 0; j < tr.points(); ++j) EXPECT_EQ(tr.center_of_mass(j), tr.position(j, 0));
  EXPECT_NEAR(cfwd::center_bracket_qv(tr), 0.5, 1e-12);
}
