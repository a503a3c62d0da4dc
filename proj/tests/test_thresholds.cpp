#include <gtest/gtest.h>

#include "nlsip/thresholds.hpp"
#include "test_support.hpp"

using namespace nlsip;
using nlsip::fixtures::rel_err;

namespace {

const ModelParams kSuper{3, 0.5, 2.0, 1.0};

class Thresholds : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    saved_ = warning_handler();
    warning_handler() = nullptr;
    gs_ = new GroundStateResult(find_ground_state_shooting(kSuper, 1.0));
  }
  static void TearDownTestSuite() {
    delete gs_;
    warning_handler() = saved_;
  }
  static const GroundStateResult& gs() { return *gs_; }

 private:
  static inline GroundStateResult* gs_ = nullptr;
  static inline WarningHandler saved_;
};

}  // namespace

TEST_F(Thresholds, GroundStateItselfIsNeither) {
  const auto m = classify(gs().phi, kSuper, 1.0, gs());
  EXPECT_EQ(m.verdict, SetVerdict::neither);
  EXPECT_TRUE(m.action_boundary);
  EXPECT_TRUE(m.in_mass_ball);
  EXPECT_FALSE(m.below_action);
  EXPECT_LE(std::abs(m.margins.virial), 1e-6);  // ground-state residual level
  EXPECT_THROW(classify(RadialField(gs().phi.grid_ptr()), kSuper, 1.0, gs()), ParameterError);
}

TEST_F(Thresholds, CompressedGroundStateIsKminus) {
  for (double lam : {1.05, 1.2, 1.5}) {
    const auto v = dilate_keeping_mass(gs().phi, lam);
    const auto m = classify(v, kSuper, 1.0, gs());
    EXPECT_EQ(m.verdict, SetVerdict::Kminus) << lam;
    // direct evaluation of the defining inequalities
    const auto r = functionals(v, kSuper, 1.0);
    EXPECT_LE(r.mass, gs().report.mass * (1 + 1e-14));
    EXPECT_LT(r.action_S, gs().report.action_S);
    EXPECT_LT(r.nehari_K, 0.0);
    EXPECT_LT(r.virial_Q, 0.0);
  }
  // spreading keeps K > 0
  EXPECT_EQ(classify(rescale(gs().phi, 0.9), kSuper, 1.0, gs()).verdict, SetVerdict::neither);
  EXPECT_FALSE(classify(rescale(gs().phi, 0.9), kSuper, 1.0, gs()).nehari_negative);
}

TEST_F(Thresholds, KminusAgreesWithLpCharacterisation) {
  const auto fam = sample_family(gs());
  ASSERT_EQ(fam.size(), 100u);
  int kminus = 0;
  for (const auto& v : fam) {
    const auto m = classify(v, kSuper, 1.0, gs());
    EXPECT_EQ(m.verdict == SetVerdict::Kminus, m.in_B_omega) << membership_record(m);
    kminus += m.verdict == SetVerdict::Kminus;
  }
  EXPECT_GT(kminus, 0);
  EXPECT_LT(kminus, 100);
}

// With D(ω) ≤ 0 no field with mass ≤, S < S(φ) and K < 0 has Q = 0.
TEST_F(Thresholds, NoVirialZeroBelowTheGroundState) {
  ASSERT_LE(second_variation(gs(), kSuper), 0.0);
  for (const auto& v : sample_family(gs())) {
    const auto m = classify(v, kSuper, 1.0, gs());
    if (m.in_mass_ball && m.below_action && m.nehari_negative) {
      EXPECT_NE(m.virial_sign, 0);
    }
  }
}

TEST_F(Thresholds, SecondVariationMatchesFiniteDifferences) {
  const double D = second_variation(gs(), kSuper);
  EXPECT_LT(rel_err(second_variation_fd(gs(), kSuper), D), 1e-4);
  const auto g = ground_state_grid(kSuper, 0.6);
  const auto low = find_ground_state_shooting(kSuper, 0.6, {g});
  EXPECT_GT(second_variation(low, kSuper), 0.0);
  EXPECT_LT(rel_err(second_variation_fd(low, kSuper), second_variation(low, kSuper)), 1e-4);
}

// Without the potential Q(φ) = 0 forces k = βP/(α+2), so D = (2 - β)k.
TEST_F(Thresholds, FreeSupercriticalSolitonHasNegativeD) {
  const ModelParams p{3, 0.5, 2.0, 0.0};
  for (double omega : {0.5, 1.0, 4.0}) {
    const auto s = find_ground_state_shooting(p, omega);
    const double D = second_variation(s, p);
    EXPECT_LT(D, 0.0);
    // a virial residual ε shifts D by (β-1)ε
    EXPECT_LT(rel_err(D, (2 - p.beta()) * s.report.kinetic), 5e-6) << omega;
  }
}

TEST_F(Thresholds, SecondVariationIsContinuousInOmega) {
  std::vector<double> ws, Ds;
  for (double w = 0.6; w <= 1.21; w += 0.05) {
    ws.push_back(w);
    Ds.push_back(second_variation_at(kSuper, w));
  }
  for (std::size_t i = 1; i + 1 < ws.size(); ++i) {
    const double slope = std::abs(Ds[i + 1] - Ds[i - 1]) / (ws[i + 1] - ws[i - 1]);
    EXPECT_LE(std::abs(Ds[i] - Ds[i - 1]), 10 * slope * (ws[i] - ws[i - 1])) << ws[i];
  }
}

TEST_F(Thresholds, FrequencyThreshold) {
  const double mu1 = discrete_mu1(kSuper, ground_state_grid(kSuper, 0.5));
  const auto r = find_omega0(kSuper, 0.5, 1000.0);
  EXPECT_FALSE(r.below_bracket);
  EXPECT_GT(r.omega0, -mu1);
  EXPECT_LE(r.omega0, 1000.0);
  EXPECT_LE(r.D, 1e-8);
  // the tabulation brackets the sign change
  EXPECT_GT(r.table.front().second, 0.0);
  EXPECT_LE(r.table.back().second, 0.0);

  Omega0Options finer;
  finer.rel_tol = 5e-7;
  const auto r2 = find_omega0(kSuper, 0.5, 1000.0, finer);
  EXPECT_LT(std::abs(r2.omega0 - r.omega0), 1e-6 * r.omega0);
}

TEST_F(Thresholds, FrequencyThresholdEdgeCases) {
  const auto above = find_omega0(kSuper, 2.0, 10.0);
  EXPECT_TRUE(above.below_bracket);
  EXPECT_DOUBLE_EQ(above.omega0, 2.0);
  EXPECT_THROW(find_omega0(kSuper, 0.5, 0.6), BracketError);
  EXPECT_THROW(find_omega0(kSuper, 0.1, 1.0), ParameterError);
  EXPECT_THROW(find_omega0(kSuper, 1.0, 0.5), ParameterError);
}

TEST_F(Thresholds, KeyEstimateOnAdmissibleFields) {
  int applicable = 0;
  for (int i = 0; i < 20; ++i) {
    const RadialField base = dilate_keeping_mass(gs().phi, 1.0 + 0.08 * (i + 1));
    for (int j = 0; j < 10; ++j) {
      const auto k = key_estimate_check(base.scaled(1.0 - 0.01 * j), kSuper, 1.0, gs());
      if (!k.applicable) continue;
      ++applicable;
      EXPECT_TRUE(k.holds) << k.lhs << " vs " << k.rhs;
    }
  }
  EXPECT_GE(applicable, 100);
}

TEST_F(Thresholds, KeyEstimateBoundaryAndInapplicable) {
  const auto at_phi = key_estimate_check(gs().phi, kSuper, 1.0, gs());
  EXPECT_TRUE(at_phi.applicable);
  EXPECT_TRUE(at_phi.holds);
  const double tol = 1e-6 * report_scale(gs().report);
  EXPECT_NEAR(at_phi.lhs, 0.0, tol);
  EXPECT_NEAR(at_phi.rhs, 0.0, tol);

  const auto spread = key_estimate_check(rescale(gs().phi, 0.8), kSuper, 1.0, gs());
  EXPECT_FALSE(spread.applicable);
  EXPECT_FALSE(spread.reason.empty());
  const auto heavy = key_estimate_check(gs().phi.scaled(1.1), kSuper, 1.0, gs());
  EXPECT_FALSE(heavy.applicable);
}

TEST(MonotoneLemma, VanishAtOne) {
  for (auto [s, b] : {std::pair{0.5, 3.0}, {1.0, 3.0}, {1.5, 4.0}, {0.3, 2.5}}) {
    EXPECT_NEAR(aux_g2(s, b, 1.0), 0.0, 1e-14);
    EXPECT_NEAR(aux_g1(s, b, 1.0), 0.0, 1e-13);
    EXPECT_NEAR(aux_g(s, b, 1.0 - 1e-9), 0.0, 1e-6);
  }
}

TEST(MonotoneLemma, SignsOnTheGrid) {
  for (auto [s, b] : {std::pair{0.5, 3.0}, {1.0, 3.0}, {1.5, 4.0}}) {
    const auto v = monotone_lemma_check(s, b);
    EXPECT_TRUE(v.holds) << s << ' ' << b;
    EXPECT_GE(v.g2_min, -1e-12);
    EXPECT_LE(v.g1_max, 1e-12);
    EXPECT_GE(v.g_min, -1e-12);
  }
  EXPECT_THROW(monotone_lemma_check(0.5, 2.0), ParameterError);
  EXPECT_THROW(monotone_lemma_check(2.0, 3.0), ParameterError);
}
