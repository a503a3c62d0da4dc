#include <gtest/gtest.h>

#include "nlsip/critical.hpp"
#include "nlsip/dynamics.hpp"
#include "nlsip/thresholds.hpp"
#include "test_support.hpp"

using namespace nlsip;

namespace {

const ModelParams kSub{3, 0.5, 1.0, 1.0};
const ModelParams kSuper{3, 0.5, 2.0, 1.0};
const ModelParams kStab{2, 0.5, 1.0, 1.0};

class Dynamics : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    saved_ = warning_handler();
    warning_handler() = nullptr;
  }
  static void TearDownTestSuite() { warning_handler() = saved_; }

  static const GroundStateResult& sub_gs() {
    static const auto gs = minimize_action(kSub, 1.0, {.grid = build_grid(3, 24, 4096)});
    return gs;
  }
  static const GroundStateResult& super_gs() {
    static const auto gs = find_ground_state_shooting(kSuper, 1.0);
    return gs;
  }

 private:
  static inline WarningHandler saved_;
};

EvolveOptions sampled(double every, bool keep_boundary = true) {
  EvolveOptions o;
  o.output_every = every;
  if (!keep_boundary) o.boundary_tol = std::numeric_limits<double>::infinity();
  return o;
}

}  // namespace

// Free Schrödinger: V(t) = V(0) + 4‖∇u0‖²t² for real data.
TEST_F(Dynamics, FreeGaussianVarianceIsQuadratic) {
  const ModelParams p{3, 0.5, 1.0, 0.0};
  const auto g = build_grid(3, 40, 8192);
  const auto u0 = RadialField::from_function(g, [](double r) { return std::exp(-r * r / 2); });
  auto o = sampled(0.05);
  o.nonlinear = false;
  const auto tr = evolve(u0, p, 0.005, 2.0, o);
  ASSERT_TRUE(tr.reached_horizon()) << tr.stop_reason;
  const double k0 = kinetic(u0);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    const double exact = tr.variance.front() + 4 * k0 * t * t;
    EXPECT_LT(std::abs(tr.variance[i] - exact), 1e-3 * exact) << t;
  }
}

TEST_F(Dynamics, StandingWaveKeepsItsProfile) {
  const auto& gs = sub_gs();
  RadialField fin(gs.phi.grid_ptr());
  const auto tr = evolve(gs.phi, kSub, 0.002, 10.0, sampled(0.05), &fin);
  ASSERT_TRUE(tr.reached_horizon()) << tr.stop_reason;
  const auto modulus = RadialField::from_real(fin.grid_ptr(), fin.modulus());
  EXPECT_LE(h1_distance(modulus, gs.phi), 1e-4);
  EXPECT_LE(virial_check(tr), 1e-2);
  EXPECT_EQ(tr.verdict.kind, Verdict::global);
  // the phase turns at rate ω
  const cplx ratio = fin[0] / gs.phi[0];
  EXPECT_NEAR(std::remainder(std::arg(ratio) - 10.0 * gs.omega, 2 * std::numbers::pi), 0.0, 1e-3);
}

TEST_F(Dynamics, ConservationAndSecondOrderEnergyDrift) {
  const auto u0 = dilate_keeping_mass(sub_gs().phi, 1.2);
  std::vector<double> drifts;
  for (double dt : {0.005, 0.0025}) {
    const auto tr = evolve(u0, kSub, dt, 5.0, sampled(0.05, false));
    ASSERT_TRUE(tr.reached_horizon());
    EXPECT_LE(mass_drift(tr), 1e-10);
    drifts.push_back(energy_drift(tr));
  }
  EXPECT_LE(drifts.back(), 1e-6);
  EXPECT_GT(drifts[0] / drifts[1], 3.0);
  EXPECT_LT(drifts[0] / drifts[1], 5.0);
}

TEST_F(Dynamics, VirialIdentityIsSecondOrder) {
  const auto u0 = dilate_keeping_mass(super_gs().phi, 1.2);
  const auto g = build_grid(3, 24, 8192);
  const auto v0 = resample(u0, g, 1.0);
  std::vector<double> mismatch;
  for (double dt : {0.005, 0.0025}) {
    const auto tr = evolve(v0, kSuper, dt, 0.5, sampled(dt));
    ASSERT_TRUE(tr.reached_horizon()) << tr.stop_reason;
    EXPECT_LT(tr.virialQ.front(), 0.0);
    mismatch.push_back(virial_check(tr));
  }
  EXPECT_LE(mismatch[0], 1e-2);
  EXPECT_GT(mismatch[0] / mismatch[1], 3.0);
}

TEST_F(Dynamics, SplittingIsTimeReversible) {
  const auto& gs = sub_gs();
  const auto u0 = dilate_keeping_mass(gs.phi, 1.3).scaled(cplx(0.8, 0.3));
  const Discretization D(u0.grid_ptr(), kSub);
  SplitStepper stepper(D, kSub, true);
  std::vector<cplx> u(u0.values().begin(), u0.values().end());
  for (int i = 0; i < 200; ++i) stepper.step(u, 0.01);
  for (int i = 0; i < 200; ++i) stepper.step(u, -0.01);
  EXPECT_LE(h1_distance(RadialField(u0.grid_ptr(), u), u0), 1e-8);
}

TEST_F(Dynamics, KminusDatumBlowsUp) {
  const auto& gs = super_gs();
  const auto v = dilate_keeping_mass(gs.phi, 1.5);
  ASSERT_EQ(classify(v, kSuper, 1.0, gs).verdict, SetVerdict::Kminus);
  const auto u0 = resample(v, build_grid(3, 24, 8192), 1.0);
  const auto tr = evolve(u0, kSuper, 1e-3, 10.0, sampled(1e-3));
  EXPECT_EQ(tr.verdict.kind, Verdict::blewup) << tr.verdict.reason;
  EXPECT_LT(tr.verdict.t_star, 10.0);
  EXPECT_TRUE(tr.verdict.glassey);
  EXPECT_LT(tr.verdict.glassey_zero, 10.0);
  EXPECT_LE(mass_drift(tr), 1e-10);
}

TEST_F(Dynamics, BelowCriticalMassStaysGlobal) {
  const ModelParams p{2, 0.5, 2.0, 1.0};
  const auto fs = solve_free_soliton(2);
  const auto g = build_grid(2, 30, 4096);
  auto u0 = RadialField::from_function(g, [](double r) { return std::exp(-r * r / 2); });
  u0 = u0.scaled(std::sqrt(0.8 * fs.a_star / mass(u0)));
  const auto tr = evolve(u0, p, 0.01, 10.0, sampled(0.05, false));
  EXPECT_EQ(tr.verdict.kind, Verdict::global) << tr.verdict.reason;
  EXPECT_LE(tr.verdict.h1_growth, 10.0);
}

TEST(BlowupDetector, SyntheticTraces) {
  EvolutionTrace tr;
  tr.T = 10.0;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.05 * i;
    tr.times.push_back(t);
    tr.mass.push_back(1.0);
    tr.energy.push_back(0.0);
    tr.variance.push_back(4.0 - 3.0 * t * t);
    tr.virialQ.push_back(-0.75);
    tr.gradnorm.push_back(1.0 + t);
  }
  FunctionalReport r0;
  r0.mass = 1.0;
  r0.kinetic = 1.0;

  auto v = detect_blowup(tr, r0);
  EXPECT_TRUE(v.glassey);
  EXPECT_NEAR(v.glassey_zero, std::sqrt(4.0 / 3.0), 1e-9);
  EXPECT_EQ(v.kind, Verdict::inconclusive);  // concavity alone

  tr.resolution_tripped = true;
  tr.truncated = true;
  EXPECT_EQ(detect_blowup(tr, r0).kind, Verdict::blewup);

  auto flat = tr;
  std::fill(flat.variance.begin(), flat.variance.end(), 4.0);
  EXPECT_EQ(detect_blowup(flat, r0).kind, Verdict::inconclusive);  // lost resolution only

  auto spike = flat;
  spike.resolution_tripped = false;
  spike.gradnorm.back() = 2e3;
  EXPECT_EQ(detect_blowup(spike, r0).kind, Verdict::blewup);

  auto calm = flat;
  calm.resolution_tripped = false;
  calm.truncated = false;
  std::fill(calm.gradnorm.begin(), calm.gradnorm.end(), 1.0);
  EXPECT_EQ(detect_blowup(calm, r0).kind, Verdict::global);
}

TEST(VirialCheck, RejectsShortOrUnevenTraces) {
  EvolutionTrace tr;
  for (double t : {0.0, 0.1, 0.2, 0.3}) {
    tr.times.push_back(t);
    tr.variance.push_back(1.0);
    tr.virialQ.push_back(0.0);
  }
  EXPECT_THROW(virial_check(tr), ParameterError);
  tr.times.push_back(0.45);
  tr.variance.push_back(1.0);
  tr.virialQ.push_back(0.0);
  EXPECT_THROW(virial_check(tr), ParameterError);
  tr.times.back() = 0.4;
  EXPECT_DOUBLE_EQ(virial_check(tr), 0.0);
}

TEST(TraceCsv, HeaderAndRows) {
  EvolutionTrace tr;
  tr.times = {0.0, 0.5};
  tr.mass = {1.0, 1.0};
  tr.energy = {-0.25, -0.25};
  tr.variance = {2.0, 2.5};
  tr.virialQ = {0.1, 0.2};
  tr.gradnorm = {1.0, 1.1};
  const auto csv = trace_csv(tr);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t, mass, energy, variance, virialQ, gradnorm");
  EXPECT_NE(csv.find("0.5, 1, -0.25, 2.5, 0.20000000000000001, 1.1000000000000001"), std::string::npos);
}

TEST(PhaseDistance, MatchesClosedForm) {
  std::mt19937_64 rng(3);
  const auto g = build_grid(2, 10, 512);
  for (int k = 0; k < 5; ++k) {
    const auto u = nlsip::fixtures::random_field(g, rng, false);
    const auto v = nlsip::fixtures::random_field(g, rng, false);
    const double closed = std::sqrt(std::max(0.0, h1_norm(u) * h1_norm(u) + h1_norm(v) * h1_norm(v) - 2 * std::abs(h1_inner(u, v))));
    double theta = 0.0;
    EXPECT_NEAR(phase_distance(u, v, &theta), closed, 1e-7 * (1 + closed));
    EXPECT_NEAR(std::remainder(theta - std::arg(h1_inner(u, v)), 2 * std::numbers::pi), 0.0, 1e-6);
  }
  const auto u = nlsip::fixtures::random_field(g, rng, false);
  EXPECT_NEAR(phase_distance(u.scaled(std::polar(1.0, 2.0)), u), 0.0, 1e-6);
}

TEST(Stability, PerturbationIsSeededAndScaled) {
  const auto g = build_grid(2, 30, 1024);
  const auto a = smooth_perturbation(g, 11, 1e-2);
  const auto b = smooth_perturbation(g, 11, 1e-2);
  const auto c = smooth_perturbation(g, 12, 1e-2);
  EXPECT_NEAR(h1_norm(a), 1e-2, 1e-14);
  EXPECT_EQ(h1_distance(a, b), 0.0);
  EXPECT_GT(h1_distance(a, c), 1e-4);
}

TEST_F(Dynamics, UnperturbedMinimizerStaysOnItsOrbit) {
  StabilityOptions o;
  o.dt = 0.001;
  const auto r = stability_experiment(kStab, 2.0, 0.0, 5.0, 1, o);
  EXPECT_LE(r.max_distance, 1e-4);
  EXPECT_FALSE(r.any_blowup);
}

TEST_F(Dynamics, PerturbedMinimizerStaysClose) {
  const auto r = stability_experiment(kStab, 2.0, 1e-2, 20.0, 5);
  ASSERT_EQ(r.trials.size(), 5u);
  EXPECT_LE(r.max_distance, 0.1);
  for (const auto& t : r.trials) {
    EXPECT_NEAR(t.perturbation_h1, 1e-2, 1e-12);
    EXPECT_FALSE(t.distance.empty());
    EXPECT_NEAR(t.distance.back().first, 20.0, 1e-9);
  }
}

TEST_F(Dynamics, OrbitDistanceOrderedInDelta) {
  std::vector<double> dist;
  for (double delta : {1e-3, 1e-2, 1e-1}) dist.push_back(stability_experiment(kStab, 2.0, delta, 5.0, 2).max_distance);
  EXPECT_LT(dist[0], 1.2 * dist[1]);
  EXPECT_LT(dist[1], 1.2 * dist[2]);
}

TEST_F(Dynamics, StabilityArgumentErrors) {
  EXPECT_THROW(stability_experiment(kSuper, 1.0, 1e-2, 1.0, 1), ParameterError);
  EXPECT_THROW(stability_experiment(kStab, 2.0, -1.0, 1.0, 1), ParameterError);
  EXPECT_THROW(stability_experiment(kStab, 2.0, 1e-2, 1.0, 0), ParameterError);
  EXPECT_THROW(evolve(sub_gs().phi, kSub, 0.0, 1.0), ParameterError);
  EXPECT_THROW(evolve(sub_gs().phi, kStab, 0.01, 1.0), ParameterError);
}
