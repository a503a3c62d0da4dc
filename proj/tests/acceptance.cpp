// Acceptance run: one line per criterion, nonzero exit if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/critical.hpp"
#include "nlsip/dynamics.hpp"
#include "nlsip/elliptic.hpp"
#include "nlsip/spectral.hpp"
#include "nlsip/thresholds.hpp"
#include "nlsip/uniqueness.hpp"

using namespace nlsip;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Notes {
 public:
  template <class T>
  Notes& operator()(const std::string& key, const T& value) {
    if (!first_) os_ << ", ";
    first_ = false;
    os_ << key << ' ' << value;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  bool first_ = true;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const ModelParams kSuper{3, 0.5, 2.0, 1.0};
const ModelParams kSub{3, 0.5, 1.0, 1.0};

const GroundStateResult& super_gs() {
  static const auto gs = find_ground_state_shooting(kSuper, 1.0);
  return gs;
}

const FreeSoliton& soliton(int d) {
  static std::map<int, FreeSoliton> cache;
  auto it = cache.find(d);
  if (it == cache.end()) it = cache.emplace(d, solve_free_soliton(d)).first;
  return it->second;
}

EvolveOptions sampled(double every, bool keep_boundary = true) {
  EvolveOptions o;
  o.output_every = every;
  if (!keep_boundary) o.boundary_tol = std::numeric_limits<double>::infinity();
  return o;
}

// ---------------------------------------------------------------------------

Outcome hydrogen_eigenvalue() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelParams p{3, 1.0, 4.0 / 3.0, 1.0};
  const auto coarse = ground_eigenpair(p, build_grid(3, 40, 8192));
  const auto fine = ground_eigenpair(p, build_grid(3, 40, 16384));
  const double err = std::abs(fine.mu1 + 0.25);
  const double wall = seconds_since(t0);
  return {err <= 1e-3 && wall < 10.0,
          (Notes()("mu1", fine.mu1)("|mu1 + 1/4|", err)("grid change", std::abs(fine.mu1 - coarse.mu1))("wall s", wall))
              .str()};
}

Outcome critical_mass_1d() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fs = solve_free_soliton(1);
  const double exact = std::sqrt(3.0) * std::numbers::pi / 2;
  const double err = std::abs(fs.a_star - exact);
  const double wall = seconds_since(t0);
  return {err <= 1e-4 && wall < 10.0, (Notes()("a*", fs.a_star)("error", err)("wall s", wall)).str()};
}

Outcome ground_state_residuals() {
  const std::vector<std::pair<ModelParams, double>> cases{
      {kSub, 1.0}, {kSuper, 1.0}, {{2, 0.5, 1.0, 1.0}, 3.0}, {{1, 0.5, 2.0, 1.0}, 3.0}};
  double worst_res = 0.0, worst_cross = 0.0;
  for (const auto& [p, omega] : cases) {
    const auto grid = ground_state_grid(p, omega);
    const auto shot = find_ground_state_shooting(p, omega, {.grid = grid});
    const auto act = minimize_action(p, omega, {.grid = grid});
    for (const auto* gs : {&shot, &act})
      worst_res = std::max({worst_res, gs->pohozaev.max(), gs->nehari_residual(), gs->virial_residual()});
    worst_cross = std::max(worst_cross, h1_distance(shot.phi, act.phi));
  }
  return {worst_res <= 1e-6 && worst_cross <= 1e-4,
          (Notes()("parameter sets", cases.size())("max residual", worst_res)("max cross-solver H1", worst_cross)).str()};
}

Outcome gn_sharpness() {
  bool ok = true;
  double eq = 0.0, ratio = 0.0;
  int strict = 0, count = 0;
  for (int d : {1, 2, 3}) {
    const auto& Q = soliton(d).Q;
    const auto v = gn_sharpness_check(Q, gn_test_family(Q.grid_ptr()));
    ok = ok && v.holds && v.equality_rel_err <= 1e-6 && v.strict == v.count && v.count == 50;
    eq = std::max(eq, v.equality_rel_err);
    ratio = std::max(ratio, v.max_ratio);
    strict += v.strict;
    count += v.count;
  }
  return {ok, (Notes()("dims", "1,2,3")("equality rel err", eq)("strict", std::to_string(strict) + "/" +
                                                                             std::to_string(count))("max ratio", ratio))
                  .str()};
}

struct SweepRun {
  CriticalSweep sweep;
  double wall = 0.0;
};

const SweepRun& sweep_for(int d, double sigma) {
  static std::map<std::pair<int, double>, SweepRun> cache;
  const auto key = std::pair{d, sigma};
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelParams p{d, sigma, 4.0 / d, 1.0};
    auto sw = energy_scaling_sweep(p, soliton(d));
    it = cache.emplace(key, SweepRun{std::move(sw), seconds_since(t0)}).first;
  }
  return it->second;
}

Outcome energy_scaling() {
  bool ok = true;
  Notes n;
  for (auto [d, s] : {std::pair{2, 0.5}, {3, 1.0}}) {
    const auto& run = sweep_for(d, s);
    const double target = -s / (2 - s);
    const double slope_err = std::abs(run.sweep.slope_energy - target) / std::abs(target);
    const bool at_closest = std::abs(run.sweep.records.back().a / soliton(d).a_star - 0.999) < 1e-12;
    ok = ok && slope_err <= 0.05 && run.sweep.limit_rel_err <= 0.02 && at_closest && run.wall < 600;
    const std::string tag = "(" + std::to_string(d) + "," + fmt17(s) + ")";
    n(tag + " slope", run.sweep.slope_energy)("target", target)("limit err", run.sweep.limit_rel_err)("wall s",
                                                                                                        run.wall);
  }
  return {ok, n.str()};
}

Outcome rescaled_convergence_and_gradient() {
  bool ok = true;
  Notes n;
  for (auto [d, s] : {std::pair{2, 0.5}, {3, 1.0}}) {
    const auto& recs = sweep_for(d, s).sweep.records;
    std::vector<double> errs;
    for (const auto& r : recs) errs.push_back(r.h1_error);
    const auto grad = gradient_divergence_check(recs, s);
    ok = ok && decreasing_within(errs) && errs.back() <= 0.05 && grad.holds;
    const std::string tag = "(" + std::to_string(d) + "," + fmt17(s) + ")";
    n(tag + " h1_error@0.999", errs.back())("monotone", decreasing_within(errs))("grad slope", grad.slope)(
        "target", grad.target);
  }
  return {ok, n.str()};
}

Outcome virial_identity() {
  const auto u0 = resample(dilate_keeping_mass(super_gs().phi, 1.2), build_grid(3, 24, 8192), 1.0);
  std::vector<double> mismatch;
  for (double dt : {0.005, 0.0025}) {
    const auto tr = evolve(u0, kSuper, dt, 0.5, sampled(dt));
    if (!tr.reached_horizon()) return {false, "run stopped early: " + tr.stop_reason};
    mismatch.push_back(virial_check(tr));
  }
  const double ratio = mismatch[0] / mismatch[1];
  return {mismatch[0] <= 1e-2 && ratio >= 3.0 && ratio <= 5.0,
          (Notes()("mismatch dt=0.005", mismatch[0])("dt=0.0025", mismatch[1])("ratio", ratio)).str()};
}

Outcome dichotomy() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto w0 = find_omega0(kSuper, 0.5, 1000.0);
  const double omega = 1.0;
  const auto& gs = super_gs();
  Notes n;
  n("omega0", w0.omega0)("omega", omega);
  if (omega < w0.omega0) return {false, n.str()};

  const auto v = dilate_keeping_mass(gs.phi, 1.5);
  const bool is_kminus = classify(v, kSuper, omega, gs).verdict == SetVerdict::Kminus;
  const auto u0 = resample(v, build_grid(3, 24, 8192), 1.0);
  const auto tr = evolve(u0, kSuper, 1e-3, 10.0, sampled(1e-3));
  const bool minus_ok = is_kminus && tr.verdict.kind == Verdict::blewup && tr.verdict.t_star < 10.0;
  n("Kminus verdict", to_string(tr.verdict.kind))("t*", tr.verdict.t_star)("Kminus wall s", seconds_since(t0));

  // candidates for the other half: the sample family plus amplitude/dilation scans of φ
  std::vector<RadialField> candidates = sample_family(gs);
  for (int i = 0; i <= 24; ++i)
    for (int j = 1; j <= 10; ++j)
      candidates.push_back(rescale(gs.phi, std::exp(-3.0 + 0.25 * i)).scaled(0.1 * j));
  std::optional<RadialField> kplus;
  for (const auto& c : candidates)
    if (classify(c, kSuper, omega, gs).verdict == SetVerdict::Kplus) {
      kplus = c;
      break;
    }
  n("Kplus candidates", candidates.size());
  bool plus_ok = false;
  if (kplus) {
    const auto trp = evolve(resample(*kplus, build_grid(3, 40, 8192), 1.0), kSuper, 1e-3, 10.0, sampled(0.05, false));
    plus_ok = trp.verdict.kind == Verdict::global;
    n("Kplus verdict", to_string(trp.verdict.kind));
  } else {
    n("Kplus datum", "none found; D(omega) <= 0 for omega >= omega0 leaves that set empty");
  }
  return {minus_ok && plus_ok, n.str()};
}

Outcome conservation() {
  const auto gs = minimize_action(kSub, 1.0, {.grid = build_grid(3, 24, 4096)});
  const auto u0 = dilate_keeping_mass(gs.phi, 1.2);
  const auto tr = evolve(u0, kSub, 0.0025, 5.0, sampled(0.05, false));
  const double m = mass_drift(tr), e = energy_drift(tr);
  return {tr.reached_horizon() && m <= 1e-10 && e <= 1e-6,
          (Notes()("mass drift", m)("energy drift per unit time", e)("dt", 0.0025)).str()};
}

Outcome monotone_lemma() {
  bool ok = true;
  double g2 = std::numeric_limits<double>::infinity(), g1 = -g2;
  for (auto [s, b] : {std::pair{0.5, 3.0}, {1.0, 3.0}, {1.5, 4.0}}) {
    const auto v = monotone_lemma_check(s, b, 10000);
    ok = ok && v.g2_min >= -1e-12 && v.g1_max <= 1e-12;
    g2 = std::min(g2, v.g2_min);
    g1 = std::max(g1, v.g1_max);
  }
  return {ok, (Notes()("min g2", g2)("max g1", g1)).str()};
}

Outcome uniqueness_conditions() {
  const auto rep = check_conditions(kSub, 1.0, 1.0);
  const auto grid = ground_state_grid(kSub, 1.0);
  const auto a = find_ground_state_shooting(kSub, 1.0, {.grid = grid});
  const auto b =
      find_ground_state_shooting(kSub, 1.0, {.grid = grid, .bracket_lo = 3e-3, .bracket_hi = 3e2, .scan_per_decade = 7});
  const double dist = h1_distance(a.phi, b.phi);
  return {rep.all_pass && rep.scan.sign_changes == 1 && rep.r1 && dist <= 1e-6,
          (Notes()("conditions", rep.all_pass ? "I-VI hold" : "violated")("sign changes", rep.scan.sign_changes)(
               "r1", rep.r1.value_or(0.0))("two-seed H1", dist))
              .str()};
}

Outcome orbital_stability() {
  const auto r = stability_experiment({2, 0.5, 1.0, 1.0}, 2.0, 1e-2, 20.0, 5);
  return {r.trials.size() == 5 && r.max_distance <= 0.1 && !r.any_blowup,
          (Notes()("trials", r.trials.size())("max orbit distance", r.max_distance)("blow-up", r.any_blowup)).str()};
}

Outcome kminus_equivalence() {
  const auto& gs = super_gs();
  const auto fam = sample_family(gs);
  int agree = 0, kminus = 0;
  for (const auto& v : fam) {
    const auto m = classify(v, kSuper, 1.0, gs);
    agree += (m.verdict == SetVerdict::Kminus) == m.in_B_omega;
    kminus += m.verdict == SetVerdict::Kminus;
  }
  return {fam.size() == 100 && agree == 100,
          (Notes()("agreement", std::to_string(agree) + "/" + std::to_string(fam.size()))("Kminus fields", kminus)).str()};
}

}  // namespace

int main() {
  warning_handler() = nullptr;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"hydrogen-like eigenvalue", hydrogen_eigenvalue},
      {"1D critical mass", critical_mass_1d},
      {"ground-state residuals and cross-solver agreement", ground_state_residuals},
      {"Gagliardo-Nirenberg sharpness", gn_sharpness},
      {"energy scaling law", energy_scaling},
      {"rescaled convergence and gradient divergence", rescaled_convergence_and_gradient},
      {"virial identity", virial_identity},
      {"blow-up / global dichotomy", dichotomy},
      {"conservation", conservation},
      {"monotone auxiliary functions", monotone_lemma},
      {"uniqueness conditions", uniqueness_conditions},
      {"orbital stability", orbital_stability},
      {"Kminus and B_omega agree", kminus_equivalence},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
