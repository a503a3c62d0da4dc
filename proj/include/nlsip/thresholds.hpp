#pragma once

// Mass-supercritical dichotomy: invariant-set membership, the second variation
// of the action along mass-preserving dilations, the frequency threshold where
// it turns nonpositive, the key virial estimate and the auxiliary functions
// whose monotonicity drives it.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlsip/elliptic.hpp"

namespace nlsip {

enum class SetVerdict { Kminus, Kplus, neither };

inline const char* to_string(SetVerdict v) {
  switch (v) {
    case SetVerdict::Kminus: return "Kminus";
    case SetVerdict::Kplus: return "Kplus";
    case SetVerdict::neither: return "neither";
  }
  return "?";
}

/// Signed, dimensionless margins; positive means the defining inequality holds.
struct SetMargins {
  double mass = 0.0;    ///< (‖φ‖² − ‖v‖²)/‖φ‖²
  double action = 0.0;  ///< (S(φ) − S(v))/|S(φ)|
  double nehari = 0.0;  ///< −K(v)/scale(v)
  double virial = 0.0;  ///< Q(v)/scale(v), sign kept as is
  double lp = 0.0;      ///< (P(v) − P(φ))/P(φ)
};

struct SetMembership {
  bool in_mass_ball = false;
  bool below_action = false;
  bool nehari_negative = false;
  int virial_sign = 0;
  bool above_lp = false;
  SetVerdict verdict = SetVerdict::neither;
  bool in_B_omega = false;  ///< K(v) < 0 replaced by ‖v‖_{α+2} > ‖φ‖_{α+2}
  SetMargins margins;
  // |margin| within the band: the strict inequality is not decided
  bool mass_boundary = false, action_boundary = false, nehari_boundary = false, lp_boundary = false;
  FunctionalReport report;
};

inline constexpr double kBoundaryBand = 1e-8;

inline SetMembership classify(const RadialField& v, const ModelParams& p, double omega, const GroundStateResult& gs,
                              double band = kBoundaryBand) {
  if (v.is_zero()) throw ParameterError("classify: field must be nonzero");
  const auto rv = functionals(v, p, omega);
  const auto rp = functionals(gs.phi, p, omega);
  const double sv = report_scale(rv);

  SetMembership m;
  m.report = rv;
  m.margins.mass = (rp.mass - rv.mass) / rp.mass;
  m.margins.action = (rp.action_S - rv.action_S) / std::abs(rp.action_S);
  m.margins.nehari = -rv.nehari_K / sv;
  m.margins.virial = rv.virial_Q / sv;
  m.margins.lp = (rv.power_Lp - rp.power_Lp) / rp.power_Lp;

  const auto& g = m.margins;
  m.mass_boundary = std::abs(g.mass) <= band;
  m.action_boundary = std::abs(g.action) <= band;
  m.nehari_boundary = std::abs(g.nehari) <= band;
  m.lp_boundary = std::abs(g.lp) <= band;

  m.in_mass_ball = g.mass >= -band;  // non-strict: the boundary belongs to the ball
  m.below_action = g.action > band;
  m.nehari_negative = g.nehari > band;
  m.above_lp = g.lp > band;
  m.virial_sign = std::abs(g.virial) <= band ? 0 : (g.virial > 0 ? 1 : -1);

  const bool common = m.in_mass_ball && m.below_action && m.nehari_negative;
  if (common && m.virial_sign < 0) m.verdict = SetVerdict::Kminus;
  if (common && m.virial_sign > 0) m.verdict = SetVerdict::Kplus;
  m.in_B_omega = m.in_mass_ball && m.below_action && m.above_lp && m.virial_sign < 0;
  return m;
}

/// `mass, kinetic, G, P, S, K, Q, margin_mass, margin_action, margin_nehari, margin_virial, margin_lp, verdict, B`
inline std::string membership_record(const SetMembership& m) {
  std::ostringstream os;
  const auto& r = m.report;
  const auto& g = m.margins;
  for (double x : {r.mass, r.kinetic, r.potential_G, r.power_Lp, r.action_S, r.nehari_K, r.virial_Q, g.mass,
                   g.action, g.nehari, g.virial, g.lp})
    os << fmt17(x) << ", ";
  os << to_string(m.verdict) << ", " << (m.in_B_omega ? "B" : "-");
  return os.str();
}

// ---------------------------------------------------------------------------
// Second variation along v^λ = λ^{d/2}v(λ·)

inline double second_variation(const FunctionalReport& r, const ModelParams& p) {
  const double s = p.sigma, b = p.beta();
  return r.kinetic - 0.5 * s * (s - 1) * r.potential_G - b * (b - 1) / (p.alpha + 2) * r.power_Lp;
}

inline double second_variation(const GroundStateResult& gs, const ModelParams& p) {
  return second_variation(gs.report, p);
}

/// ∂²_λ S(φ^λ) at λ = 1 by a centred difference of the resampled dilations.
inline double second_variation_fd(const GroundStateResult& gs, const ModelParams& p, double step = 1e-3) {
  auto action = [&](double lam) { return functionals(rescale(gs.phi, lam), p, gs.omega).action_S; };
  return (action(1 + step) - 2 * action(1.0) + action(1 - step)) / (step * step);
}

struct Omega0Options {
  int per_decade = 4;     ///< density of the tabulation before bisection
  double rel_tol = 1e-6;  ///< bisection width relative to ω
  int n = 32768;
};

struct Omega0Result {
  double omega0 = 0.0;
  double D = 0.0;  ///< D at omega0
  bool below_bracket = false;
  std::vector<std::pair<double, double>> table;  ///< (ω, D(ω)) from the coarse tabulation
  int evaluations = 0;
};

/// D(ω) from the shooting ground state at ω.
inline double second_variation_at(const ModelParams& p, double omega, const GridPtr& grid = nullptr) {
  GroundStateOptions o;
  o.grid = grid ? grid : ground_state_grid(p, omega);
  return second_variation(find_ground_state_shooting(p, omega, o), p);
}

/// Smallest ω in [lo, hi] with D(ω) ≤ 0, assuming a single sign change.
/// The returned point is the right end of the final bracket, so D(ω₀) ≤ 0.
inline Omega0Result find_omega0(const ModelParams& p, double lo, double hi, const Omega0Options& opt = {}) {
  validate(p);
  if (!(lo > 0.0 && hi > lo)) throw ParameterError("find_omega0: need 0 < lo < hi");
  const double mu1 = discrete_mu1(p, ground_state_grid(p, lo, opt.n));
  require_above_threshold(lo, mu1, "find_omega0");

  Omega0Result res;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::log10(hi / lo) * opt.per_decade)));
  int first_neg = -1;
  for (int k = 0; k <= steps; ++k) {
    const double w = lo * std::pow(hi / lo, static_cast<double>(k) / steps);
    const double D = second_variation_at(p, w, ground_state_grid(p, w, opt.n));
    ++res.evaluations;
    res.table.emplace_back(w, D);
    if (D <= 0.0) {
      first_neg = k;
      break;
    }
  }
  if (first_neg < 0) {
    std::ostringstream os;
    os << "find_omega0: D > 0 on the whole bracket;";
    for (auto [w, D] : res.table) os << " D(" << w << ")=" << D;
    throw BracketError(os.str());
  }
  if (first_neg == 0) {
    res.omega0 = lo;
    res.D = res.table.front().second;
    res.below_bracket = true;
    return res;
  }

  double a = res.table[first_neg - 1].first, b = res.table[first_neg].first;
  res.D = res.table[first_neg].second;
  const auto grid = ground_state_grid(p, a, opt.n);
  // re-evaluate the right end on the shared grid so the bracket is consistent
  double Db = second_variation_at(p, b, grid);
  ++res.evaluations;
  while (Db > 0.0) {  // grid change moved the sign; walk right
    a = b;
    b *= std::pow(hi / lo, 1.0 / steps);
    Db = second_variation_at(p, b, grid);
    ++res.evaluations;
  }
  res.D = Db;
  while (b - a > opt.rel_tol * b) {
    const double mid = std::sqrt(a * b);
    const double D = second_variation_at(p, mid, grid);
    ++res.evaluations;
    if (D <= 0.0) {
      b = mid;
      res.D = D;
    } else {
      a = mid;
    }
  }
  res.omega0 = b;
  return res;
}

// ---------------------------------------------------------------------------
// Key estimate Q(v) ≤ 2(S(v) − S(φ))

struct KeyEstimateVerdict {
  bool applicable = false;
  bool holds = false;
  double lhs = 0.0;  ///< Q(v)
  double rhs = 0.0;  ///< 2(S(v) − S(φ))
  double slack = 0.0;
  std::string reason;  ///< why the check was inapplicable
};

inline KeyEstimateVerdict key_estimate_check(const RadialField& v, const ModelParams& p, double omega,
                                             const GroundStateResult& gs, double tol = 1e-8) {
  if (v.is_zero()) throw ParameterError("key_estimate_check: field must be nonzero");
  const auto rv = functionals(v, p, omega);
  const auto rp = functionals(gs.phi, p, omega);
  const double scale = std::max(report_scale(rv), report_scale(rp));
  KeyEstimateVerdict out;
  out.lhs = rv.virial_Q;
  out.rhs = 2 * (rv.action_S - rp.action_S);
  out.slack = tol * scale;
  if (rv.mass > rp.mass * (1 + tol))
    out.reason = "mass above the ground state";
  else if (rv.nehari_K > out.slack)
    out.reason = "K > 0";
  else if (rv.virial_Q > out.slack)
    out.reason = "Q > 0";
  else if (second_variation(rp, p) > tol * report_scale(rp))
    out.reason = "D(omega) > 0";
  if (!out.reason.empty()) return out;
  out.applicable = true;
  out.holds = out.lhs <= out.rhs + out.slack;
  return out;
}

// ---------------------------------------------------------------------------
// Auxiliary functions on (0, 1)

inline double aux_g2(double s, double b, double x) {
  return (2 - s) * std::pow(x, b - s) - (b - s) * std::pow(x, 2 - s) + b - 2;
}

inline double aux_g1(double s, double b, double x) {
  return 2 * s * (2 - s) * std::pow(x, b) - s * b * (b - s) * x * x + 2 * b * (b - 2) * std::pow(x, s) -
         (b - s) * (b - 2) * (2 - s);
}

/// The ratio function; numerator and denominator both vanish to second order
/// at 1, so it is evaluated in 50-digit arithmetic.
inline double aux_g(double s_, double b_, double x_) {
  using real = boost::multiprecision::cpp_bin_float_50;
  const real s(s_), b(b_), x(x_);
  const real num = (2 - s * pow(x, 2 - s)) * (2 * pow(x, b) - b * x * x - 2 + b);
  const real den = b * pow(x, b - s) * (s * x * x - 2 * pow(x, s) - s + 2);
  const real g = num / den - pow(x, 2 - b) - (b - s - 2) / s;
  return static_cast<double>(g);
}

struct MonotoneLemmaVerdict {
  double g2_min = 0.0;
  double g1_max = 0.0;
  double g_min = 0.0;
  double g2_at_one = 0.0;
  double g1_at_one = 0.0;
  bool holds = false;
};

inline MonotoneLemmaVerdict monotone_lemma_check(double sigma, double beta, int points = 10000, double tol = 1e-12) {
  if (!(sigma > 0.0 && sigma < 2.0 && beta > 2.0))
    throw ParameterError("monotone_lemma_check: need 0 < sigma < 2 < beta");
  MonotoneLemmaVerdict out;
  out.g2_min = out.g_min = std::numeric_limits<double>::infinity();
  out.g1_max = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= points; ++k) {
    const double x = static_cast<double>(k) / (points + 1);
    out.g2_min = std::min(out.g2_min, aux_g2(sigma, beta, x));
    out.g1_max = std::max(out.g1_max, aux_g1(sigma, beta, x));
    out.g_min = std::min(out.g_min, aux_g(sigma, beta, x));
  }
  out.g2_at_one = aux_g2(sigma, beta, 1.0);
  out.g1_at_one = aux_g1(sigma, beta, 1.0);
  out.holds = out.g2_min >= -tol && out.g1_max <= tol && out.g_min >= -tol;
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic sample family around a ground state

/// φ^λ shrunk in amplitude so that resampling cannot raise its mass above ‖φ‖².
inline RadialField dilate_keeping_mass(const RadialField& phi, double lam) {
  RadialField v = rescale(phi, lam);
  const double ratio = mass(phi) / mass(v);
  return ratio < 1.0 ? v.scaled(std::sqrt(ratio)) : v;
}

struct SampleFamilyOptions {
  double lam_lo = 0.6, lam_hi = 1.8;
  int lam_count = 10;
  double amp_lo = 0.7;
  int amp_count = 8;
  int bumps = 20;
  std::uint64_t seed = 12345;
};

/// μ·φ^λ (mass-capped) on a log grid of λ and a linear grid of μ ∈ [amp_lo, 1], followed by
/// chirped Gaussian bumps whose mass is a random fraction of ‖φ‖².
inline std::vector<RadialField> sample_family(const GroundStateResult& gs, const SampleFamilyOptions& o = {}) {
  std::vector<RadialField> out;
  out.reserve(o.lam_count * o.amp_count + o.bumps);
  for (int i = 0; i < o.lam_count; ++i) {
    const double t = o.lam_count > 1 ? static_cast<double>(i) / (o.lam_count - 1) : 0.0;
    const RadialField base = dilate_keeping_mass(gs.phi, o.lam_lo * std::pow(o.lam_hi / o.lam_lo, t));
    for (int j = 0; j < o.amp_count; ++j) {
      const double u = o.amp_count > 1 ? static_cast<double>(j) / (o.amp_count - 1) : 1.0;
      out.push_back(base.scaled(o.amp_lo + (1.0 - o.amp_lo) * u));
    }
  }
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double m_phi = gs.report.mass;
  // width of φ measured by its variance
  const double width = std::sqrt(Discretization(gs.phi.grid_ptr(), 0.5, 0.0).variance(gs.phi.values()) / m_phi);
  for (int k = 0; k < o.bumps; ++k) {
    const double w = width * (0.2 + 0.8 * unit(rng));
    const double chirp = (unit(rng) - 0.5) / (w * w);
    const double frac = 0.5 + 0.5 * unit(rng);
    RadialField b = RadialField::from_function(gs.phi.grid_ptr(), [&](double r) {
      return std::exp(cplx(-0.5 * r * r / (w * w), chirp * r * r));
    });
    out.push_back(b.scaled(std::sqrt(frac * m_phi / mass(b))));
  }
  return out;
}

}  // namespace nlsip
