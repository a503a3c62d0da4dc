#pragma once

// Mass-critical asymptotics (α = 4/d) as the mass a approaches a* = ‖Q‖²:
// the scale λ₀, sharpness of the Gagliardo-Nirenberg inequality, trial-state
// energies, the I(a) sweep with its power laws, and convergence of the
// rescaled minimizers to λ₀^{d/2} Q(λ₀·).

#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/elliptic.hpp"
#include "nlsip/parallel.hpp"

namespace nlsip {

/// β_a = 1 - (a/a*)^{2/d}
inline double beta_a(double a, double a_star, int d) { return 1.0 - std::pow(a / a_star, 2.0 / d); }

/// Potential energy of Q/‖Q‖, i.e. G(Q)/‖Q‖².
inline double normalized_potential(const RadialField& Q, double sigma, double coupling = 1.0) {
  return Discretization(Q.grid_ptr(), sigma, coupling).potential_energy(Q.values()) / mass(Q);
}

struct Lambda0Result {
  double lambda0 = 0.0;
  double G_Q0 = 0.0;
  double limit = 0.0;         ///< λ₀²d/4 - λ₀^σ G(Q₀)/2
  double stationarity = 0.0;  ///< derivative of the scale function at λ₀
  double grid_gap = 0.0;      ///< f(λ₀) - min over a log grid of λ (≤ 0 when λ₀ wins)
  bool is_minimizer = false;
};

inline Lambda0Result lambda0(const RadialField& Q, double sigma, double coupling = 1.0) {
  const int d = Q.grid().dim();
  Lambda0Result out;
  out.G_Q0 = normalized_potential(Q, sigma, coupling);
  const double G = out.G_Q0;
  auto f = [&](double l) { return l * l * d / 4 - std::pow(l, sigma) * G / 2; };
  out.lambda0 = std::pow(sigma * G / d, 1.0 / (2 - sigma));
  const double l0 = out.lambda0;
  out.limit = f(l0);
  out.stationarity = l0 * d / 2 - sigma * std::pow(l0, sigma - 1) * G / 2;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 4000; ++k) best = std::min(best, f(l0 * std::pow(10.0, -2.0 + k * 1e-3)));
  out.grid_gap = f(l0) - best;
  out.is_minimizer = std::abs(out.stationarity) <= 1e-8 && out.grid_gap <= 1e-8;
  return out;
}

// ---------------------------------------------------------------------------
// Gagliardo-Nirenberg: ‖v‖^{4/d+2}_{4/d+2} ≤ (d+2)/d (‖v‖²/‖Q‖²)^{2/d} ‖∇v‖²

struct GNSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline GNSides gn_sides(const RadialField& v, double a_star) {
  const int d = v.grid().dim();
  const Discretization D(v.grid_ptr(), std::min(0.5, 0.5 * d), 0.0);
  GNSides s;
  s.lhs = D.power(v.values(), 4.0 / d);
  s.rhs = (d + 2.0) / d * std::pow(D.mass(v.values()) / a_star, 2.0 / d) * D.kinetic(v.values());
  return s;
}

/// Radial test fields: one or two Gaussians of varied width and sign, some
/// with a chirp, some with an algebraic or exponential tail instead.
inline std::vector<RadialField> gn_test_family(const GridPtr& grid, int count = 50, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double R = grid->r_max();
  std::vector<RadialField> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double w1 = R * (0.02 + 0.08 * unit(rng));
    const double w2 = R * (0.02 + 0.08 * unit(rng));
    const double c2 = 2 * unit(rng) - 1;
    const double shift = R * 0.1 * unit(rng);
    const double chirp = k % 3 == 0 ? (unit(rng) - 0.5) / (w1 * w1) : 0.0;
    const int shape = k % 5;
    out.push_back(RadialField::from_function(grid, [&](double r) -> cplx {
      switch (shape) {
        case 3: return 1.0 / std::pow(1 + (r / w1) * (r / w1), 2.0);
        case 4: return std::exp(-r / w1) * (1 + r / w1);
        default:
          return std::exp(cplx(-0.5 * r * r / (w1 * w1), chirp * r * r)) +
                 c2 * std::exp(-0.5 * std::pow((r - shift) / w2, 2));
      }
    }));
  }
  return out;
}

struct GNVerdict {
  double equality_rel_err = 0.0;  ///< |lhs - rhs|/rhs at Q
  int strict = 0;                 ///< fields with lhs < rhs - tol·rhs
  int count = 0;
  double max_ratio = 0.0;  ///< max lhs/rhs over the family
  bool holds = false;
};

inline GNVerdict gn_sharpness_check(const RadialField& Q, const std::vector<RadialField>& family, double tol = 1e-8) {
  const double a_star = mass(Q);
  GNVerdict out;
  const auto q = gn_sides(Q, a_star);
  out.equality_rel_err = std::abs(q.lhs - q.rhs) / q.rhs;
  for (const auto& v : family) {
    const auto s = gn_sides(v, a_star);
    ++out.count;
    out.max_ratio = std::max(out.max_ratio, s.lhs / s.rhs);
    if (s.lhs < s.rhs * (1 - tol)) ++out.strict;
  }
  out.holds = out.equality_rel_err <= 1e-6 && out.strict == out.count;
  return out;
}

// ---------------------------------------------------------------------------
// Trial states A τ^{d/2} ϕ(x) Q₀(τx)

/// 1 on [0, 1], 0 beyond 2, quintic smoothstep in between.
inline double cutoff(double r) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  const double t = r - 1.0;
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

/// Radius where |v| first drops to half its value at the origin, in nodes.
inline int half_width_nodes(const RadialField& v) {
  const double top = std::abs(v[0]);
  int i = 0;
  while (i < v.size() && std::abs(v[i]) > 0.5 * top) ++i;
  return i;
}

struct TrialEnergy {
  double energy_per_mass = 0.0;  ///< E(v_τ)/a
  double expansion = 0.0;        ///< τ²d/4·β_a - τ^σ G(Q₀)/2
  double mass = 0.0;
};

inline TrialEnergy trial_energy(double a, double tau, const FreeSoliton& fs, const ModelParams& p, int n = 16384) {
  validate(p);
  if (!p.is_mass_critical()) throw ParameterError("trial_energy: requires alpha = 4/d");
  if (!(tau >= 1.0)) throw ParameterError("trial_energy: tau must be >= 1");
  if (!(a > 0.0)) throw ParameterError("trial_energy: mass must be positive");
  const auto grid = build_grid(p.d, 2.0, n);
  const double norm = std::sqrt(fs.a_star);
  const RadialField shape = RadialField::from_function(
      grid, [&](double r) { return cutoff(r) * std::pow(tau, 0.5 * p.d) * sample(fs.Q, tau * r).real() / norm; });
  if (half_width_nodes(shape) < 32)
    throw NumericalError("trial_energy: tau = " + fmt17(tau) + " under-resolves Q0(tau x) on the trial grid");
  const RadialField v = shape.scaled(std::sqrt(a / mass(shape)));
  const auto r = functionals(v, p, 0.0);
  TrialEnergy out;
  out.energy_per_mass = r.energy_E / a;
  out.mass = r.mass;
  const double G = normalized_potential(fs.Q, p.sigma, p.coupling);
  out.expansion = tau * tau * p.d / 4 * beta_a(a, fs.a_star, p.d) - std::pow(tau, p.sigma) * G / 2;
  return out;
}

/// τ minimizing E(v_τ)/a over a log grid of [lo, hi].
inline double trial_energy_argmin(double a, const FreeSoliton& fs, const ModelParams& p, double lo, double hi,
                                  int points = 200, int n = 16384) {
  double best_tau = lo, best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= points; ++k) {
    const double tau = lo * std::pow(hi / lo, static_cast<double>(k) / points);
    const double e = trial_energy(a, tau, fs, p, n).energy_per_mass;
    if (e < best) best = e, best_tau = tau;
  }
  return best_tau;
}

// ---------------------------------------------------------------------------
// Rescaled minimizers

struct RescaledConvergence {
  double h1_error = 0.0;
  double mass_w = 0.0;
  int half_width = 0;  ///< of w_a, in nodes
};

struct RescaledPair {
  RadialField w;
  RadialField reference;
};

/// w_a(x) = β_a^{d/(2(2-σ))} v_a(β_a^{1/(2-σ)} x) and λ₀^{d/2} Q(λ₀x). w_a lives on
/// v_a's node layout stretched by β_a^{-1/(2-σ)}, so only the reference is interpolated.
inline RescaledPair rescaled_profiles(const RadialField& v_a, double a, const FreeSoliton& fs, double sigma,
                                      double coupling = 1.0) {
  const int d = v_a.grid().dim();
  const double b = beta_a(a, fs.a_star, d);
  if (!(b > 0.0 && b < 1.0)) throw ParameterError("rescaled_convergence: need 0 < a < a*");
  const double s = std::pow(b, 1.0 / (2 - sigma));
  const auto wgrid = build_grid(d, v_a.grid().r_max() / s, v_a.size());
  const double l0 = lambda0(fs.Q, sigma, coupling).lambda0;
  return {resample(v_a, wgrid, s, std::pow(s, 0.5 * d)), resample(fs.Q, wgrid, l0, std::pow(l0, 0.5 * d))};
}

inline RescaledConvergence rescaled_convergence(const RadialField& v_a, double a, const FreeSoliton& fs, double sigma,
                                                double coupling = 1.0) {
  const auto [w, ref] = rescaled_profiles(v_a, a, fs, sigma, coupling);
  RescaledConvergence out;
  out.half_width = half_width_nodes(w);
  if (out.half_width < 32) throw NumericalError("rescaled_convergence: w_a spans fewer than 32 nodes");
  out.h1_error = h1_distance(w, ref);
  out.mass_w = mass(w);
  return out;
}

// ---------------------------------------------------------------------------
// Sweep toward a*

struct CriticalSweepRecord {
  double a = 0.0;
  double beta_a = 0.0;
  double I_a = 0.0;
  double G_va = 0.0;
  double kinetic_va = 0.0;
  double h1_error = 0.0;
  double gradnorm = 0.0;
  double mass_w = 0.0;
  double el_residual = 0.0;
  int flow_steps = 0;
};

inline const std::vector<double>& default_sweep_fractions() {
  static const std::vector<double> f{0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.9975, 0.999};
  return f;
}

struct SweepOptions {
  double domain = 30.0;  ///< r_max in units of the expected width β_a^{1/(2-σ)}/λ₀
  int n = 32768;
  double residual_tol = 1e-6;
  int threads = 1;
};

struct CriticalSweep {
  std::vector<CriticalSweepRecord> records;
  Lambda0Result scale;
  double slope_energy = 0.0;    ///< fitted d log(-I/a) / d log β_a
  double slope_gradient = 0.0;  ///< fitted d log ‖∇v_a‖ / d log β_a
  double envelope_m = 0.0;      ///< min over the sweep of -β_a^{σ/(2-σ)} I/a
  double envelope_M = 0.0;      ///< max of the same
  double limit_target = 0.0;
  double limit_value = 0.0;  ///< β_a^{σ/(2-σ)} I/a at the largest a
  double limit_rel_err = 0.0;
  bool energy_ratio_decreasing = false;  ///< I(a)/a decreasing in a
  std::optional<RadialField> closest;    ///< minimizer at the largest mass
};

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ParameterError("fit_slope: need at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

inline CriticalSweepRecord critical_sweep_point(const ModelParams& p, const FreeSoliton& fs, double fraction,
                                                const Lambda0Result& scale, const SweepOptions& o,
                                                std::optional<RadialField>* keep = nullptr) {
  const double a = fraction * fs.a_star;
  const double b = beta_a(a, fs.a_star, p.d);
  const double width = std::pow(b, 1.0 / (2 - p.sigma)) / scale.lambda0;
  const auto grid = build_grid(p.d, o.domain * width, o.n);
  ConstrainedOptions co;
  co.grid = grid;
  co.a_star = fs.a_star;
  co.residual_tol = o.residual_tol;
  // the expected profile at this mass, as seed
  co.seed = resample(fs.Q, grid, 1.0 / width, std::sqrt(fraction) * std::pow(width, -0.5 * p.d));
  const auto m = minimize_energy_constrained(p, a, co);
  const auto conv = rescaled_convergence(m.v, a, fs, p.sigma, p.coupling);
  CriticalSweepRecord rec;
  rec.a = a;
  rec.beta_a = b;
  rec.I_a = m.I_a;
  rec.G_va = m.report.potential_G;
  rec.kinetic_va = m.report.kinetic;
  rec.h1_error = conv.h1_error;
  rec.gradnorm = std::sqrt(m.report.kinetic);
  rec.mass_w = conv.mass_w;
  rec.el_residual = m.el_residual;
  rec.flow_steps = m.flow_steps;
  if (keep) *keep = m.v;
  return rec;
}

inline CriticalSweep energy_scaling_sweep(const ModelParams& p, const FreeSoliton& fs,
                                          const std::vector<double>& fractions = default_sweep_fractions(),
                                          const SweepOptions& o = {}) {
  validate(p);
  if (!p.is_mass_critical()) throw ParameterError("energy_scaling_sweep: requires alpha = 4/d");
  if (fractions.size() < 2) throw ParameterError("energy_scaling_sweep: need at least two masses");
  for (double f : fractions)
    if (!(f > 0.0 && f < 1.0)) throw ParameterError("energy_scaling_sweep: mass fractions must lie in (0, 1)");
  if (fs.Q.grid().dim() != p.d) throw ParameterError("energy_scaling_sweep: soliton dimension differs from d");

  CriticalSweep out;
  out.scale = lambda0(fs.Q, p.sigma, p.coupling);
  out.records.resize(fractions.size());
  const auto top = std::max_element(fractions.begin(), fractions.end()) - fractions.begin();
  parallel_for(static_cast<int>(fractions.size()), o.threads, [&](int k) {
    out.records[k] = critical_sweep_point(p, fs, fractions[k], out.scale, o, k == top ? &out.closest : nullptr);
  });

  const double e = p.sigma / (2 - p.sigma);
  std::vector<double> lb, lI, lg;
  out.envelope_m = std::numeric_limits<double>::infinity();
  out.envelope_M = 0.0;
  out.energy_ratio_decreasing = true;
  for (std::size_t k = 0; k < out.records.size(); ++k) {
    const auto& r = out.records[k];
    lb.push_back(std::log(r.beta_a));
    lI.push_back(std::log(-r.I_a / r.a));
    lg.push_back(std::log(r.gradnorm));
    const double scaled = -std::pow(r.beta_a, e) * r.I_a / r.a;
    out.envelope_m = std::min(out.envelope_m, scaled);
    out.envelope_M = std::max(out.envelope_M, scaled);
    if (k > 0 && r.a > out.records[k - 1].a && !(r.I_a / r.a < out.records[k - 1].I_a / out.records[k - 1].a))
      out.energy_ratio_decreasing = false;
  }
  out.slope_energy = fit_slope(lb, lI);
  out.slope_gradient = fit_slope(lb, lg);
  const auto& last = *std::max_element(out.records.begin(), out.records.end(),
                                       [](const auto& x, const auto& y) { return x.a < y.a; });
  out.limit_target = out.scale.limit;
  out.limit_value = std::pow(last.beta_a, e) * last.I_a / last.a;
  out.limit_rel_err = std::abs(out.limit_value - out.limit_target) / std::abs(out.limit_target);
  return out;
}

/// `a, beta_a, I_a, G_va, kinetic_va, h1_error, gradnorm`
inline std::string sweep_csv_row(const CriticalSweepRecord& r) {
  std::ostringstream os;
  os << fmt17(r.a) << ", " << fmt17(r.beta_a) << ", " << fmt17(r.I_a) << ", " << fmt17(r.G_va) << ", "
     << fmt17(r.kinetic_va) << ", " << fmt17(r.h1_error) << ", " << fmt17(r.gradnorm);
  return os.str();
}

// ---------------------------------------------------------------------------
// Power-law envelopes of G(v_a) and ‖∇v_a‖²

/// K⁻¹β^{-σ/(2-σ)} ≤ G/a ≤ Kβ^{-σ/(2-σ)} and kinetic/a ≤ Kβ^{-2/(2-σ)}.
inline bool scaling_bounds_check(const CriticalSweepRecord& r, double K, double sigma) {
  const double gs = std::pow(r.beta_a, -sigma / (2 - sigma));
  const double ks = std::pow(r.beta_a, -2 / (2 - sigma));
  const double G = r.G_va / r.a;
  return G >= gs / K && G <= K * gs && r.kinetic_va / r.a <= K * ks;
}

/// Smallest K > 1 that satisfies scaling_bounds_check at every record.
inline double fit_scaling_constant(const std::vector<CriticalSweepRecord>& recs, double sigma) {
  double K = 1.0;
  for (const auto& r : recs) {
    const double gs = std::pow(r.beta_a, -sigma / (2 - sigma));
    const double ks = std::pow(r.beta_a, -2 / (2 - sigma));
    const double G = r.G_va / r.a;
    K = std::max({K, G / gs, gs / G, r.kinetic_va / r.a / ks});
  }
  return K * (1 + 1e-12);
}

struct GradientDivergence {
  bool increasing = false;
  double growth = 0.0;  ///< last/first gradient norm
  double slope = 0.0;
  double target = 0.0;  ///< -1/(2-σ)
  double slope_rel_err = 0.0;
  bool holds = false;
};

inline GradientDivergence gradient_divergence_check(const std::vector<CriticalSweepRecord>& recs, double sigma) {
  GradientDivergence out;
  if (recs.size() < 2) throw ParameterError("gradient_divergence_check: need at least two sweep points");
  out.increasing = true;
  std::vector<double> lb, lg;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (k > 0 && !(recs[k].gradnorm > recs[k - 1].gradnorm)) out.increasing = false;
    lb.push_back(std::log(recs[k].beta_a));
    lg.push_back(std::log(recs[k].gradnorm));
  }
  out.growth = recs.back().gradnorm / recs.front().gradnorm;
  out.slope = fit_slope(lb, lg);
  out.target = -1.0 / (2 - sigma);
  out.slope_rel_err = std::abs(out.slope - out.target) / std::abs(out.target);
  out.holds = out.increasing && out.growth > 10.0 && out.slope_rel_err <= 0.10;
  return out;
}

/// True when the sequence decreases up to relative upticks of `noise`.
inline bool decreasing_within(const std::vector<double>& xs, double noise = 0.2) {
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (xs[k] > xs[k - 1] * (1 + noise)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// No minimizer at a*: the constrained flow keeps descending

struct ProbeOptions {
  double tau0 = 50.0;  ///< initial concentration of the Q₀ seed
  double domain = 20.0;  ///< r_max = domain/tau0
  int n = 65536;
  int max_steps = 5000;
};

struct CriticalMassProbe {
  double threshold = 0.0;
  double energy_start = 0.0;
  double energy_final = 0.0;
  int steps = 0;
  int half_width = 0;       ///< of the final profile, in nodes
  bool crossed = false;     ///< final energy below the threshold
  bool stabilized = false;  ///< flow stopped on its own tolerances before crossing
};

/// Runs the constrained flow at a = a* from a concentrated soliton seed and
/// reports whether E drops below `threshold` (typically -10|I(0.99a*)|).
inline CriticalMassProbe critical_mass_probe(const ModelParams& p, const FreeSoliton& fs, double threshold,
                                             const ProbeOptions& o = {}) {
  validate(p);
  if (!p.is_mass_critical()) throw ParameterError("critical_mass_probe: requires alpha = 4/d");
  const auto grid = build_grid(p.d, o.domain / o.tau0, o.n);
  ConstrainedOptions co;
  co.grid = grid;
  co.seed = resample(fs.Q, grid, o.tau0, std::pow(o.tau0, 0.5 * p.d));
  co.max_steps = o.max_steps;
  co.stop_below = threshold;
  const Discretization D(grid, p);
  const auto flow = detail::constrained_flow(p, fs.a_star, co, D, schrodinger_pencil(D), discrete_mu1(p, grid));
  CriticalMassProbe out;
  out.threshold = threshold;
  out.energy_start = flow.history.front();
  out.energy_final = flow.energy;
  out.steps = flow.steps;
  out.half_width = half_width_nodes(RadialField::from_real(grid, flow.v));
  out.crossed = out.energy_final < threshold;
  out.stabilized = !out.crossed && flow.steps < o.max_steps;
  return out;
}

}  // namespace nlsip
