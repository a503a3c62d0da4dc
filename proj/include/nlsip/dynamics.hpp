#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/core.hpp"
#include "nlsip/elliptic.hpp"
#include "nlsip/error.hpp"
#include "nlsip/parallel.hpp"
#include "nlsip/profile_io.hpp"

namespace nlsip {

enum class Verdict { global, blewup, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::global: return "global";
    case Verdict::blewup: return "blewup";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct BlowupVerdict {
  Verdict kind = Verdict::inconclusive;
  double t_star = 0.0;           ///< last resolved time when kind == blewup
  double gradient_growth = 0.0;  ///< max gradnorm / initial gradnorm
  bool gradient_criterion = false;
  bool resolution_tripped = false;
  bool glassey = false;
  double glassey_zero = 0.0;  ///< zero of the fitted concave variance, if any
  double h1_growth = 0.0;
  std::string reason;
};

struct EvolutionTrace {
  std::vector<double> times, mass, energy, variance, virialQ, gradnorm;
  double T = 0.0;    ///< requested horizon
  double dt = 0.0;   ///< requested step
  double h = 0.0;
  long steps = 0;
  double min_dt = 0.0;  ///< smallest step actually taken
  bool truncated = false;
  bool resolution_tripped = false;
  bool nonfinite = false;
  std::string stop_reason;
  BlowupVerdict verdict;

  [[nodiscard]] std::size_t size() const { return times.size(); }
  [[nodiscard]] bool reached_horizon() const { return !truncated; }
};

struct EvolveOptions {
  double output_every = 0.0;  ///< 0: sample after every step
  bool nonlinear = true;
  double max_phase = 0.25;    ///< cap on dt·max|u|^α; the step shrinks to honour it
  double min_step = 1e-12;
  double boundary_tol = 1e-6;  ///< relative to max|u0|
  double gradient_factor = 1e3;
  double tripwire = 1.0;       ///< h·‖∇u‖ above this counts as under-resolved
  long max_steps = 100'000'000;
  /// called with (t, u) at every output sample
  std::function<void(double, std::span<const cplx>)> observer;
};

/// Strang splitting: half phase rotation by potential + nonlinearity, a Crank–Nicolson
/// step for the Laplacian, another half rotation.
class SplitStepper {
 public:
  SplitStepper(const Discretization& D, const ModelParams& p, bool nonlinear)
      : D_(D), alpha_(p.alpha), nonlinear_(nonlinear) {
    const int n = D.size();
    diag_.resize(n);
    off_.resize(n > 1 ? n - 1 : 0);
    rhs_.resize(n);
  }

  void phase(std::span<cplx> u, double tau) const {
    const auto pot = D_.potential();
    auto nonlin = [this](cplx z) {
      if (!nonlinear_) return 0.0;
      if (alpha_ == 2.0) return std::norm(z);
      if (alpha_ == 1.0) return std::abs(z);
      return std::pow(std::norm(z), 0.5 * alpha_);
    };
    for (std::size_t i = 0; i < u.size(); ++i) u[i] *= std::polar(1.0, tau * (pot[i] + nonlin(u[i])));
  }

  void diffuse(std::span<cplx> u, double dt) {
    const auto f = D_.grid().flux();
    const auto w = D_.grid().weights();
    const std::size_t n = u.size();
    const cplx half(0.0, 0.5 * dt);
    if (dt != cached_dt_) {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = f[i] + (i > 0 ? f[i - 1] : 0.0);
        diag_[i] = w[i] + half * s;
        if (i + 1 < n) off_[i] = -half * f[i];
      }
      cached_dt_ = dt;
    }
    for (std::size_t i = 0; i < n; ++i) {
      cplx su = (f[i] + (i > 0 ? f[i - 1] : 0.0)) * u[i];
      if (i + 1 < n) su -= f[i] * u[i + 1];
      if (i > 0) su -= f[i - 1] * u[i - 1];
      rhs_[i] = w[i] * u[i] - half * su;
    }
    solve_tridiagonal<cplx, cplx>(diag_, off_, rhs_, scratch_);
    std::copy(rhs_.begin(), rhs_.end(), u.begin());
  }

  void step(std::span<cplx> u, double dt) {
    phase(u, 0.5 * dt);
    diffuse(u, dt);
    phase(u, 0.5 * dt);
  }

 private:
  const Discretization& D_;
  double alpha_;
  bool nonlinear_;
  double cached_dt_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<cplx> diag_, off_, rhs_, scratch_;
};

namespace detail {

inline double max_modulus(std::span<const cplx> u) {
  double m = 0.0;
  for (const auto& z : u) m = std::max(m, std::abs(z));
  return m;
}

inline void record(EvolutionTrace& tr, const Discretization& D, std::span<const cplx> u, const ModelParams& p,
                   bool nonlinear, double t) {
  const double M = D.mass(u), k = D.kinetic(u), G = D.potential_energy(u);
  const double P = nonlinear ? D.power(u, p.alpha) : 0.0;
  tr.times.push_back(t);
  tr.mass.push_back(M);
  tr.energy.push_back(0.5 * k - 0.5 * G - P / (p.alpha + 2));
  tr.variance.push_back(D.variance(u));
  tr.virialQ.push_back(k - 0.5 * p.sigma * G - p.beta() / (p.alpha + 2) * P);
  tr.gradnorm.push_back(std::sqrt(k));
}

}  // namespace detail

inline BlowupVerdict detect_blowup(const EvolutionTrace& trace, const FunctionalReport& u0_report);

/// Evolves u0 to time T; the returned trace carries the blow-up verdict.
inline EvolutionTrace evolve(const RadialField& u0, const ModelParams& p, double dt, double T, EvolveOptions o = {},
                             RadialField* final_state = nullptr) {
  validate(p);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("evolve: dt must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw ParameterError("evolve: T must be positive");
  if (u0.grid().dim() != p.d) throw ParameterError("evolve: field grid dimension does not match model d");
  if (o.output_every < 0.0) throw ParameterError("evolve: output_every must be >= 0");

  const Discretization D(u0.grid_ptr(), p);
  SplitStepper stepper(D, p, o.nonlinear);
  std::vector<cplx> u(u0.values().begin(), u0.values().end());
  const int n = D.size();
  const double h = D.grid().h();
  const double amp0 = detail::max_modulus(u);
  const int edge = std::max(1, n / 200);

  EvolutionTrace tr;
  tr.T = T;
  tr.dt = dt;
  tr.h = h;
  tr.min_dt = dt;
  detail::record(tr, D, u, p, o.nonlinear, 0.0);
  if (o.observer) o.observer(0.0, u);
  const double g0 = tr.gradnorm.front();

  auto stop = [&](std::string why, bool truncated) {
    tr.stop_reason = std::move(why);
    tr.truncated = truncated;
  };

  double t = 0.0;
  long out_index = 1;
  auto next_out = [&] { return std::min(T, out_index * o.output_every); };
  while (true) {
    if (t >= T) {
      stop("reached T", false);
      break;
    }
    if (tr.steps >= o.max_steps) {
      stop("step budget exhausted", true);
      break;
    }
    double step = std::min(dt, T - t);
    if (o.nonlinear) {
      const double rate = std::pow(detail::max_modulus(u), p.alpha);
      if (rate * step > o.max_phase) step = o.max_phase / rate;
    }
    if (o.output_every > 0.0) step = std::min(step, next_out() - t);
    if (step < o.min_step) {
      stop("step size underflow", true);
      tr.resolution_tripped = true;
      break;
    }
    const std::vector<cplx> prev = u;
    stepper.step(u, step);
    t += step;
    ++tr.steps;
    tr.min_dt = std::min(tr.min_dt, step);

    if (!std::all_of(u.begin(), u.end(), [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); })) {
      u = prev;
      tr.nonfinite = true;
      stop("non-finite values", true);
      break;
    }
    // snap onto the output time (or T) when within rounding of it
    const double target = o.output_every > 0.0 ? next_out() : T;
    if (target - t <= 1e-9 * std::max(step, o.min_step)) t = target;
    const bool sample = o.output_every <= 0.0 || t == next_out();
    if (sample) {
      if (o.output_every > 0.0) ++out_index;
      detail::record(tr, D, u, p, o.nonlinear, t);
      if (o.observer) o.observer(t, u);
    }
    double edge_amp = 0.0;
    for (int i = n - edge; i < n; ++i) edge_amp = std::max(edge_amp, std::abs(u[i]));
    if (edge_amp > o.boundary_tol * amp0) {
      if (!sample) detail::record(tr, D, u, p, o.nonlinear, t);
      stop("boundary amplitude above tolerance", true);
      break;
    }
    const double k = D.kinetic(std::span<const cplx>(u));
    if (h * std::sqrt(k) > o.tripwire) {
      if (!sample) detail::record(tr, D, u, p, o.nonlinear, t);
      tr.resolution_tripped = true;
      stop("resolution trip-wire", true);
      break;
    }
    if (std::sqrt(k) >= o.gradient_factor * g0) {
      if (!sample) detail::record(tr, D, u, p, o.nonlinear, t);
      stop("gradient growth", true);
      break;
    }
  }
  const Discretization D0(u0.grid_ptr(), p);
  auto rep = functionals(D0, u0.values(), p, 0.0);
  tr.verdict = detect_blowup(tr, rep);
  if (final_state) *final_state = RadialField(u0.grid_ptr(), std::move(u));
  return tr;
}

struct QuadraticFit {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

inline QuadraticFit fit_quadratic(std::span<const double> t, std::span<const double> y) {
  // normal equations on centred abscissae
  const std::size_t m = t.size();
  if (m < 3) return {};
  double mean = 0.0;
  for (double x : t) mean += x;
  mean /= m;
  double S[5] = {}, R[3] = {};
  for (std::size_t i = 0; i < m; ++i) {
    const double x = t[i] - mean;
    double xp = 1.0;
    for (int k = 0; k < 5; ++k) {
      S[k] += xp;
      if (k < 3) R[k] += xp * y[i];
      xp *= x;
    }
  }
  // 3x3 solve by Cramer
  auto det3 = [](double a, double b, double c, double d, double e, double f, double g, double h, double i) {
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  };
  const double den = det3(S[0], S[1], S[2], S[1], S[2], S[3], S[2], S[3], S[4]);
  if (den == 0.0) return {};
  const double a0 = det3(R[0], S[1], S[2], R[1], S[2], S[3], R[2], S[3], S[4]) / den;
  const double a1 = det3(S[0], R[0], S[2], S[1], R[1], S[3], S[2], R[2], S[4]) / den;
  const double a2 = det3(S[0], S[1], R[0], S[1], S[2], R[1], S[2], S[3], R[2]) / den;
  // back to the raw abscissa
  return {a0 - a1 * mean + a2 * mean * mean, a1 - 2 * a2 * mean, a2};
}

inline BlowupVerdict detect_blowup(const EvolutionTrace& tr, const FunctionalReport& u0_report) {
  BlowupVerdict v;
  if (tr.size() == 0) {
    v.reason = "empty trace";
    return v;
  }
  const double g0 = std::sqrt(u0_report.kinetic);
  const double gmax = *std::max_element(tr.gradnorm.begin(), tr.gradnorm.end());
  v.gradient_growth = g0 > 0 ? gmax / g0 : 0.0;
  v.gradient_criterion = v.gradient_growth >= 1e3;
  v.resolution_tripped = tr.resolution_tripped || tr.nonfinite;

  if (tr.size() >= 5) {
    const auto q = fit_quadratic(tr.times, tr.variance);
    if (q.c2 < 0.0) {
      const double disc = q.c1 * q.c1 - 4 * q.c2 * q.c0;
      if (disc >= 0.0) {
        const double root = (-q.c1 - std::sqrt(disc)) / (2 * q.c2);  // the larger root for c2 < 0
        if (root > 0.0 && root < tr.T) {
          v.glassey = true;
          v.glassey_zero = root;
        }
      }
    }
  }
  const double H0 = std::sqrt(u0_report.mass + u0_report.kinetic);
  double Hmax = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i)
    Hmax = std::max(Hmax, std::sqrt(tr.mass[i] + tr.gradnorm[i] * tr.gradnorm[i]));
  v.h1_growth = H0 > 0 ? Hmax / H0 : 0.0;

  if (v.gradient_criterion || (v.resolution_tripped && v.glassey)) {
    v.kind = Verdict::blewup;
    v.t_star = tr.times.back();
    v.reason = v.gradient_criterion ? "gradient grew past 1e3 x initial" : "resolution lost with concave variance";
    return v;
  }
  if (v.resolution_tripped || v.glassey) {
    v.kind = Verdict::inconclusive;
    v.reason = v.resolution_tripped ? "resolution lost without variance collapse" : "concave variance without loss of resolution";
    return v;
  }
  if (tr.reached_horizon() && tr.size() >= 3) {
    const std::size_t third = std::max<std::size_t>(1, tr.size() / 3);
    const double early = *std::max_element(tr.gradnorm.begin(), tr.gradnorm.begin() + third);
    const double late = *std::max_element(tr.gradnorm.end() - third, tr.gradnorm.end());
    if (v.h1_growth <= 10.0 && late <= 1.5 * early) {
      v.kind = Verdict::global;
      v.reason = "H1 norm bounded through T";
      return v;
    }
    v.reason = "H1 norm still growing at T";
    return v;
  }
  v.reason = "run stopped early: " + tr.stop_reason;
  return v;
}

inline double drift_per_time(std::span<const double> t, std::span<const double> y) {
  if (t.size() < 2 || t.back() <= t.front()) return 0.0;
  const double ref = std::max(std::abs(y.front()), std::numeric_limits<double>::min());
  double worst = 0.0;
  for (double x : y) worst = std::max(worst, std::abs(x - y.front()) / ref);
  return worst / (t.back() - t.front());
}

inline double mass_drift(const EvolutionTrace& tr) { return drift_per_time(tr.times, tr.mass); }
inline double energy_drift(const EvolutionTrace& tr) { return drift_per_time(tr.times, tr.energy); }

/// max over interior samples of |V'' − 8Q| / (1 + |8Q|), V'' by centred differences.
inline double virial_check(const EvolutionTrace& tr) {
  const std::size_t m = tr.size();
  if (m < 5) throw ParameterError("virial_check: need at least 5 samples, got " + std::to_string(m));
  const double step = tr.times[1] - tr.times[0];
  for (std::size_t i = 1; i < m; ++i)
    if (std::abs(tr.times[i] - tr.times[i - 1] - step) > 1e-9 * std::max(1.0, tr.times[i]))
      throw ParameterError("virial_check: samples are not uniformly spaced");
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double d2 = (tr.variance[i + 1] - 2 * tr.variance[i] + tr.variance[i - 1]) / (step * step);
    const double q8 = 8 * tr.virialQ[i];
    worst = std::max(worst, std::abs(d2 - q8) / (1 + std::abs(q8)));
  }
  return worst;
}

inline std::string trace_csv(const EvolutionTrace& tr) {
  std::ostringstream os;
  os << "t, mass, energy, variance, virialQ, gradnorm\n";
  for (std::size_t i = 0; i < tr.size(); ++i)
    os << fmt17(tr.times[i]) << ", " << fmt17(tr.mass[i]) << ", " << fmt17(tr.energy[i]) << ", "
       << fmt17(tr.variance[i]) << ", " << fmt17(tr.virialQ[i]) << ", " << fmt17(tr.gradnorm[i]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Orbital stability

/// ⟨u, v⟩_{H¹}, conjugate-linear in v.
inline cplx h1_inner(const RadialField& u, const RadialField& v) {
  const auto& g = u.grid();
  const auto w = g.weights();
  const auto f = g.flux();
  const int n = g.size();
  cplx s{};
  for (int i = 0; i < n; ++i) s += w[i] * std::conj(v[i]) * u[i];
  for (int i = 0; i + 1 < n; ++i) s += f[i] * std::conj(v[i + 1] - v[i]) * (u[i + 1] - u[i]);
  s += f[n - 1] * std::conj(v[n - 1]) * u[n - 1];
  return s;
}

/// inf over θ of ‖u − e^{iθ}v‖_{H¹} by a coarse scan and golden-section refinement.
inline double phase_distance(const RadialField& u, const RadialField& v, double* theta_out = nullptr) {
  if (!u.grid().same_as(v.grid())) throw ParameterError("phase_distance: fields live on different grids");
  const cplx c = h1_inner(u, v);
  const double uu = mass(u) + kinetic(u), vv = mass(v) + kinetic(v);
  // ‖u − e^{iθ}v‖² = ‖u‖² + ‖v‖² − 2 Re(e^{-iθ}⟨u, v⟩)
  auto dist2 = [&](double th) { return uu + vv - 2 * std::real(std::polar(1.0, -th) * c); };
  constexpr int coarse = 16;
  const double two_pi = 2 * std::numbers::pi;
  int best = 0;
  for (int k = 1; k < coarse; ++k)
    if (dist2(two_pi * k / coarse) < dist2(two_pi * best / coarse)) best = k;
  double a = two_pi * (best - 1) / coarse, b = two_pi * (best + 1) / coarse;
  const double g = (std::sqrt(5.0) - 1) / 2;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = dist2(x1), f2 = dist2(x2);
  while (b - a > 1e-10) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = dist2(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = dist2(x2);
    }
  }
  const double th = 0.5 * (a + b);
  if (theta_out) *theta_out = std::fmod(th + two_pi, two_pi);
  return std::sqrt(std::max(0.0, dist2(th)));
}

/// Smooth radial bumps with random complex amplitudes, scaled to H¹ norm delta.
inline RadialField smooth_perturbation(const GridPtr& grid, std::uint64_t seed, double delta, int bumps = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> width(0.5, 2.5), freq(0.0, 2.0);
  std::normal_distribution<double> amp;
  std::vector<cplx> v(grid->size());
  const auto r = grid->r();
  for (int b = 0; b < bumps; ++b) {
    const double w = width(rng), k = freq(rng);
    const cplx c(amp(rng), amp(rng));
    for (int i = 0; i < grid->size(); ++i) v[i] += c * std::exp(-(r[i] / w) * (r[i] / w)) * std::cos(k * r[i]);
  }
  RadialField eta(grid, std::move(v));
  const double norm = h1_norm(eta);
  return eta.scaled(norm > 0 ? delta / norm : 0.0);
}

struct StabilityTrial {
  std::uint64_t seed = 0;
  double perturbation_h1 = 0.0;
  double max_distance = 0.0;
  bool blew_up = false;
  std::string note;
  std::vector<std::pair<double, double>> distance;  ///< (t, orbit distance)
};

struct StabilityOptions {
  GridPtr grid;  ///< default: r_max 30, n 4096
  double dt = 0.01;
  double output_every = 0.1;
  std::uint64_t seed = 20240611;
  int threads = 1;
  std::optional<double> a_star;
  /// radiation reflected by the wall stays in the distance, so runs continue by default
  bool truncate_at_boundary = false;
};

struct StabilityResult {
  double max_distance = 0.0;
  RadialField minimizer;
  double lagrange_omega = 0.0;
  std::vector<StabilityTrial> trials;
  bool any_blowup = false;
};

inline StabilityResult stability_experiment(const ModelParams& p, double a, double delta, double T, int trials,
                                            StabilityOptions o = {}) {
  validate(p);
  if (p.is_mass_supercritical()) throw ParameterError("stability_experiment: alpha must be <= 4/d");
  if (!(delta >= 0.0)) throw ParameterError("stability_experiment: delta must be >= 0");
  if (!(T > 0.0)) throw ParameterError("stability_experiment: T must be positive");
  if (trials < 1) throw ParameterError("stability_experiment: trials must be >= 1");
  if (!o.grid) o.grid = build_grid(p.d, 30.0, 4096);

  ConstrainedOptions co;
  co.grid = o.grid;
  co.a_star = o.a_star;
  const auto min = minimize_energy_constrained(p, a, co);

  StabilityResult res{0.0, min.v, min.lagrange_omega, std::vector<StabilityTrial>(trials), false};
  parallel_for(trials, o.threads, [&](int k) {
    StabilityTrial& tr = res.trials[k];
    tr.seed = o.seed + static_cast<std::uint64_t>(k);
    const auto eta = smooth_perturbation(o.grid, tr.seed, delta);
    tr.perturbation_h1 = h1_norm(eta);
    const RadialField u0 = min.v + eta;
    EvolveOptions eo;
    eo.output_every = o.output_every;
    if (!o.truncate_at_boundary) eo.boundary_tol = std::numeric_limits<double>::infinity();
    eo.observer = [&](double t, std::span<const cplx> u) {
      const RadialField ut(o.grid, std::vector<cplx>(u.begin(), u.end()));
      const double dist = phase_distance(ut, min.v);
      tr.distance.emplace_back(t, dist);
      tr.max_distance = std::max(tr.max_distance, dist);
    };
    const auto trace = evolve(u0, p, o.dt, T, eo);
    if (trace.verdict.kind == Verdict::blewup || trace.truncated) {
      tr.blew_up = trace.verdict.kind == Verdict::blewup;
      tr.note = "trial seed " + std::to_string(tr.seed) + ": " + trace.stop_reason;
    }
  });
  for (const auto& t : res.trials) {
    res.max_distance = std::max(res.max_distance, t.max_distance);
    res.any_blowup = res.any_blowup || t.blew_up;
  }
  return res;
}

}  // namespace nlsip
