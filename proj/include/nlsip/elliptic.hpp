#pragma once

// Stationary problems:
//   -Δφ - c|x|^{-σ}φ + ωφ = |φ|^α φ        (ground states at frequency ω)
//   min { E(v) : ‖v‖² = a }                 (constrained minimizers)
// solved by shooting on the radial ODE, by preconditioned descent on the
// action along the Nehari manifold, and by a Riemannian preconditioned
// conjugate-gradient flow on the mass sphere.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "nlsip/core.hpp"
#include "nlsip/spectral.hpp"

namespace nlsip {

struct PohozaevResiduals {
  double nehari = 0.0;  ///< k + ωM - G - P, relative
  double scaling = 0.0; ///< (2-d)/2 k - dωM/2 + (d-σ)/2 G + d/(α+2) P, relative
  [[nodiscard]] double max() const { return std::max(std::abs(nehari), std::abs(scaling)); }
};

inline PohozaevResiduals pohozaev_residuals(const FunctionalReport& r, const ModelParams& p) {
  const double d = p.d;
  const double wM = r.omega * r.mass;
  const double n1 = std::max({std::abs(r.kinetic), std::abs(wM), std::abs(r.potential_G), std::abs(r.power_Lp)});
  const std::array<double, 4> t2{(2 - d) / 2 * r.kinetic, -d * wM / 2, (d - p.sigma) / 2 * r.potential_G,
                                 d / (p.alpha + 2) * r.power_Lp};
  double n2 = 0.0;
  for (double t : t2) n2 = std::max(n2, std::abs(t));
  PohozaevResiduals out;
  out.nehari = (r.kinetic + wM - r.potential_G - r.power_Lp) / n1;
  out.scaling = (t2[0] + t2[1] + t2[2] + t2[3]) / n2;
  return out;
}

inline PohozaevResiduals pohozaev_residuals(const RadialField& v, const ModelParams& p, double omega) {
  if (v.is_zero()) throw ParameterError("pohozaev_residuals: field must be nonzero");
  return pohozaev_residuals(functionals(v, p, omega), p);
}

struct GroundStateResult {
  RadialField phi;
  double omega = 0.0;
  double action_d = 0.0;
  FunctionalReport report;
  PohozaevResiduals pohozaev;
  int iterations = 0;
  double phi0 = 0.0;  ///< central amplitude (shooting parameter)
  bool uniqueness_guaranteed = false;
  /// |Q|/scale, the virial residual
  [[nodiscard]] double virial_residual() const { return std::abs(report.virial_Q) / report_scale(report); }
  [[nodiscard]] double nehari_residual() const { return std::abs(report.nehari_K) / report_scale(report); }
};

inline bool uniqueness_regime(const ModelParams& p) { return p.d >= 3 && p.sigma > 0.0 && p.sigma < 1.0; }

/// Default grid for a ground state at frequency ω: the tail e^{-√ω r} is far
/// below roundoff at r_max.
inline GridPtr ground_state_grid(const ModelParams& p, double omega, int n = 32768) {
  const double r_max = std::clamp(24.0 / std::sqrt(std::max(omega, 1e-6)), 0.5, 200.0);
  return build_grid(p.d, r_max, n);
}

inline double discrete_mu1(const ModelParams& p, const GridPtr& g) {
  if (p.coupling == 0.0) return 0.0;
  return bottom_eigenvalue_bisection(schrodinger_pencil(Discretization(g, p)));
}

inline void require_above_threshold(double omega, double mu1, const char* who) {
  if (!(omega > -mu1))
    throw ParameterError(std::string(who) + ": omega = " + std::to_string(omega) + " must exceed -mu1 = " +
                         std::to_string(-mu1));
}

// ---------------------------------------------------------------------------
// Shooting

enum class ShotOutcome { crossed_zero, blew_up, decayed };

inline const char* to_string(ShotOutcome o) {
  switch (o) {
    case ShotOutcome::crossed_zero: return "crossed zero";
    case ShotOutcome::blew_up: return "blew up";
    case ShotOutcome::decayed: return "decayed";
  }
  return "?";
}

struct ShotResult {
  RadialField field;       ///< solution on the grid nodes up to exit_radius, zero beyond
  ShotOutcome outcome = ShotOutcome::decayed;
  double exit_radius = 0.0;
  int nodes_filled = 0;
};

struct ShootingOptions {
  GridPtr grid;  ///< default: ground_state_grid
  double start_radius = 1e-6;
  double rel_tol = 1e-12;
  double abs_tol = 1e-15;  ///< multiplied by φ(0)
  std::optional<double> mu1;  ///< skip the eigenvalue solve when known
};

namespace detail {

using OdeState = std::array<double, 2>;

struct RadialOde {
  double dm1, c, sigma, omega, alpha;
  void operator()(const OdeState& x, OdeState& dx, double r) const {
    const double phi = x[0];
    dx[0] = x[1];
    dx[1] = -dm1 / r * x[1] - (c * std::pow(r, -sigma) - omega) * phi - std::pow(std::abs(phi), alpha) * phi;
  }
};

/// Local expansion at the origin including the singular r^{2-σ} corrections.
inline OdeState origin_expansion(const ModelParams& p, double omega, double phi0, double r) {
  const double d = p.d, s = p.sigma, c = p.coupling;
  const double k1 = c / ((2 - s) * (d - s));
  const double k2 = (omega - std::pow(phi0, p.alpha)) / (2 * d);
  const double k3 = c * c / ((2 - s) * (d - s) * (4 - 2 * s) * (d + 2 - 2 * s));
  const double val = phi0 * (1 - k1 * std::pow(r, 2 - s) + k2 * r * r + k3 * std::pow(r, 4 - 2 * s));
  const double der = phi0 * (-k1 * (2 - s) * std::pow(r, 1 - s) + 2 * k2 * r + k3 * (4 - 2 * s) * std::pow(r, 3 - 2 * s));
  return {val, der};
}

inline ShotResult shoot(const ModelParams& p, double omega, double phi0, const GridPtr& g, const ShootingOptions& o) {
  namespace ode = boost::numeric::odeint;
  const RadialOde sys{static_cast<double>(p.d - 1), p.coupling, p.sigma, omega, p.alpha};
  auto stepper = ode::make_dense_output(o.abs_tol * phi0, o.rel_tol, ode::runge_kutta_dopri5<OdeState>());
  const double r0 = o.start_radius;
  stepper.initialize(origin_expansion(p, omega, phi0, r0), r0, 1e-3 * r0);

  const int n = g->size();
  const auto rn = g->r();
  std::vector<cplx> vals(n, cplx{});
  int next = 0;
  while (next < n && rn[next] <= r0) {
    vals[next] = origin_expansion(p, omega, phi0, rn[next])[0];
    ++next;
  }
  const double r_end = g->r_max();
  ShotOutcome outcome = ShotOutcome::decayed;
  double exit_r = r_end;
  OdeState x{};
  int steps = 0;
  while (stepper.current_time() < r_end) {
    if (++steps > 2000000) throw NumericalError("shoot_radial_ode: step budget exhausted at r = " +
                                                 std::to_string(stepper.current_time()));
    const auto [t0, t1] = stepper.do_step(sys);
    if (!(t1 > t0) || t1 - t0 < 1e-15 * std::max(1.0, t1))
      throw NumericalError("shoot_radial_ode: step size underflow at r = " + std::to_string(t1));
    const auto& xs = stepper.current_state();
    const bool crossed = xs[0] < 0.0;
    const bool grew = xs[1] > 0.0 || xs[0] > 10.0 * phi0;
    const double stop = std::min(t1, r_end);
    while (next < n && rn[next] <= stop) {
      stepper.calc_state(rn[next], x);
      if (crossed || grew) {
        if (x[0] < 0.0 || x[1] > 0.0 || x[0] > 10.0 * phi0) break;
      }
      vals[next] = x[0];
      ++next;
    }
    if (crossed) {
      outcome = ShotOutcome::crossed_zero;
      exit_r = t1;
      break;
    }
    if (grew) {
      outcome = ShotOutcome::blew_up;
      exit_r = t1;
      break;
    }
  }
  // reached r_max without an event: only a small value counts as decay
  if (outcome == ShotOutcome::decayed && !(stepper.current_state()[0] < 1e-6 * phi0)) outcome = ShotOutcome::blew_up;
  return {RadialField(g, std::move(vals)), outcome, exit_r, next};
}

}  // namespace detail

/// Integrates φ'' + (d-1)/r φ' + (c r^{-σ} - ω)φ + |φ|^α φ = 0 from the origin with φ(0) = phi0.
inline ShotResult shoot_radial_ode(const ModelParams& p, double omega, double phi0, ShootingOptions o = {}) {
  validate(p);
  if (!(phi0 > 0.0) || !std::isfinite(phi0)) throw ParameterError("shoot_radial_ode: phi0 must be positive");
  if (!o.grid) o.grid = ground_state_grid(p, omega);
  const double mu1 = o.mu1 ? *o.mu1 : discrete_mu1(p, o.grid);
  require_above_threshold(omega, mu1, "shoot_radial_ode");
  return detail::shoot(p, omega, phi0, o.grid, o);
}

namespace detail {

/// Decaying tail beyond node `anchor`: backward integration of the Riccati
/// equation for y = φ'/φ of the linearized ODE, which is stable in that direction.
inline void attach_tail(std::vector<double>& phi, int anchor, const RadialGrid& g, const ModelParams& p, double omega) {
  namespace ode = boost::numeric::odeint;
  const int n = g.size();
  if (anchor >= n - 1) return;
  const double dm1 = p.d - 1, c = p.coupling, s = p.sigma;
  // state: (y, L) with L' = y
  auto rhs = [&](const OdeState& x, OdeState& dx, double r) {
    dx[0] = -dm1 / r * x[0] + omega - c * std::pow(r, -s) - x[0] * x[0];
    dx[1] = x[0];
  };
  const double R = g.r_max();
  const double kappa2 = std::max(omega - c * std::pow(R, -s), 1e-12);
  OdeState x{-std::sqrt(kappa2) - dm1 / (2 * R), 0.0};
  std::vector<double> times;
  times.reserve(n - anchor + 1);
  times.push_back(R);
  const auto r = g.r();
  for (int i = n - 1; i >= anchor; --i) times.push_back(r[i]);
  std::vector<double> logs(times.size());
  std::size_t k = 0;
  ode::integrate_times(ode::make_dense_output(1e-14, 1e-12, ode::runge_kutta_dopri5<OdeState>()), rhs, x,
                       times.begin(), times.end(), -g.h(), [&](const OdeState& st, double) { logs[k++] = st[1]; });
  const double l_anchor = logs.back();
  for (int i = anchor + 1; i < n; ++i) {
    const std::size_t idx = 1 + (n - 1 - i);
    phi[i] = phi[anchor] * std::exp(logs[idx] - l_anchor);
  }
}

inline GroundStateResult finish_ground_state(RadialField phi, const ModelParams& p, double omega, int iterations,
                                             double phi0) {
  GroundStateResult gs{std::move(phi), omega};
  gs.report = functionals(gs.phi, p, omega);
  gs.action_d = gs.report.action_S;
  gs.pohozaev = pohozaev_residuals(gs.report, p);
  gs.iterations = iterations;
  gs.phi0 = phi0;
  gs.uniqueness_guaranteed = uniqueness_regime(p);
  return gs;
}

}  // namespace detail

struct GroundStateOptions {
  GridPtr grid;
  double bracket_lo = 1e-4;
  double bracket_hi = 1e4;
  /// only used by the shooting solver: initial scan points per decade
  int scan_per_decade = 1;
  double rel_tol = 1e-12;
};

/// Ground state by bisection on φ(0) between undershoot and overshoot.
inline GroundStateResult find_ground_state_shooting(const ModelParams& p, double omega, GroundStateOptions o = {}) {
  validate(p);
  if (!o.grid) o.grid = ground_state_grid(p, omega);
  ShootingOptions so;
  so.grid = o.grid;
  so.mu1 = discrete_mu1(p, o.grid);
  require_above_threshold(omega, *so.mu1, "find_ground_state_shooting");
  if (!uniqueness_regime(p)) warn("find_ground_state_shooting: uniqueness not guaranteed for these (d, sigma)");

  auto overshoots = [&](double phi0) { return detail::shoot(p, omega, phi0, o.grid, so).outcome != ShotOutcome::blew_up; };

  // coarse log scan for the first overshoot
  double lo = 0.0, hi = 0.0;
  const int per = std::max(1, o.scan_per_decade);
  const double l0 = std::log10(o.bracket_lo), l1 = std::log10(o.bracket_hi);
  const int steps = static_cast<int>(std::lround((l1 - l0) * per));
  double prev = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double phi0 = std::pow(10.0, l0 + static_cast<double>(k) / per);
    if (overshoots(phi0)) {
      if (k == 0) throw BracketError("find_ground_state_shooting: already overshooting at phi0 = " + fmt17(phi0));
      lo = prev;
      hi = phi0;
      break;
    }
    prev = phi0;
  }
  if (hi == 0.0)
    throw BracketError("find_ground_state_shooting: no overshoot found for phi0 in [" + fmt17(o.bracket_lo) + ", " +
                       fmt17(o.bracket_hi) + "]");

  int iters = 0;
  while (true) {
    const double mid = std::sqrt(lo * hi);
    if (!(mid > lo && mid < hi)) break;
    ++iters;
    if (overshoots(mid))
      hi = mid;
    else
      lo = mid;
    if (iters > 400) break;
  }

  const auto a = detail::shoot(p, omega, lo, o.grid, so);
  const auto b = detail::shoot(p, omega, hi, o.grid, so);
  const int n = o.grid->size();
  const int filled = std::min(a.nodes_filled, b.nodes_filled);
  std::vector<double> phi(n, 0.0);
  int cut = filled;
  for (int i = 0; i < filled; ++i) {
    const double u = a.field[i].real(), v = b.field[i].real();
    const double m = 0.5 * (u + v);
    if (std::abs(u - v) > 1e-6 * std::abs(m) || m <= 0.0 || (i > 0 && m > phi[i - 1])) {
      cut = i;
      break;
    }
    phi[i] = m;
  }
  if (cut < 2) throw NumericalError("find_ground_state_shooting: bracketing trajectories separate at the origin");
  detail::attach_tail(phi, cut - 1, *o.grid, p, omega);
  auto gs = detail::finish_ground_state(RadialField::from_real(o.grid, phi), p, omega, iters, std::sqrt(lo * hi));
  return gs;
}

// ---------------------------------------------------------------------------
// Nehari projection

/// λ₀ = (H_ω(v)/‖v‖^{α+2}_{α+2})^{1/α}, the factor putting λ₀v on the Nehari manifold.
inline double nehari_scale(const RadialField& v, const ModelParams& p, double omega) {
  if (v.is_zero()) throw ParameterError("nehari_project: field must be nonzero");
  const auto r = functionals(v, p, omega);
  if (!(r.quadratic_H > 0.0))
    throw ParameterError("nehari_project: H_omega(v) <= 0, omega is below the spectral threshold");
  return std::pow(r.quadratic_H / r.power_Lp, 1.0 / p.alpha);
}

inline RadialField nehari_project(const RadialField& v, const ModelParams& p, double omega) {
  return v.scaled(nehari_scale(v, p, omega));
}

// ---------------------------------------------------------------------------
// Action minimization on the Nehari manifold

struct ActionOptions {
  GridPtr grid;
  double tol = 1e-11;  ///< relative preconditioned gradient norm
  int max_iterations = 20000;
  std::optional<RadialField> seed;
};

inline GroundStateResult minimize_action(const ModelParams& p, double omega, ActionOptions o = {}) {
  validate(p);
  if (!o.grid) o.grid = o.seed ? o.seed->grid_ptr() : ground_state_grid(p, omega);
  const auto& g = *o.grid;
  const int n = g.size();
  const Discretization D(o.grid, p);
  const double mu1 = discrete_mu1(p, o.grid);
  require_above_threshold(omega, mu1, "minimize_action");

  // A = S - diag(pw) + ωW, SPD for ω > -μ₁
  const Pencil P = schrodinger_pencil(D);
  std::vector<double> adiag(n);
  const auto w = g.weights();
  for (int i = 0; i < n; ++i) adiag[i] = P.diag[i] + omega * w[i];
  auto a_inner = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      double t = adiag[i] * y[i];
      if (i > 0) t += P.off[i - 1] * y[i - 1];
      if (i + 1 < n) t += P.off[i] * y[i + 1];
      s += x[i] * t;
    }
    return s;
  };
  auto power = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += w[i] * std::pow(std::abs(x[i]), p.alpha + 2);
    return s;
  };
  auto project = [&](std::vector<double>& x) {
    const double lam = std::pow(a_inner(x, x) / power(x), 1.0 / p.alpha);
    for (auto& xi : x) xi *= lam;
  };
  const double sfac = p.alpha / (2 * (p.alpha + 2));  // S = sfac·P on the Nehari manifold

  std::vector<double> v(n);
  if (o.seed) {
    if (!o.seed->grid().same_as(g)) throw ParameterError("minimize_action: seed lives on a different grid");
    for (int i = 0; i < n; ++i) v[i] = std::abs((*o.seed)[i]);
  } else {
    const auto r = g.r();
    for (int i = 0; i < n; ++i) v[i] = std::exp(-r[i] * r[i] / 2);
  }
  project(v);
  double action = sfac * power(v);

  std::vector<double> tv(n), trial(n), scratch;
  double tau = 1.0, res = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < o.max_iterations; ++it) {
    for (int i = 0; i < n; ++i) tv[i] = w[i] * std::pow(std::abs(v[i]), p.alpha) * v[i];
    solve_tridiagonal<double, double>(adiag, P.off, tv, scratch);
    for (int i = 0; i < n; ++i) tv[i] = v[i] - tv[i];  // preconditioned gradient
    res = std::sqrt(a_inner(tv, tv) / a_inner(v, v));
    if (res < o.tol) break;
    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      for (int i = 0; i < n; ++i) trial[i] = v[i] - tau * tv[i];
      if (power(trial) <= 0.0) {
        tau *= 0.5;
        continue;
      }
      project(trial);
      const double s_new = sfac * power(trial);
      if (s_new <= action * (1 + 1e-10)) {
        v.swap(trial);
        action = s_new;
        accepted = true;
        break;
      }
      tau *= 0.5;
    }
    if (!accepted) throw ConvergenceError("minimize_action: line search failed at iteration " + std::to_string(it) + " res " + fmt17(res), res);
    tau = std::min(1.0, 2 * tau);
  }
  if (it >= o.max_iterations) throw ConvergenceError("minimize_action: descent stagnated", res);
  for (auto& x : v) x = std::abs(x);
  return detail::finish_ground_state(RadialField::from_real(o.grid, v), p, omega, it, v[0]);
}

// ---------------------------------------------------------------------------
// Free soliton (c = 0, α = 4/d, ω = 1)

struct FreeSoliton {
  RadialField Q;
  double a_star = 0.0;
  GroundStateResult gs;
};

inline FreeSoliton solve_free_soliton(int d, GridPtr grid = nullptr) {
  if (d < 1) throw ParameterError("solve_free_soliton: d must be >= 1");
  const ModelParams p{d, std::min(0.5, 0.5 * d), 4.0 / d, 0.0};
  if (!grid) grid = build_grid(d, 30.0, 32768);
  GroundStateOptions o;
  o.grid = grid;
  auto gs = find_ground_state_shooting(p, 1.0, o);
  const double a_star = gs.report.mass;
  RadialField Q = gs.phi;
  return {std::move(Q), a_star, std::move(gs)};
}

// ---------------------------------------------------------------------------
// Mass-constrained energy minimization

struct ConstrainedMinResult {
  RadialField v;
  double a = 0.0;
  double I_a = 0.0;
  double lagrange_omega = 0.0;
  FunctionalReport report;
  int flow_steps = 0;
  double el_residual = 0.0;  ///< ‖-Δv - Vv - |v|^α v + ωv‖/(|ω|‖v‖)
  std::vector<double> energy_history;  ///< E after the seed and after every accepted flow step
};

struct ConstrainedOptions {
  GridPtr grid;  ///< default: r_max = 40, n = 16384
  std::optional<RadialField> seed;
  double seed_width = 1.0;
  double energy_tol = 1e-12;
  double residual_tol = 1e-6;
  int max_steps = 200000;
  std::optional<double> a_star;  ///< required critical mass when α = 4/d; computed if absent
  bool newton_polish = true;
  std::optional<double> stop_below;  ///< flow stops as soon as E drops below this
};

namespace detail {

/// Least-squares multiplier over nodes with |v| > 1e-8 and the relative EL residual.
inline std::pair<double, double> lagrange_fit(const Discretization& D, const std::vector<double>& v, double alpha) {
  const int n = D.size();
  std::vector<double> lap(n);
  D.laplacian(std::span<const double>(v), std::span<double>(lap));
  const auto pot = D.potential();
  const auto w = D.grid().weights();
  std::vector<double> el(n);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    el[i] = lap[i] - pot[i] * v[i] - std::pow(std::abs(v[i]), alpha) * v[i];
    if (std::abs(v[i]) > 1e-8) {
      num += w[i] * el[i] * v[i];
      den += w[i] * v[i] * v[i];
    }
  }
  const double omega = -num / den;
  double res = 0.0, nv = 0.0;
  for (int i = 0; i < n; ++i) {
    res += w[i] * std::pow(el[i] + omega * v[i], 2);
    nv += w[i] * v[i] * v[i];
  }
  return {omega, std::sqrt(res / nv) / std::abs(omega)};
}

/// Newton steps on the bordered system (A_ω - (α+1)W|v|^α) δv + δω Wv = -F, (Wv)ᵀδv = -c.
/// Steps are kept only while the residual drops and the energy does not rise
/// beyond roundoff. Returns the number of accepted steps.
template <class EnergyFn>
int newton_polish(const Discretization& D, const Pencil& P, std::vector<double>& v, double a, double alpha,
                  double& E, EnergyFn&& energy) {
  const int n = D.size();
  const auto w = D.grid().weights();
  auto residual = [&](const std::vector<double>& x, double om, std::vector<double>& F) {
    double rn = 0.0, m = 0.0;
    for (int i = 0; i < n; ++i) {
      double t = (P.diag[i] + om * w[i]) * x[i];
      if (i > 0) t += P.off[i - 1] * x[i - 1];
      if (i + 1 < n) t += P.off[i] * x[i + 1];
      F[i] = t - w[i] * std::pow(std::abs(x[i]), alpha) * x[i];
      rn += F[i] * F[i] / w[i];
      m += w[i] * x[i] * x[i];
    }
    return std::sqrt(rn / m) / std::abs(om);
  };
  auto [om, unused] = lagrange_fit(D, v, alpha);
  (void)unused;
  std::vector<double> F(n), jd(n), x1(n), x2(n), cand(n), scratch;
  double res = residual(v, om, F);
  int accepted = 0;
  for (int it = 0; it < 30 && res > 1e-13; ++it) {
    for (int i = 0; i < n; ++i) {
      jd[i] = P.diag[i] + om * w[i] - (alpha + 1) * w[i] * std::pow(std::abs(v[i]), alpha);
      x1[i] = -F[i];
      x2[i] = w[i] * v[i];
    }
    double c = -a;
    for (int i = 0; i < n; ++i) c += w[i] * v[i] * v[i];
    c *= 0.5;
    try {
      solve_tridiagonal<double, double>(jd, P.off, x1, scratch);
      solve_tridiagonal<double, double>(jd, P.off, x2, scratch);
    } catch (const NumericalError&) {
      break;
    }
    double p1 = 0.0, p2 = 0.0;
    for (int i = 0; i < n; ++i) {
      p1 += w[i] * v[i] * x1[i];
      p2 += w[i] * v[i] * x2[i];
    }
    const double dom = (p1 + c) / p2;
    for (int i = 0; i < n; ++i) cand[i] = v[i] + x1[i] - dom * x2[i];
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += w[i] * cand[i] * cand[i];
    if (!std::isfinite(m)) break;
    for (auto& ci : cand) ci *= std::sqrt(a / m);
    const double om_new = om + dom;
    std::vector<double> Fc(n);
    const double res_new = residual(cand, om_new, Fc);
    const double e_new = energy(cand);
    if (!(res_new < res) || e_new > E + 1e-12 * std::abs(E)) break;
    v.swap(cand);
    F.swap(Fc);
    om = om_new;
    res = res_new;
    E = e_new;
    ++accepted;
  }
  return accepted;
}

}  // namespace detail

namespace detail {

struct FlowState {
  std::vector<double> v;
  double energy = 0.0;
  std::vector<double> history;
  int steps = 0;
  double residual = 0.0;
};

/// Preconditioned Riemannian Polak-Ribière flow for E on {‖v‖² = a}, no existence checks.
/// Stops on the energy/residual tolerances, at max_steps, or when no descent is left.
inline FlowState constrained_flow(const ModelParams& p, double a, const ConstrainedOptions& o, const Discretization& D,
                                  const Pencil& P, double mu1) {
  const auto& g = D.grid();
  const int n = g.size();
  const auto w = g.weights();

  std::vector<double> v(n);
  if (o.seed) {
    if (!o.seed->grid().same_as(g)) throw ParameterError("constrained flow: seed on a different grid");
    for (int i = 0; i < n; ++i) v[i] = std::abs((*o.seed)[i]);
  } else {
    const auto r = g.r();
    for (int i = 0; i < n; ++i) v[i] = std::exp(-0.5 * std::pow(r[i] / o.seed_width, 2));
  }
  auto mass_of = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += w[i] * x[i] * x[i];
    return s;
  };
  auto normalize = [&](std::vector<double>& x) {
    const double c = std::sqrt(a / mass_of(x));
    for (auto& xi : x) xi *= c;
  };
  auto energy = [&](const std::vector<double>& x) {
    return 0.5 * D.kinetic(std::span<const double>(x)) - 0.5 * D.potential_energy(std::span<const double>(x)) -
           D.power(std::span<const double>(x), p.alpha) / (p.alpha + 2);
  };
  // dual gradient: S x - pw x - W|x|^α x
  auto gradient = [&](const std::vector<double>& x, std::vector<double>& gE) {
    for (int i = 0; i < n; ++i) {
      double t = P.diag[i] * x[i];
      if (i > 0) t += P.off[i - 1] * x[i - 1];
      if (i + 1 < n) t += P.off[i] * x[i + 1];
      gE[i] = t - w[i] * std::pow(std::abs(x[i]), p.alpha) * x[i];
    }
  };
  auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
  };
  auto tangent = [&](std::vector<double>& x, const std::vector<double>& base) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += w[i] * base[i] * x[i];
    s /= a;
    for (int i = 0; i < n; ++i) x[i] -= s * base[i];
  };

  normalize(v);
  double E = energy(v);
  std::vector<double> history{E};
  std::vector<double> gE(n), r(n), z(n), z_prev(n), dir(n, 0.0), trial(n), bdiag(n), scratch;
  double rz_prev = 0.0, t_guess = 1.0, res = std::numeric_limits<double>::infinity(), omega = 0.0;
  int step = 0;
  bool have_dir = false;
  for (; step < o.max_steps; ++step) {
    gradient(v, gE);
    omega = -dot(gE, v) / a;
    double rn = 0.0;
    for (int i = 0; i < n; ++i) {
      r[i] = gE[i] + omega * w[i] * v[i];
      rn += r[i] * r[i] / w[i];
    }
    res = std::sqrt(rn / a) / std::max(std::abs(omega), 1e-300);

    // preconditioner S - pw + sW
    const double shift = std::max(omega, -mu1 + 0.05 * std::max(std::abs(mu1), 1e-3));
    for (int i = 0; i < n; ++i) bdiag[i] = P.diag[i] + shift * w[i];
    z = r;
    solve_tridiagonal<double, double>(bdiag, P.off, z, scratch);
    tangent(z, v);
    const double rz = dot(r, z);

    double beta_cg = 0.0;
    if (have_dir && rz_prev > 0.0) {
      double num = 0.0;
      for (int i = 0; i < n; ++i) num += r[i] * (z[i] - z_prev[i]);
      beta_cg = std::max(0.0, num / rz_prev);
    }
    for (int i = 0; i < n; ++i) dir[i] = -z[i] + beta_cg * dir[i];
    tangent(dir, v);
    double slope = dot(gE, dir);
    if (!(slope < 0.0)) {
      for (int i = 0; i < n; ++i) dir[i] = -z[i];
      slope = dot(gE, dir);
    }
    z_prev = z;
    rz_prev = rz;
    have_dir = true;
    if (!(slope < 0.0)) break;  // no descent direction left at roundoff

    auto eval = [&](double t) {
      for (int i = 0; i < n; ++i) trial[i] = v[i] + t * dir[i];
      normalize(trial);
      return energy(trial);
    };
    double t1 = t_guess;
    double e1 = eval(t1);
    double best_t = 0.0, best_e = E;
    if (e1 < best_e) best_t = t1, best_e = e1;
    const double curv = (e1 - E - slope * t1) / (t1 * t1);
    if (curv > 0.0) {
      const double ts = -slope / (2 * curv);
      const double es = eval(ts);
      if (es < best_e) best_t = ts, best_e = es;
    }
    for (int back = 0; back < 60 && best_t == 0.0; ++back) {
      t1 *= 0.25;
      e1 = eval(t1);
      if (e1 < E) best_t = t1, best_e = e1;
    }
    if (best_t == 0.0) {
      if (res < o.residual_tol) break;
      have_dir = false;
      if (beta_cg == 0.0) break;
      continue;
    }
    eval(best_t);
    const double dE = E - best_e;
    v.swap(trial);
    E = best_e;
    history.push_back(E);
    t_guess = best_t;
    if (o.stop_below && E < *o.stop_below) break;
    if (dE <= o.energy_tol * std::abs(E) && res < o.residual_tol) break;
  }
  for (auto& x : v) x = std::abs(x);
  normalize(v);
  E = energy(v);
  return {std::move(v), E, std::move(history), step, res};
}

}  // namespace detail

inline ConstrainedMinResult minimize_energy_constrained(const ModelParams& p, double a, ConstrainedOptions o = {}) {
  validate(p);
  if (!(a > 0.0)) throw ParameterError("minimize_energy_constrained: mass a must be positive");
  if (p.is_mass_supercritical())
    throw NonexistenceError("minimize_energy_constrained: alpha > 4/d, the energy is unbounded below on the mass sphere");
  if (p.is_mass_critical()) {
    const double a_star = o.a_star ? *o.a_star : solve_free_soliton(p.d).a_star;
    if (a >= a_star)
      throw NonexistenceError("minimize_energy_constrained: a = " + fmt17(a) + " >= a* = " + fmt17(a_star) +
                              ", no minimizer exists");
  }
  if (!o.grid) o.grid = o.seed ? o.seed->grid_ptr() : build_grid(p.d, 40.0, 16384);
  const Discretization D(o.grid, p);
  const Pencil P = schrodinger_pencil(D);
  auto flow = detail::constrained_flow(p, a, o, D, P, discrete_mu1(p, o.grid));
  auto& v = flow.v;
  double E = flow.energy;
  auto energy = [&](const std::vector<double>& x) {
    return 0.5 * D.kinetic(std::span<const double>(x)) - 0.5 * D.potential_energy(std::span<const double>(x)) -
           D.power(std::span<const double>(x), p.alpha) / (p.alpha + 2);
  };
  int step = flow.steps;
  if (o.newton_polish) step += detail::newton_polish(D, P, v, a, p.alpha, E, energy);
  auto [om, el] = detail::lagrange_fit(D, v, p.alpha);
  if (el >= o.residual_tol)
    throw ConvergenceError("minimize_energy_constrained: Euler-Lagrange residual above tolerance", el);

  ConstrainedMinResult out{RadialField::from_real(o.grid, v), a};
  out.report = functionals(out.v, p, om);
  out.I_a = out.report.energy_E;
  out.lagrange_omega = om;
  out.flow_steps = step;
  out.el_residual = el;
  out.energy_history = std::move(flow.history);
  return out;
}

}  // namespace nlsip
