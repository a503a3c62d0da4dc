#pragma once

// Radial grids, fields and the discrete functionals of the focusing NLS with
// an attractive inverse-power potential
//
//     i u_t + Δu + c|x|^{-σ} u = -|u|^α u,   x ∈ R^d.
//
// Everything is radial. A grid is a set of n cells [ih, (i+1)h] with nodes at
// the cell centres; integrals use exact shell volumes, the Laplacian is the
// matching finite-volume flux form, and the potential is integrated exactly
// over each cell. Values outside the grid are zero.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nlsip/error.hpp"

namespace nlsip {

using cplx = std::complex<double>;

/// |S^{d-1}|, the area of the unit sphere in R^d (2 for d = 1).
inline double unit_sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

// ---------------------------------------------------------------------------
// Model parameters

struct ModelParams {
  int d = 3;
  double sigma = 1.0;
  double alpha = 1.0;
  double coupling = 1.0;

  /// β = dα/2, the scaling exponent of the L^{α+2} term.
  [[nodiscard]] double beta() const noexcept { return 0.5 * d * alpha; }
  [[nodiscard]] double mass_critical_alpha() const noexcept { return 4.0 / d; }
  [[nodiscard]] bool is_mass_critical(double tol = 1e-12) const noexcept {
    return std::abs(alpha - mass_critical_alpha()) <= tol;
  }
  [[nodiscard]] bool is_mass_subcritical(double tol = 1e-12) const noexcept {
    return alpha < mass_critical_alpha() - tol;
  }
  [[nodiscard]] bool is_mass_supercritical(double tol = 1e-12) const noexcept {
    return alpha > mass_critical_alpha() + tol;
  }
};

inline void validate(const ModelParams& p) {
  if (p.d < 1) throw ParameterError("d must be >= 1, got " + std::to_string(p.d));
  const double smax = std::min(2.0, static_cast<double>(p.d));
  if (!(p.sigma > 0.0 && p.sigma < smax))
    throw ParameterError("sigma must satisfy 0 < sigma < min(2, d), got " + std::to_string(p.sigma));
  if (!(p.alpha > 0.0) || !std::isfinite(p.alpha))
    throw ParameterError("alpha must be positive, got " + std::to_string(p.alpha));
  if (p.d >= 3 && !(p.alpha < 4.0 / (p.d - 2)))
    throw ParameterError("alpha must be energy-subcritical (alpha < 4/(d-2)), got " +
                         std::to_string(p.alpha));
  if (!(p.coupling >= 0.0) || !std::isfinite(p.coupling))
    throw ParameterError("coupling must be >= 0, got " + std::to_string(p.coupling));
}

// ---------------------------------------------------------------------------
// Grid

class RadialGrid {
 public:
  RadialGrid(int d, double r_max, int n) : d_(d), n_(n), r_max_(r_max) {
    if (d < 1) throw ParameterError("grid dimension d must be >= 1");
    if (n < 16) throw ParameterError("grid node count n must be >= 16, got " + std::to_string(n));
    if (!(r_max > 0.0) || !std::isfinite(r_max))
      throw ParameterError("grid r_max must be positive, got " + std::to_string(r_max));
    h_ = r_max / n;
    surface_ = unit_sphere_area(d);
    r_.resize(n);
    w_.resize(n);
    flux_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double lo = i * h_;
      const double hi = (i + 1) * h_;
      r_[i] = (i + 0.5) * h_;
      w_[i] = cell_moment(lo, hi, d - 1);
      flux_[i] = surface_ * std::pow(hi, d - 1) / h_;
    }
  }

  [[nodiscard]] int dim() const noexcept { return d_; }
  [[nodiscard]] int size() const noexcept { return n_; }
  [[nodiscard]] double r_max() const noexcept { return r_max_; }
  [[nodiscard]] double h() const noexcept { return h_; }
  [[nodiscard]] double surface() const noexcept { return surface_; }
  [[nodiscard]] std::span<const double> r() const noexcept { return r_; }
  [[nodiscard]] std::span<const double> weights() const noexcept { return w_; }
  /// |S^{d-1}| r_{i+1/2}^{d-1} / h: coupling between nodes i and i+1 (i = n-1 couples to the zero exterior).
  [[nodiscard]] std::span<const double> flux() const noexcept { return flux_; }

  /// |S^{d-1}| ∫_lo^hi r^{p} dr, the exact cell integral of |x|^{p-d+1}.
  [[nodiscard]] double cell_moment(double lo, double hi, double p) const {
    const double q = p + 1.0;
    if (std::abs(q) < 1e-14) return surface_ * std::log(hi / lo);
    return surface_ * (std::pow(hi, q) - std::pow(lo, q)) / q;
  }

  /// Cell integrals of |x|^{-s} over every cell.
  [[nodiscard]] std::vector<double> power_weights(double s) const {
    if (!(s < d_)) throw ParameterError("|x|^{-s} is not locally integrable for s >= d");
    std::vector<double> out(n_);
    for (int i = 0; i < n_; ++i) out[i] = cell_moment(i * h_, (i + 1) * h_, d_ - 1 - s);
    return out;
  }

  [[nodiscard]] bool same_as(const RadialGrid& o) const noexcept {
    return d_ == o.d_ && n_ == o.n_ && r_max_ == o.r_max_;
  }

 private:
  int d_;
  int n_;
  double r_max_;
  double h_ = 0.0;
  double surface_ = 0.0;
  std::vector<double> r_, w_, flux_;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

inline GridPtr build_grid(int d, double r_max, int n) {
  return std::make_shared<const RadialGrid>(d, r_max, n);
}

/// Σ w_i f(r_i): integral of a radial function over the ball of radius r_max.
template <class F>
double integrate(const RadialGrid& g, F&& f) {
  double s = 0.0;
  const auto r = g.r();
  const auto w = g.weights();
  for (int i = 0; i < g.size(); ++i) s += w[i] * f(r[i]);
  return s;
}

template <class T>
double grid_mass(const RadialGrid& g, std::span<const T> u) {
  const auto w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += w[i] * std::norm(u[i]);
  return s;
}

template <class T>
double grid_kinetic(const RadialGrid& g, std::span<const T> u) {
  const auto f = g.flux();
  const std::size_t n = u.size();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) s += f[i] * std::norm(u[i + 1] - u[i]);
  s += f[n - 1] * std::norm(u[n - 1]);
  return s;
}

// ---------------------------------------------------------------------------
// Field

class RadialField {
 public:
  explicit RadialField(GridPtr grid) : grid_(std::move(grid)), values_(grid_->size(), cplx{}) {}

  RadialField(GridPtr grid, std::vector<cplx> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != grid_->size())
      throw ParameterError("field size does not match grid size");
    require_finite();
  }

  static RadialField from_real(GridPtr grid, std::span<const double> values) {
    std::vector<cplx> v(values.begin(), values.end());
    return RadialField(std::move(grid), std::move(v));
  }

  template <class F>
  static RadialField from_function(GridPtr grid, F&& f) {
    std::vector<cplx> v(grid->size());
    const auto r = grid->r();
    for (int i = 0; i < grid->size(); ++i) v[i] = cplx(f(r[i]));
    return RadialField(std::move(grid), std::move(v));
  }

  [[nodiscard]] const RadialGrid& grid() const noexcept { return *grid_; }
  [[nodiscard]] const GridPtr& grid_ptr() const noexcept { return grid_; }
  [[nodiscard]] std::span<const cplx> values() const noexcept { return values_; }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(values_.size()); }
  [[nodiscard]] cplx operator[](int i) const noexcept { return values_[i]; }

  [[nodiscard]] std::vector<double> real_part() const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i].real();
    return out;
  }
  [[nodiscard]] std::vector<double> modulus() const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = std::abs(values_[i]);
    return out;
  }
  [[nodiscard]] bool is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](cplx z) { return z == cplx{}; });
  }
  [[nodiscard]] bool is_real(double tol = 0.0) const noexcept {
    return std::all_of(values_.begin(), values_.end(), [tol](cplx z) { return std::abs(z.imag()) <= tol; });
  }

  [[nodiscard]] RadialField scaled(cplx s) const {
    std::vector<cplx> v(values_);
    for (auto& z : v) z *= s;
    return RadialField(grid_, std::move(v));
  }

  friend RadialField operator+(const RadialField& a, const RadialField& b) { return combine(a, b, 1.0); }
  friend RadialField operator-(const RadialField& a, const RadialField& b) { return combine(a, b, -1.0); }
  friend RadialField operator*(cplx s, const RadialField& a) { return a.scaled(s); }

 private:
  static RadialField combine(const RadialField& a, const RadialField& b, double sb) {
    if (!a.grid_->same_as(*b.grid_)) throw ParameterError("fields live on different grids");
    std::vector<cplx> v(a.values_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += sb * b.values_[i];
    return RadialField(a.grid_, std::move(v));
  }

  void require_finite() const {
    for (const auto& z : values_)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw NumericalError("radial field contains non-finite values");
  }

  GridPtr grid_;
  std::vector<cplx> values_;
};

// ---------------------------------------------------------------------------
// Discrete operators

/// Discrete -Δ, the potential c|x|^{-σ}, and the integrals built on them.
///
/// With stiffness S (symmetric tridiagonal) and weights W = diag(w):
///   kinetic(u) = <u, S u>,   (-Δ_h u) = W^{-1} S u,   G(u) = Σ pw_i |u_i|^2.
class Discretization {
 public:
  Discretization(GridPtr grid, double sigma, double coupling)
      : grid_(std::move(grid)), sigma_(sigma), coupling_(coupling) {
    pot_weight_ = grid_->power_weights(sigma);
    pot_.resize(pot_weight_.size());
    const auto w = grid_->weights();
    for (std::size_t i = 0; i < pot_.size(); ++i) {
      pot_weight_[i] *= coupling;
      pot_[i] = pot_weight_[i] / w[i];
    }
    var_weight_.resize(pot_.size());
    const double h = grid_->h();
    for (int i = 0; i < grid_->size(); ++i)
      var_weight_[i] = grid_->cell_moment(i * h, (i + 1) * h, grid_->dim() + 1);
  }
  Discretization(GridPtr grid, const ModelParams& p) : Discretization(std::move(grid), p.sigma, p.coupling) {
    if (grid_->dim() != p.d) throw ParameterError("grid dimension does not match model d");
  }

  [[nodiscard]] const RadialGrid& grid() const noexcept { return *grid_; }
  [[nodiscard]] const GridPtr& grid_ptr() const noexcept { return grid_; }
  [[nodiscard]] int size() const noexcept { return grid_->size(); }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }
  [[nodiscard]] double coupling() const noexcept { return coupling_; }
  /// Cell-averaged coupling·|x|^{-σ}.
  [[nodiscard]] std::span<const double> potential() const noexcept { return pot_; }
  [[nodiscard]] std::span<const double> potential_weights() const noexcept { return pot_weight_; }

  template <class T>
  [[nodiscard]] double mass(std::span<const T> u) const { return grid_mass(*grid_, u); }

  template <class T>
  [[nodiscard]] double kinetic(std::span<const T> u) const { return grid_kinetic(*grid_, u); }

  template <class T>
  [[nodiscard]] double potential_energy(std::span<const T> u) const {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += pot_weight_[i] * std::norm(u[i]);
    return s;
  }

  template <class T>
  [[nodiscard]] double power(std::span<const T> u, double alpha) const {
    const auto w = grid_->weights();
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += w[i] * std::pow(std::abs(u[i]), alpha + 2.0);
    return s;
  }

  template <class T>
  [[nodiscard]] double variance(std::span<const T> u) const {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += var_weight_[i] * std::norm(u[i]);
    return s;
  }

  /// out = -Δ_h u.
  template <class T>
  void laplacian(std::span<const T> u, std::span<T> out) const {
    const auto f = grid_->flux();
    const auto w = grid_->weights();
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
      T acc = f[i] * (u[i] - (i + 1 < n ? u[i + 1] : T{}));
      if (i > 0) acc += f[i - 1] * (u[i] - u[i - 1]);
      out[i] = acc / w[i];
    }
  }

  template <class T>
  [[nodiscard]] double inner(std::span<const T> a, std::span<const T> b) const {
    const auto w = grid_->weights();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * std::real(std::conj(a[i]) * b[i]);
    return s;
  }

 private:
  GridPtr grid_;
  double sigma_;
  double coupling_;
  std::vector<double> pot_weight_;
  std::vector<double> pot_;
  std::vector<double> var_weight_;
};

// ---------------------------------------------------------------------------
// Tridiagonal solves

/// Solves the tridiagonal system with diagonal `diag`, sub/super diagonal `off`
/// (off[i] couples i and i+1) and right-hand side `rhs`, in place. No pivoting.
template <class T, class D>
void solve_tridiagonal(std::span<const D> diag, std::span<const D> off, std::span<T> rhs,
                       std::vector<D>& scratch) {
  const std::size_t n = diag.size();
  scratch.resize(n);
  D denom = diag[0];
  if (denom == D{}) throw NumericalError("singular tridiagonal system");
  scratch[0] = (n > 1 ? off[0] : D{}) / denom;
  rhs[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - off[i - 1] * scratch[i - 1];
    if (denom == D{}) throw NumericalError("singular tridiagonal system");
    scratch[i] = (i + 1 < n ? off[i] : D{}) / denom;
    rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch[i] * rhs[i + 1];
}

// ---------------------------------------------------------------------------
// Functionals

struct FunctionalReport {
  double mass = 0.0;         ///< ‖v‖²_{L²}
  double kinetic = 0.0;      ///< ‖∇v‖²_{L²}
  double potential_G = 0.0;  ///< c∫|x|^{-σ}|v|²
  double power_Lp = 0.0;     ///< ‖v‖^{α+2}_{L^{α+2}}
  double energy_E = 0.0;
  double action_S = 0.0;
  double nehari_K = 0.0;
  double virial_Q = 0.0;
  double quadratic_H = 0.0;
  double omega = 0.0;
};

inline FunctionalReport assemble_report(double mass, double kinetic, double G, double P, const ModelParams& p,
                                        double omega) {
  FunctionalReport r;
  r.mass = mass;
  r.kinetic = kinetic;
  r.potential_G = G;
  r.power_Lp = P;
  r.omega = omega;
  r.energy_E = 0.5 * kinetic - 0.5 * G - P / (p.alpha + 2.0);
  r.action_S = r.energy_E + 0.5 * omega * mass;
  r.nehari_K = kinetic - G + omega * mass - P;
  r.virial_Q = kinetic - 0.5 * p.sigma * G - p.beta() / (p.alpha + 2.0) * P;
  r.quadratic_H = kinetic - G + omega * mass;
  return r;
}

template <class T>
FunctionalReport functionals(const Discretization& D, std::span<const T> u, const ModelParams& p, double omega) {
  return assemble_report(D.mass(u), D.kinetic(u), D.potential_energy(u), D.power(u, p.alpha), p, omega);
}

inline FunctionalReport functionals(const RadialField& v, const ModelParams& p, double omega) {
  if (v.grid().dim() != p.d) throw ParameterError("field grid dimension does not match model d");
  const Discretization D(v.grid_ptr(), p);
  return functionals(D, v.values(), p, omega);
}

/// Scale of a report used to turn absolute residuals into relative ones.
inline double report_scale(const FunctionalReport& r) {
  return std::max({std::abs(r.kinetic), std::abs(r.potential_G), std::abs(r.omega * r.mass), std::abs(r.power_Lp),
                   std::numeric_limits<double>::min()});
}

inline double mass(const RadialField& v) { return grid_mass(v.grid(), v.values()); }
inline double kinetic(const RadialField& v) { return grid_kinetic(v.grid(), v.values()); }

// ---------------------------------------------------------------------------
// Sampling, rescaling, distances

/// Value of the field at radius x by 4-point Lagrange interpolation on the
/// node values, with the even extension across r = 0 and zero beyond r_max.
inline cplx sample(const RadialField& v, double x) {
  const auto& g = v.grid();
  const int n = g.size();
  const auto vals = v.values();
  auto node = [&](long k) -> cplx {
    if (k < 0) k = -1 - k;
    return k < n ? vals[k] : cplx{};
  };
  x = std::abs(x);
  const double t = x / g.h() - 0.5;
  if (t >= n + 1.0) return cplx{};
  const long j = static_cast<long>(std::floor(t));
  const double s = t - j;
  if (s == 0.0) return node(j);
  const double c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
  const double c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
  const double c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
  const double c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
  return c0 * node(j - 1) + c1 * node(j) + c2 * node(j + 1) + c3 * node(j + 2);
}

/// amplitude · v(scale · r) on the nodes of `target`.
inline RadialField resample(const RadialField& v, GridPtr target, double scale, double amplitude = 1.0) {
  if (target->dim() != v.grid().dim()) throw ParameterError("resample target has a different dimension");
  std::vector<cplx> out(target->size());
  const auto r = target->r();
  for (int i = 0; i < target->size(); ++i) out[i] = amplitude * sample(v, scale * r[i]);
  return RadialField(std::move(target), std::move(out));
}

/// Fraction of the mass of v lying beyond radius `radius`.
inline double mass_fraction_beyond(const RadialField& v, double radius) {
  const auto& g = v.grid();
  const auto r = g.r();
  const auto w = g.weights();
  double total = 0.0, outside = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double m = w[i] * std::norm(v[i]);
    total += m;
    if (r[i] > radius) outside += m;
  }
  return total > 0.0 ? outside / total : 0.0;
}

/// Mass-preserving dilation v^λ(x) = λ^{d/2} v(λx), resampled on the same grid.
inline RadialField rescale(const RadialField& v, double lam) {
  if (!(lam > 0.0) || !std::isfinite(lam)) throw ParameterError("rescale factor must be positive");
  if (lam == 1.0) return v;
  if (lam < 1.0) {
    const double lost = mass_fraction_beyond(v, lam * v.grid().r_max());
    if (lost > 1e-8) warn("rescale: " + std::to_string(lost) + " of the mass leaves the grid");
  }
  return resample(v, v.grid_ptr(), lam, std::pow(lam, 0.5 * v.grid().dim()));
}

inline double h1_distance(const RadialField& u, const RadialField& v) {
  const RadialField diff = u - v;
  return std::sqrt(mass(diff) + kinetic(diff));
}

inline double h1_norm(const RadialField& u) { return std::sqrt(mass(u) + kinetic(u)); }

enum class DecreasingVerdict { holds, violated, not_monotone };

struct DecreasingBoundResult {
  DecreasingVerdict verdict = DecreasingVerdict::holds;
  double max_violation = 0.0;  ///< max over nodes of (|v| - bound)/bound, clipped at 0
  double margin = std::numeric_limits<double>::infinity();  ///< min over nodes of (bound - |v|)/bound
};

/// Checks |v(r)| ≤ (d/|S^{d-1}|)^{1/2} r^{-d/2} ‖v‖_{L²} for a nonnegative nonincreasing profile.
inline DecreasingBoundResult radial_decreasing_bound_check(const RadialField& v) {
  DecreasingBoundResult res;
  const auto vals = v.values();
  for (int i = 0; i < v.size(); ++i) {
    if (std::abs(vals[i].imag()) > 0.0 || vals[i].real() < 0.0 ||
        (i > 0 && vals[i].real() > vals[i - 1].real())) {
      res.verdict = DecreasingVerdict::not_monotone;
      return res;
    }
  }
  const auto& g = v.grid();
  const double norm = std::sqrt(mass(v));
  if (norm == 0.0) return res;
  const double c = std::sqrt(g.dim() / g.surface()) * norm;
  const auto r = g.r();
  for (int i = 0; i < v.size(); ++i) {
    const double bound = c * std::pow(r[i], -0.5 * g.dim());
    const double rel = (bound - vals[i].real()) / bound;
    res.margin = std::min(res.margin, rel);
    res.max_violation = std::max(res.max_violation, -rel);
  }
  if (res.max_violation > 0.0) res.verdict = DecreasingVerdict::violated;
  return res;
}

}  // namespace nlsip
