#pragma once

// Bottom eigenpair of -Δ - c|x|^{-σ} on the radial grid (zero beyond r_max).
//
// Discretely this is the symmetric tridiagonal pencil A x = μ W x, with A the
// stiffness matrix minus the cell potential weights and W the shell volumes.
// A Sturm count brackets μ₁, then shifted inverse iteration yields Φ.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/core.hpp"
#include "nlsip/profile_io.hpp"

namespace nlsip {

struct EigenPair {
  double mu1 = 0.0;
  RadialField phi;
  double residual = 0.0;  ///< ‖(-Δ_h - V - μ₁)Φ‖_{L²}
  int iterations = 0;
};

/// The tridiagonal matrix A = S - diag(potential weights).
struct Pencil {
  std::vector<double> diag, off, weight;
};

inline Pencil schrodinger_pencil(const Discretization& D) {
  const auto& g = D.grid();
  const int n = g.size();
  const auto f = g.flux();
  const auto pw = D.potential_weights();
  Pencil P;
  P.diag.resize(n);
  P.off.resize(n - 1);
  P.weight.assign(g.weights().begin(), g.weights().end());
  for (int i = 0; i < n; ++i) {
    P.diag[i] = f[i] + (i > 0 ? f[i - 1] : 0.0) - pw[i];
    if (i + 1 < n) P.off[i] = -f[i];
  }
  return P;
}

/// Number of eigenvalues of the pencil strictly below `mu` (negative LDLᵀ pivots of A - μW).
inline int sturm_count(const Pencil& P, double mu) {
  int count = 0;
  double piv = 1.0;
  for (std::size_t i = 0; i < P.diag.size(); ++i) {
    double t = P.diag[i] - mu * P.weight[i];
    if (i > 0) t -= P.off[i - 1] * P.off[i - 1] / piv;
    if (t == 0.0) t = -1e-300;
    if (t < 0.0) ++count;
    piv = t;
  }
  return count;
}

inline double bottom_eigenvalue_bisection(const Pencil& P) {
  const std::size_t n = P.diag.size();
  double lo = std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double radius = 0.0;
    if (i > 0) radius += std::abs(P.off[i - 1]) / std::sqrt(P.weight[i] * P.weight[i - 1]);
    if (i + 1 < n) radius += std::abs(P.off[i]) / std::sqrt(P.weight[i] * P.weight[i + 1]);
    const double t = P.diag[i] / P.weight[i];
    lo = std::min(lo, t - radius);
    hi = std::min(hi, t);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count(P, mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

struct EigenOptions {
  double shift_offset = 0.5;
  double vector_tol = 1e-10;
  double residual_tol = 1e-8;
  int max_iterations = 100000;
};

inline EigenPair ground_eigenpair(const ModelParams& p, const GridPtr& grid, const EigenOptions& opt = {}) {
  validate(p);
  const Discretization D(grid, p);
  const Pencil P = schrodinger_pencil(D);
  const int n = grid->size();
  const double estimate = bottom_eigenvalue_bisection(P);
  const double shift = estimate - opt.shift_offset;

  std::vector<double> sdiag(n);
  for (int i = 0; i < n; ++i) sdiag[i] = P.diag[i] - shift * P.weight[i];

  const auto w = grid->weights();
  auto normalize = [&](std::vector<double>& x) {
    double m = 0.0, s = 0.0;
    for (int i = 0; i < n; ++i) {
      m += w[i] * x[i] * x[i];
      s += w[i] * x[i];
    }
    const double c = (s < 0.0 ? -1.0 : 1.0) / std::sqrt(m);
    for (auto& xi : x) xi *= c;
  };
  auto rayleigh_and_residual = [&](const std::vector<double>& x) {
    std::vector<double> Ax(n);
    for (int i = 0; i < n; ++i) {
      double t = P.diag[i] * x[i];
      if (i > 0) t += P.off[i - 1] * x[i - 1];
      if (i + 1 < n) t += P.off[i] * x[i + 1];
      Ax[i] = t;
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      num += x[i] * Ax[i];
      den += w[i] * x[i] * x[i];
    }
    const double mu = num / den;
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ri = Ax[i] / w[i] - mu * x[i];
      res += w[i] * ri * ri;
    }
    return std::pair{mu, std::sqrt(res / den)};
  };

  std::vector<double> x(n, 1.0), prev, rhs(n), scratch;
  normalize(x);
  double mu = estimate, res = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < opt.max_iterations) {
    ++it;
    prev = x;
    for (int i = 0; i < n; ++i) rhs[i] = w[i] * x[i];
    solve_tridiagonal<double, double>(sdiag, P.off, rhs, scratch);
    x = rhs;
    normalize(x);
    double change = 0.0;
    for (int i = 0; i < n; ++i) change += w[i] * (x[i] - prev[i]) * (x[i] - prev[i]);
    change = std::sqrt(change);
    std::tie(mu, res) = rayleigh_and_residual(x);
    if (change < opt.vector_tol && res <= opt.residual_tol * std::max(std::abs(mu), 1e-6)) break;
  }
  if (it >= opt.max_iterations)
    throw ConvergenceError("ground_eigenpair: inverse iteration hit the iteration limit", res);

  for (auto& xi : x)
    if (xi < 0.0) xi = 0.0;  // tail roundoff only
  RadialField phi = RadialField::from_real(grid, x);
  return {mu, std::move(phi), res, it};
}

struct EigenBoundVerdict {
  bool holds = false;
  double lhs = 0.0;  ///< μ₁‖v‖²
  double rhs = 0.0;  ///< ‖∇v‖² - G(v)
  double tol = 0.0;
};

/// μ₁‖v‖² ≤ ‖∇v‖² - G(v), up to 1e-8(1 + ‖∇v‖²).
inline EigenBoundVerdict eigenvalue_bound_check(const RadialField& v, const EigenPair& pair, const ModelParams& p) {
  if (v.is_zero()) throw ParameterError("eigenvalue_bound_check: field must be nonzero");
  const auto rep = functionals(v, p, 0.0);
  EigenBoundVerdict out;
  out.lhs = pair.mu1 * rep.mass;
  out.rhs = rep.kinetic - rep.potential_G;
  out.tol = 1e-8 * (1.0 + std::abs(rep.kinetic));
  out.holds = out.lhs <= out.rhs + out.tol;
  return out;
}

/// `d, sigma, coupling, n, mu1, residual`
inline std::string eigen_summary_record(const EigenPair& e, const ModelParams& p) {
  std::ostringstream os;
  os << p.d << ", " << fmt17(p.sigma) << ", " << fmt17(p.coupling) << ", " << e.phi.size() << ", " << fmt17(e.mu1)
     << ", " << fmt17(e.residual);
  return os.str();
}

}  // namespace nlsip
