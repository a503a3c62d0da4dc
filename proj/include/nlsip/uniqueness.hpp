#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/core.hpp"
#include "nlsip/elliptic.hpp"
#include "nlsip/error.hpp"
#include "nlsip/profile_io.hpp"

namespace nlsip {

// G(r) = (A r² + B r^{2-σ} + C) r^power
struct SWCoefficients {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double power = 0.0;
};

namespace detail {

inline void require_sw_regime(const ModelParams& p, const char* where) {
  const std::string w = where;
  if (p.d < 3) throw ParameterError(w + ": d must be >= 3");
  if (!(p.sigma > 0.0 && p.sigma < 1.0)) throw ParameterError(w + ": sigma must lie in (0, 1)");
  if (!(p.alpha > 0.0 && p.alpha < 4.0 / (p.d - 2))) throw ParameterError(w + ": alpha must lie in (0, 4/(d-2))");
}

inline void require_sw_frequency(const ModelParams& p, double omega, double c, const char* where) {
  if (!std::isfinite(omega)) throw ParameterError(std::string(where) + ": omega must be finite");
  ModelParams q = p;
  q.coupling = c;
  const double mu1 = discrete_mu1(q, build_grid(p.d, 40.0, 8192));
  require_above_threshold(omega, mu1, where);
}

}  // namespace detail

inline SWCoefficients sw_coefficients(const ModelParams& p, double omega, double c) {
  detail::require_sw_regime(p, "sw_coefficients");
  detail::require_sw_frequency(p, omega, c, "sw_coefficients");
  const double d = p.d, s = p.sigma, a = p.alpha;
  const double q = a + 4;
  SWCoefficients k;
  k.A = -omega * a * (d - 1) / q;
  k.B = c * ((2 * d - 2 - s) * a - 4 * s) / (2 * q);
  k.C = (d - 1) * (4 - (d - 2) * a) * (2 * (d - 2) * a + 4 * (d - 3)) / (q * q * q);
  k.power = ((2 * d - 3) * a + 4 * (d - 2)) / q - 2;
  return k;
}

inline double sw_polynomial(double r, const SWCoefficients& k, double sigma) {
  return k.A * r * r + k.B * std::pow(r, 2 - sigma) + k.C;
}

inline double sw_G(double r, const SWCoefficients& k, double sigma) {
  return sw_polynomial(r, k, sigma) * std::pow(r, k.power);
}

struct ConditionCheck {
  std::string label;
  bool holds = false;
  std::string detail;
};

struct SignScan {
  int sign_changes = 0;
  std::vector<double> roots;
  bool starts_positive = false;
  bool ends_negative = false;
};

struct ScanOptions {
  double r_lo = 1e-6;
  double r_hi = 1e6;
  int nodes = 100000;
};

// Sign changes of A r² + B r^{2-σ} + C on a log grid, each refined by bisection.
inline SignScan sw_sign_scan(const SWCoefficients& k, double sigma, ScanOptions o = {}) {
  auto f = [&](double r) { return sw_polynomial(r, k, sigma); };
  SignScan s;
  const double step = std::log(o.r_hi / o.r_lo) / (o.nodes - 1);
  double r_prev = o.r_lo, f_prev = f(r_prev);
  s.starts_positive = f_prev > 0;
  for (int i = 1; i < o.nodes; ++i) {
    const double r = o.r_lo * std::exp(step * i);
    const double fr = f(r);
    if ((f_prev > 0) != (fr > 0)) {
      double lo = r_prev, hi = r;
      const bool lo_pos = f_prev > 0;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((f(mid) > 0) == lo_pos ? lo : hi) = mid;
      }
      s.roots.push_back(0.5 * (lo + hi));
      ++s.sign_changes;
    }
    r_prev = r;
    f_prev = fr;
  }
  s.ends_negative = f_prev < 0;
  return s;
}

struct UniquenessReport {
  SWCoefficients coeffs;
  std::array<ConditionCheck, 6> conditions;
  SignScan scan;
  std::optional<double> r1;
  bool all_pass = false;
};

// (I)-(IV) are decided by exponents of the closed forms, (V)-(VI) by the sign scan.
inline UniquenessReport check_conditions(const ModelParams& p, double omega, double c, ScanOptions scan = {}) {
  UniquenessReport rep;
  rep.coeffs = sw_coefficients(p, omega, c);
  const double d = p.d, s = p.sigma, a = p.alpha, q = a + 4;
  auto fmt = [](double x) { return fmt17(x); };

  // g = c r^{-σ} − ω is smooth on (0, ∞); h ≡ 1
  rep.conditions[0] = {"I", s > 0.0, "g in C1(0,inf), h = 1 > 0"};

  // r^{1-d} ∫₀^r τ^{d-1-σ} dτ ~ r^{1-σ}; the ω and h parts give ~ r
  {
    const double e = 1 - s;
    rep.conditions[1] = {"II", s < d && e > 0, "r^{1-d} int ~ r^" + fmt(e)};
  }
  // (i) τ^{d-1-σ} near 0; (ii) extra factor ~ r^{2-d}
  {
    const double e1 = d - 1 - s, e2 = d - 1 - s + 2 - d;
    rep.conditions[2] = {"III", e1 > -1 && e2 > -1,
                         "integrand exponents " + fmt(e1) + ", " + fmt(e2) + " (need > -1)"};
  }
  // limits at 0 of a, b, c and of a·g, a·h
  {
    const double ea = 2 * (d - 1) * (a + 2) / q;
    const double eb = ((2 * d - 3) * a + 4 * (d - 2)) / q;
    const double ec = (2 * (d - 2) * a + 4 * (d - 3)) / q;
    const double cc = 2 * (d - 1) * (4 - (d - 2) * a) / (q * q);
    const bool a_ok = ea >= 0, b_ok = eb >= 0, c_ok = cc >= 0 && ec >= 0;
    const bool ag_ok = ea - s > 0 && ea > 0;
    rep.conditions[3] = {"IV", a_ok && b_ok && c_ok && ag_ok,
                         "exponents a " + fmt(ea) + ", b " + fmt(eb) + ", c " + fmt(ec) + ", a*g " + fmt(ea - s)};
  }
  rep.scan = sw_sign_scan(rep.coeffs, s, scan);
  const bool single = rep.scan.sign_changes == 1 && rep.scan.starts_positive && rep.scan.ends_negative;
  if (single) rep.r1 = rep.scan.roots.front();
  {
    std::ostringstream os;
    os << rep.scan.sign_changes << " sign change(s)";
    if (single) os << ", r1 = " << fmt(*rep.r1);
    else if (rep.scan.sign_changes > 1) os << ", condition violated";
    rep.conditions[4] = {"V", single, os.str()};
  }
  rep.conditions[5] = {"VI", rep.scan.ends_negative || rep.scan.sign_changes > 0, "G negative somewhere"};
  rep.all_pass = true;
  for (const auto& ch : rep.conditions) rep.all_pass = rep.all_pass && ch.holds;
  return rep;
}

inline UniquenessReport check_conditions(const ModelParams& p, double omega) {
  return check_conditions(p, omega, p.coupling);
}

inline std::string uniqueness_summary(const UniquenessReport& r) {
  std::ostringstream os;
  for (const auto& ch : r.conditions) os << '(' << ch.label << ") " << (ch.holds ? "pass" : "FAIL") << ": " << ch.detail << '\n';
  os << "r1 = " << (r.r1 ? fmt17(*r.r1) : std::string("none")) << '\n';
  return os.str();
}

}  // namespace nlsip
