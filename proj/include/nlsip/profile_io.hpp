#pragma once

// Text profile files: `key=value` header lines (d, sigma, alpha, tag, n,
// r_max) followed by n rows `r, re, im`, all numbers at 17 significant digits
// so a write/read cycle is bit-exact.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/core.hpp"

namespace nlsip {

/// %.17g formatting; round-trips every finite double.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Profile {
  ModelParams params;
  std::string tag;
  RadialField field;
};

inline void write_profile(std::ostream& os, const RadialField& v, const ModelParams& p, const std::string& tag) {
  const auto& g = v.grid();
  os << "d=" << g.dim() << '\n'
     << "sigma=" << fmt17(p.sigma) << '\n'
     << "alpha=" << fmt17(p.alpha) << '\n'
     << "tag=" << tag << '\n'
     << "n=" << g.size() << '\n'
     << "r_max=" << fmt17(g.r_max()) << '\n';
  const auto r = g.r();
  for (int i = 0; i < g.size(); ++i)
    os << fmt17(r[i]) << ", " << fmt17(v[i].real()) << ", " << fmt17(v[i].imag()) << '\n';
}

inline void save_profile(const std::string& path, const RadialField& v, const ModelParams& p,
                         const std::string& tag) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open profile file for writing: " + path);
  write_profile(os, v, p, tag);
  if (!os) throw Error("failed writing profile file: " + path);
}

inline Profile read_profile(std::istream& is) {
  auto header = [&](const char* key) {
    std::string line;
    if (!std::getline(is, line)) throw Error(std::string("profile: missing header ") + key);
    const std::string prefix = std::string(key) + "=";
    if (line.rfind(prefix, 0) != 0) throw Error("profile: expected header '" + prefix + "', got '" + line + "'");
    return line.substr(prefix.size());
  };
  auto to_double = [](const std::string& s, const char* what) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0) throw Error(std::string("profile: bad number for ") + what + ": '" + s + "'");
    return x;
  };

  ModelParams p;
  p.d = std::stoi(header("d"));
  p.sigma = to_double(header("sigma"), "sigma");
  p.alpha = to_double(header("alpha"), "alpha");
  std::string tag = header("tag");
  const int n = std::stoi(header("n"));
  const double r_max = to_double(header("r_max"), "r_max");
  auto grid = build_grid(p.d, r_max, n);

  std::vector<cplx> vals(n);
  std::string line;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw Error("profile: expected " + std::to_string(n) + " rows, got " + std::to_string(i));
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      throw Error("profile: malformed row " + std::to_string(i + 1));
    vals[i] = {to_double(b, "re"), to_double(c, "im")};
  }
  return {p, std::move(tag), RadialField(std::move(grid), std::move(vals))};
}

inline Profile load_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open profile file: " + path);
  return read_profile(is);
}

}  // namespace nlsip
