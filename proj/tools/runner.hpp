#pragma once

#include <boost/version.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "nlsip/critical.hpp"
#include "nlsip/dynamics.hpp"
#include "nlsip/elliptic.hpp"
#include "nlsip/profile_io.hpp"
#include "nlsip/spectral.hpp"
#include "nlsip/thresholds.hpp"
#include "nlsip/uniqueness.hpp"

namespace nlsip::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kPass = 0, kVerdictFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

enum class PlotKind { virial, sweep, profile };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "virial") return PlotKind::virial;
  if (s == "sweep") return PlotKind::sweep;
  if (s == "profile") return PlotKind::profile;
  throw ParameterError("emit_plot_script: unknown plot kind '" + s + "'");
}

/// Writes a gnuplot script next to `table` and returns its path. Columns are
/// addressed by header name.
inline fs::path emit_plot_script(const fs::path& table, PlotKind kind, std::optional<double> slope = std::nullopt) {
  if (!fs::exists(table)) throw ParameterError("emit_plot_script: table not found: " + table.string());
  const auto name = table.filename().string();
  const auto stem = table.stem().string();
  fs::path script = table;
  script.replace_extension(".gp");
  std::ofstream os(script);
  if (!os) throw Error("cannot write plot script " + script.string());
  os << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set terminal pngcairo size 900,600\n"
     << "set output '" << stem << ".png'\n";
  switch (kind) {
    case PlotKind::virial:
      os << "set xlabel 't'\n"
         << "plot '" << name << "' using (column(\"t\")):(column(\"V_tt\")) with lines title \"V''(t)\", \\\n"
         << "     '' using (column(\"t\")):(column(\"8Q\")) with lines dt 2 title '8 Q(u(t))'\n";
      break;
    case PlotKind::sweep:
      os << "set logscale xy\nset xlabel 'beta_a'\nset ylabel '-I(a)/a'\n";
      if (slope) os << "set label 1 sprintf('fitted slope = %.6f', " << fmt17(*slope) << ") at graph 0.05, 0.9\n";
      os << "f(x) = C * x**s\nC = 1; s = " << (slope ? fmt17(*slope) : std::string("-0.5")) << "\n"
         << "fit log(f(x)) '" << name << "' using (column(\"beta_a\")):(log(-column(\"I_a\")/column(\"a\"))) via C\n"
         << "plot '" << name << "' using (column(\"beta_a\")):(-column(\"I_a\")/column(\"a\")) with points pt 7 title '-I(a)/a', \\\n"
         << "     f(x) with lines title 'fit'\n";
      break;
    case PlotKind::profile:
      os << "set xlabel 'r'\nset xrange [0:8]\n"
         << "plot '" << name << "' using (column(\"r\")):(column(\"w_a\")) with lines title 'w_a', \\\n"
         << "     '' using (column(\"r\")):(column(\"reference\")) with lines dt 2 title 'lambda0^{d/2} Q(lambda0 r)'\n";
      break;
  }
  if (!os) throw Error("failed writing plot script " + script.string());
  return script;
}

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path out;
  json summary = json::object();
  json verdicts = json::object();
  std::vector<std::string> artifacts;

  GridPtr grid() const { return build_grid(cfg.model.d, cfg.r_max, cfg.n); }

  void verdict(const std::string& name, bool ok) { verdicts[name] = ok; }

  void write(const std::string& file, const std::string& content) {
    std::ofstream os(out / file);
    if (!os) throw Error("cannot write " + (out / file).string());
    os << content;
    artifacts.push_back(file);
  }
  void profile(const std::string& file, const RadialField& v, const std::string& tag) {
    save_profile((out / file).string(), v, cfg.model, tag);
    artifacts.push_back(file);
  }
  void plot(const std::string& table, PlotKind kind, std::optional<double> slope = std::nullopt) {
    if (!cfg.plots) return;
    artifacts.push_back(emit_plot_script(out / table, kind, slope).filename().string());
  }
};

inline json pohozaev_json(const PohozaevResiduals& r) { return {{"nehari", r.nehari}, {"scaling", r.scaling}}; }

inline json report_json(const FunctionalReport& r) {
  return {{"mass", r.mass},         {"kinetic", r.kinetic},   {"potential_G", r.potential_G},
          {"power_Lp", r.power_Lp}, {"energy_E", r.energy_E}, {"action_S", r.action_S},
          {"nehari_K", r.nehari_K}, {"virial_Q", r.virial_Q}, {"quadratic_H", r.quadratic_H}};
}

namespace commands {

inline void eig(RunContext& ctx) {
  const auto& p = ctx.cfg.model;
  const auto pair = ground_eigenpair(p, ctx.grid());
  ctx.profile("eigenfunction.txt", pair.phi, "eigenfunction");
  ctx.write("eigen.csv", "d, sigma, coupling, n, mu1, residual\n" + eigen_summary_record(pair, p) + "\n");
  std::mt19937_64 rng(ctx.cfg.seed);
  std::normal_distribution<double> amp;
  std::uniform_real_distribution<double> width(0.3, 4.0);
  bool all = true;
  for (int k = 0; k < 20; ++k) {
    const double w = width(rng), c1 = amp(rng), c2 = amp(rng);
    const auto v = RadialField::from_function(ctx.grid(), [&](double r) {
      return c1 * std::exp(-r * r / (w * w)) + c2 * std::exp(-r / w);
    });
    all = all && eigenvalue_bound_check(v, pair, p).holds;
  }
  ctx.summary["mu1"] = pair.mu1;
  ctx.summary["residual"] = pair.residual;
  ctx.summary["iterations"] = pair.iterations;
  ctx.verdict("rayleigh_bound", all);
  ctx.verdict("eigen_residual", pair.residual <= 1e-6);
}

inline void groundstate(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = ctx.grid();
  std::optional<GroundStateResult> shot, act;
  auto record = [&](const std::string& name, const GroundStateResult& gs) {
    ctx.profile("groundstate_" + name + ".txt", gs.phi, "groundstate-" + name);
    ctx.summary[name] = {{"omega", gs.omega},
                         {"action_d", gs.action_d},
                         {"phi0", gs.phi0},
                         {"iterations", gs.iterations},
                         {"pohozaev", pohozaev_json(gs.pohozaev)},
                         {"virial_residual", gs.virial_residual()},
                         {"uniqueness_guaranteed", gs.uniqueness_guaranteed},
                         {"report", report_json(gs.report)}};
    ctx.verdict(name + "_pohozaev", gs.pohozaev.max() <= 1e-6 && gs.virial_residual() <= 1e-6);
  };
  if (c.solver != "action") {
    shot = find_ground_state_shooting(c.model, *c.omega, {.grid = g});
    record("shooting", *shot);
  }
  if (c.solver != "shooting") {
    act = minimize_action(c.model, *c.omega, {.grid = g});
    record("action", *act);
  }
  if (shot && act) {
    const double dist = h1_distance(shot->phi, act->phi);
    ctx.summary["cross_solver_h1"] = dist;
    ctx.verdict("cross_solver", dist <= 1e-4);
  }
}

inline void minimize(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto m = minimize_energy_constrained(c.model, *c.a, {.grid = ctx.grid()});
  ctx.profile("minimizer.txt", m.v, "minimizer");
  std::ostringstream hist;
  hist << "step, energy\n";
  for (std::size_t i = 0; i < m.energy_history.size(); ++i) hist << i << ", " << fmt17(m.energy_history[i]) << '\n';
  ctx.write("energy_history.csv", hist.str());
  ctx.summary["I_a"] = m.I_a;
  ctx.summary["lagrange_omega"] = m.lagrange_omega;
  ctx.summary["el_residual"] = m.el_residual;
  ctx.summary["flow_steps"] = m.flow_steps;
  ctx.summary["report"] = report_json(m.report);
  ctx.verdict("euler_lagrange", m.el_residual <= 1e-6);
}

inline void classify(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& p = c.model;
  const auto gs = find_ground_state_shooting(p, *c.omega, {.grid = ctx.grid()});
  ctx.profile("groundstate.txt", gs.phi, "groundstate");
  const auto family = sample_family(gs);
  std::ostringstream csv;
  csv << "index, verdict, in_B_omega, mass, action, nehari, virial, lp\n";
  int agree = 0, kminus = 0, kplus = 0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto m = nlsip::classify(family[i], p, *c.omega, gs);
    agree += (m.verdict == SetVerdict::Kminus) == m.in_B_omega;
    kminus += m.verdict == SetVerdict::Kminus;
    kplus += m.verdict == SetVerdict::Kplus;
    csv << i << ", " << to_string(m.verdict) << ", " << (m.in_B_omega ? 1 : 0) << ", " << fmt17(m.margins.mass) << ", "
        << fmt17(m.margins.action) << ", " << fmt17(m.margins.nehari) << ", " << fmt17(m.margins.virial) << ", "
        << fmt17(m.margins.lp) << '\n';
  }
  ctx.write("classification.csv", csv.str());
  const double D = second_variation(gs, p);
  ctx.summary["family_size"] = family.size();
  ctx.summary["kminus"] = kminus;
  ctx.summary["kplus"] = kplus;
  ctx.summary["agreement"] = agree;
  ctx.summary["second_variation_D"] = D;
  ctx.verdict("kminus_matches_B_omega", agree == static_cast<int>(family.size()));
  if (c.omega0) {
    const auto r = nlsip::find_omega0(p, c.omega_lo, c.omega_hi);
    ctx.summary["omega0"] = r.omega0;
    ctx.summary["omega0_below_bracket"] = r.below_bracket;
    ctx.summary["omega0_D"] = r.D;
  }
}

inline void evolve(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& p = c.model;
  const auto g = ctx.grid();
  std::optional<RadialField> u0;
  if (c.datum == "gaussian") {
    u0 = RadialField::from_function(g, [&](double r) { return c.amplitude * std::exp(-r * r / (c.width * c.width)); });
  } else {
    const auto gs = find_ground_state_shooting(p, *c.omega);
    const auto base = c.datum == "dilated" ? dilate_keeping_mass(gs.phi, c.lambda) : gs.phi;
    u0 = resample(base, g, 1.0);
    const auto m = nlsip::classify(base, p, *c.omega, gs);
    ctx.summary["datum_class"] = to_string(m.verdict);
  }
  ctx.profile("initial.txt", *u0, "initial");
  EvolveOptions o;
  o.output_every = c.output_every;
  RadialField fin(g);
  const auto tr = nlsip::evolve(*u0, p, c.dt, c.T, o, &fin);
  ctx.profile("final.txt", fin, "final");
  ctx.write("trace.csv", trace_csv(tr));
  if (tr.size() >= 3 && c.output_every > 0) {
    std::ostringstream vir;
    vir << "t, V_tt, 8Q\n";
    for (std::size_t i = 1; i + 1 < tr.size(); ++i) {
      const double h = tr.times[i] - tr.times[i - 1];
      const double vtt = (tr.variance[i + 1] - 2 * tr.variance[i] + tr.variance[i - 1]) / (h * h);
      vir << fmt17(tr.times[i]) << ", " << fmt17(vtt) << ", " << fmt17(8 * tr.virialQ[i]) << '\n';
    }
    ctx.write("virial.csv", vir.str());
    ctx.plot("virial.csv", PlotKind::virial);
  }
  ctx.summary["verdict"] = to_string(tr.verdict.kind);
  ctx.summary["verdict_reason"] = tr.verdict.reason;
  ctx.summary["t_end"] = tr.times.empty() ? 0.0 : tr.times.back();
  ctx.summary["stop_reason"] = tr.stop_reason;
  ctx.summary["steps"] = tr.steps;
  ctx.summary["gradient_growth"] = tr.verdict.gradient_growth;
  ctx.summary["mass_drift"] = mass_drift(tr);
  ctx.summary["energy_drift"] = energy_drift(tr);
  ctx.verdict("mass_conserved", mass_drift(tr) <= 1e-10);
  if (tr.verdict.kind != Verdict::blewup && tr.size() >= 5 && c.output_every > 0) {
    const double mis = virial_check(tr);
    ctx.summary["virial_mismatch"] = mis;
    ctx.verdict("virial_identity", mis <= 1e-2);
  }
}

inline void critical_sweep(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& p = c.model;
  const auto fs = solve_free_soliton(p.d);
  SweepOptions o;
  o.n = c.n;
  o.threads = c.threads;
  const auto sw = energy_scaling_sweep(p, fs, c.a_list, o);
  std::ostringstream csv;
  csv << "a, beta_a, I_a, G_va, kinetic_va, h1_error, gradnorm\n";
  for (const auto& r : sw.records) csv << sweep_csv_row(r) << '\n';
  ctx.write("sweep.csv", csv.str());
  ctx.plot("sweep.csv", PlotKind::sweep, sw.slope_energy);

  if (sw.closest) {
    const double a = *std::max_element(c.a_list.begin(), c.a_list.end()) * fs.a_star;
    const auto [w, ref] = rescaled_profiles(*sw.closest, a, fs, p.sigma, p.coupling);
    std::ostringstream prof;
    prof << "r, w_a, reference\n";
    const auto r = w.grid().r();
    for (int i = 0; i < w.size(); ++i)
      prof << fmt17(r[i]) << ", " << fmt17(w[i].real()) << ", " << fmt17(ref[i].real()) << '\n';
    ctx.write("rescaled.csv", prof.str());
    ctx.plot("rescaled.csv", PlotKind::profile);
  }
  std::ostringstream trial;
  trial << "tau, energy_per_mass, expansion\n";
  for (double tau : c.tau) {
    const auto t = trial_energy(fs.a_star, tau, fs, p);
    trial << fmt17(tau) << ", " << fmt17(t.energy_per_mass) << ", " << fmt17(t.expansion) << '\n';
  }
  ctx.write("trial_energy.csv", trial.str());

  const double target = -p.sigma / (2 - p.sigma);
  std::vector<double> errs;
  for (const auto& r : sw.records) errs.push_back(r.h1_error);
  const auto grad = gradient_divergence_check(sw.records, p.sigma);
  ctx.summary["a_star"] = fs.a_star;
  ctx.summary["lambda0"] = sw.scale.lambda0;
  ctx.summary["slope_energy"] = sw.slope_energy;
  ctx.summary["slope_target"] = target;
  ctx.summary["slope_gradient"] = sw.slope_gradient;
  ctx.summary["envelope"] = {sw.envelope_m, sw.envelope_M};
  ctx.summary["limit_value"] = sw.limit_value;
  ctx.summary["limit_target"] = sw.limit_target;
  ctx.summary["limit_rel_err"] = sw.limit_rel_err;
  ctx.verdict("energy_slope", std::abs(sw.slope_energy - target) <= 0.05 * std::abs(target));
  ctx.verdict("energy_limit", sw.limit_rel_err <= 0.02);
  ctx.verdict("rescaled_convergence", decreasing_within(errs));
  ctx.verdict("gradient_divergence", grad.holds);
}

inline void uniqueness_check(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const double coef = c.c.value_or(c.model.coupling);
  const auto rep = check_conditions(c.model, *c.omega, coef);
  ctx.write("conditions.txt", uniqueness_summary(rep));
  json conds = json::object();
  for (const auto& ch : rep.conditions) conds[ch.label] = {{"holds", ch.holds}, {"detail", ch.detail}};
  ctx.summary["coefficients"] = {{"A", rep.coeffs.A}, {"B", rep.coeffs.B}, {"C", rep.coeffs.C}, {"power", rep.coeffs.power}};
  ctx.summary["conditions"] = conds;
  ctx.summary["sign_changes"] = rep.scan.sign_changes;
  if (rep.r1) ctx.summary["r1"] = *rep.r1;
  ctx.verdict("conditions", rep.all_pass);

  ModelParams q = c.model;
  q.coupling = coef;
  const auto g = ctx.grid();
  const auto a = find_ground_state_shooting(q, *c.omega, {.grid = g});
  const auto b = find_ground_state_shooting(q, *c.omega, {.grid = g, .bracket_lo = 3e-3, .bracket_hi = 3e2, .scan_per_decade = 7});
  const double dist = h1_distance(a.phi, b.phi);
  ctx.summary["two_seed_h1"] = dist;
  ctx.verdict("two_seed_agreement", dist <= 1e-6);
}

inline void stability(RunContext& ctx) {
  const auto& c = ctx.cfg;
  StabilityOptions o;
  o.grid = ctx.grid();
  o.dt = c.dt;
  o.output_every = c.output_every;
  o.seed = c.seed;
  o.threads = c.threads;
  const auto r = stability_experiment(c.model, *c.a, c.delta, c.T, c.trials, o);
  ctx.profile("minimizer.txt", r.minimizer, "minimizer");
  std::ostringstream csv;
  csv << "trial, seed, t, distance\n";
  json trials = json::array();
  for (std::size_t k = 0; k < r.trials.size(); ++k) {
    const auto& t = r.trials[k];
    for (const auto& [time, dist] : t.distance) csv << k << ", " << t.seed << ", " << fmt17(time) << ", " << fmt17(dist) << '\n';
    trials.push_back({{"seed", t.seed}, {"max_distance", t.max_distance}, {"blew_up", t.blew_up}, {"note", t.note}});
  }
  ctx.write("orbit_distance.csv", csv.str());
  ctx.summary["lagrange_omega"] = r.lagrange_omega;
  ctx.summary["max_distance"] = r.max_distance;
  ctx.summary["trials"] = trials;
  ctx.verdict("orbit_distance", r.max_distance <= c.tolerance);
  ctx.verdict("no_blowup", !r.any_blowup);
}

}  // namespace commands

struct RunResult {
  int exit_code = kPass;
  json manifest;
};

inline json config_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& [k, v] : c.echo) j[k] = v;
  return j;
}

inline json versions_json() {
  return {{"tool", kToolVersion},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"boost", BOOST_LIB_VERSION},
          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const NonexistenceError*>(&e)) return kConfigError;
  return kNumericalFailure;
}

inline void write_failed_marker(const fs::path& out, const std::string& message) {
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream(out / "FAILED") << message << '\n';
}

/// Runs one experiment into `out`. Module errors are caught, named and mapped
/// to exit codes; partial artifacts stay on disk next to a FAILED marker.
inline RunResult run(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  RunContext ctx{cfg, out};
  RunResult res;
  const auto start = std::chrono::steady_clock::now();
  json error = nullptr;
  try {
    switch (cfg.command) {
      case Command::eig: commands::eig(ctx); break;
      case Command::groundstate: commands::groundstate(ctx); break;
      case Command::minimize: commands::minimize(ctx); break;
      case Command::classify: commands::classify(ctx); break;
      case Command::evolve: commands::evolve(ctx); break;
      case Command::critical_sweep: commands::critical_sweep(ctx); break;
      case Command::uniqueness_check: commands::uniqueness_check(ctx); break;
      case Command::stability: commands::stability(ctx); break;
    }
    bool all = true;
    for (const auto& [k, v] : ctx.verdicts.items()) all = all && v.get<bool>();
    res.exit_code = all ? kPass : kVerdictFailure;
  } catch (const std::exception& e) {
    res.exit_code = exit_code_for(e);
    const std::string msg = to_string(cfg.command) + ": " + e.what();
    error = msg;
    write_failed_marker(out, msg);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* status = res.exit_code == kPass ? "pass" : res.exit_code == kVerdictFailure ? "verdict-failure" : "error";
  res.manifest = {{"command", to_string(cfg.command)},
                  {"status", status},
                  {"exit_code", res.exit_code},
                  {"config", config_json(cfg)},
                  {"versions", versions_json()},
                  {"wall_time_s", wall},
                  {"verdicts", ctx.verdicts},
                  {"summary", ctx.summary},
                  {"artifacts", ctx.artifacts}};
  if (!error.is_null()) res.manifest["error"] = error;
  std::ofstream(out / "manifest.json") << res.manifest.dump(2) << '\n';
  return res;
}

}  // namespace nlsip::cli
