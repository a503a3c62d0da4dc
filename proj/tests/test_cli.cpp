#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "runner.hpp"

using namespace nlsip;
using namespace nlsip::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string echoed(const ExperimentConfig& c, const std::string& key) {
  for (const auto& [k, v] : c.echo)
    if (k == key) return v;
  return "<absent>";
}

ConfigError config_error(const std::string& text, std::optional<Command> cmd = std::nullopt) {
  try {
    parse_config(text, cmd);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return ConfigError("", "");
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("nlsip_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_tool(const std::string& args) {
  const int status = std::system((std::string(NLSIP_TOOL) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kUniqueness = R"(
command = uniqueness-check
[model]
d = 3
sigma = 0.5
alpha = 1
[grid]
n = 4096
[run]
omega = 1
)";

}  // namespace

TEST(Config, MinimalEigEchoesDefaults) {
  const auto c = parse_config("[model]\nd = 3\nsigma = 1\n", Command::eig);
  EXPECT_EQ(c.n, 16384);
  EXPECT_EQ(c.r_max, 40.0);
  EXPECT_EQ(echoed(c, "grid.n"), "16384");
  EXPECT_EQ(echoed(c, "grid.r_max"), "40");
  EXPECT_EQ(echoed(c, "model.coupling"), "1");
  EXPECT_EQ(echoed(c, "model.alpha"), fmt17(4.0 / 3.0));
  EXPECT_EQ(echoed(c, "command"), "eig");
}

TEST(Config, CommandDefaultsDiffer) {
  const auto sweep = parse_config("[model]\nd = 2\nsigma = 0.5\n", Command::critical_sweep);
  EXPECT_EQ(sweep.n, 32768);
  EXPECT_EQ(sweep.model.alpha, 2.0);
  const auto st = parse_config("[model]\nd = 2\nsigma = 0.5\nalpha = 2\n[run]\na = 2\n", Command::stability);
  EXPECT_EQ(st.dt, 0.01);
  EXPECT_EQ(st.T, 20.0);
  EXPECT_EQ(st.output_every, 0.1);
}

TEST(Config, SigmaOutOfRangeNamesTheKey) {
  const auto e = config_error("[model]\nd = 3\nsigma = 2.5\nalpha = 1\n", Command::eig);
  EXPECT_EQ(e.key(), "model.sigma");
  EXPECT_NE(std::string(e.what()).find("model.sigma"), std::string::npos);
}

TEST(Config, DuplicateKeyNamesBothLines) {
  const auto e = config_error("[model]\nd = 3\nsigma = 1\n\nsigma = 0.5\n", Command::eig);
  EXPECT_EQ(e.key(), "model.sigma");
  const std::string msg = e.what();
  EXPECT_NE(msg.find("lines 3 and 5"), std::string::npos) << msg;
}

TEST(Config, UnknownMissingAndMistypedKeys) {
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 1\nsgima = 1\n", Command::eig).key(), "model.sgima");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 1\n[run]\nomega = 1\n", Command::eig).key(), "run.omega");
  EXPECT_EQ(config_error("[model]\nd = 3\n", Command::eig).key(), "model.sigma");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 0.5\nalpha = 1\n", Command::groundstate).key(), "run.omega");
  EXPECT_EQ(config_error("[model]\nd = 3.5\nsigma = 1\n", Command::eig).key(), "model.d");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = abc\n", Command::eig).key(), "model.sigma");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 1\n[grid]\nn = 12x\n", Command::eig).key(), "grid.n");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 0.5\nalpha = 1\n[run]\nomega = 1\nsolver = newton\n",
                         Command::groundstate)
                .key(),
            "run.solver");
  EXPECT_EQ(config_error("[models]\nd = 3\n", Command::eig).key(), "models");
  EXPECT_EQ(config_error("[model]\nd = 3\nsigma = 1\n").key(), "command");
  EXPECT_EQ(config_error("command = fly\n[model]\nd = 3\nsigma = 1\n").key(), "command");
  // supercritical power is rejected where a constrained minimizer is needed
  EXPECT_EQ(config_error("[model]\nd = 2\nsigma = 0.5\nalpha = 3\n[run]\na = 1\n", Command::minimize).key(),
            "model.alpha");
}

TEST(Config, CommandLineOverridesTheFile) {
  const auto c = parse_config("command = uniqueness-check\n[model]\nd = 3\nsigma = 0.5\n", Command::eig);
  EXPECT_EQ(c.command, Command::eig);
  // the file's own command would have demanded run.omega
  EXPECT_EQ(config_error(kUniqueness, Command::eig).key(), "run.omega");
  EXPECT_EQ(parse_config(kUniqueness).command, Command::uniqueness_check);
}

TEST(PlotScript, ContentByKind) {
  TempDir tmp("plot");
  const auto table = tmp.path / "sweep.csv";
  std::ofstream(table) << "a, beta_a, I_a, G_va, kinetic_va, h1_error, gradnorm\n";
  const auto gp = emit_plot_script(table, PlotKind::sweep, -0.25);
  EXPECT_EQ(gp.extension(), ".gp");
  const auto s = slurp(gp);
  EXPECT_NE(s.find("'sweep.csv'"), std::string::npos);
  EXPECT_NE(s.find("column(\"beta_a\")"), std::string::npos);
  EXPECT_NE(s.find("set logscale xy"), std::string::npos);
  EXPECT_NE(s.find("-0.25"), std::string::npos);
  EXPECT_NE(s.find("set output 'sweep.png'"), std::string::npos);

  const auto vt = tmp.path / "virial.csv";
  std::ofstream(vt) << "t, V_tt, 8Q\n";
  const auto v = slurp(emit_plot_script(vt, PlotKind::virial));
  EXPECT_NE(v.find("column(\"V_tt\")"), std::string::npos);
  EXPECT_NE(v.find("column(\"8Q\")"), std::string::npos);

  const auto pt = tmp.path / "rescaled.csv";
  std::ofstream(pt) << "r, w_a, reference\n";
  EXPECT_NE(slurp(emit_plot_script(pt, PlotKind::profile)).find("column(\"w_a\")"), std::string::npos);
}

TEST(PlotScript, Errors) {
  TempDir tmp("plot_err");
  EXPECT_THROW(emit_plot_script(tmp.path / "missing.csv", PlotKind::virial), ParameterError);
  EXPECT_THROW(parse_plot_kind("histogram"), ParameterError);
  EXPECT_EQ(parse_plot_kind("profile"), PlotKind::profile);
}

TEST(Runner, ArtifactsAreDeterministic) {
  TempDir a("det_a"), b("det_b");
  const auto cfg = parse_config(
      "command = groundstate\n[model]\nd = 3\nsigma = 0.5\nalpha = 1\n[grid]\nr_max = 24\nn = 2048\n[run]\nomega = 1\n");
  const auto ra = run(cfg, a.path);
  const auto rb = run(cfg, b.path);
  EXPECT_EQ(ra.exit_code, rb.exit_code);
  for (const char* f : {"groundstate_shooting.txt", "groundstate_action.txt"}) {
    ASSERT_TRUE(fs::exists(a.path / f)) << f;
    EXPECT_EQ(slurp(a.path / f), slurp(b.path / f)) << f;
  }
  EXPECT_EQ(ra.manifest["summary"].dump(), rb.manifest["summary"].dump());
  EXPECT_TRUE(ra.manifest.contains("versions"));
  EXPECT_EQ(ra.manifest["config"]["grid.n"], "2048");
}

TEST(Runner, ModuleErrorsBecomeExitCodesAndMarkers) {
  TempDir tmp("fail");
  // ω below the bottom of the spectrum: the solver refuses, the run records it
  const auto cfg = parse_config("command = groundstate\n[model]\nd = 3\nsigma = 0.5\nalpha = 1\n[grid]\nn = 1024\n"
                                "[run]\nomega = 0.1\n");
  const auto r = run(cfg, tmp.path);
  EXPECT_EQ(r.exit_code, kConfigError);
  EXPECT_TRUE(fs::exists(tmp.path / "FAILED"));
  EXPECT_TRUE(r.manifest.contains("error"));
  EXPECT_NE(slurp(tmp.path / "FAILED").find("groundstate"), std::string::npos);
}

TEST(Tool, ExitCodesAndOutputDirectory) {
  TempDir tmp("tool");
  const auto cfg = tmp.path / "u.cfg";
  std::ofstream(cfg) << kUniqueness;
  const auto out = tmp.path / "flag";
  EXPECT_EQ(run_tool("uniqueness-check --config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  EXPECT_TRUE(fs::exists(out / "conditions.txt"));

  const auto env_out = tmp.path / "env";
  ::setenv("NLSIP_OUT_DIR", env_out.c_str(), 1);
  EXPECT_EQ(run_tool("uniqueness-check --config " + cfg.string()), 0);
  ::unsetenv("NLSIP_OUT_DIR");
  EXPECT_TRUE(fs::exists(env_out / "manifest.json"));

  const auto bad = tmp.path / "bad.cfg";
  std::ofstream(bad) << "[model]\nd = 3\nsigma = 2.5\nalpha = 1\n";
  EXPECT_EQ(run_tool("eig --config " + bad.string() + " --out " + (tmp.path / "bad").string()), 2);
  EXPECT_TRUE(fs::exists(tmp.path / "bad" / "FAILED"));
  EXPECT_NE(run_tool("teleport --config " + cfg.string()), 0);
}
