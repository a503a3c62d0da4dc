#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "runner.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw nlsip::cli::ConfigError("config", "cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace nlsip::cli;
  CLI::App app{"Radial NLS with an inverse-power potential: experiments"};
  app.require_subcommand(1);
  std::string config_path, out_flag;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  for (auto cmd : {Command::eig, Command::groundstate, Command::minimize, Command::classify, Command::evolve,
                   Command::critical_sweep, Command::uniqueness_check, Command::stability}) {
    auto* sub = app.add_subcommand(to_string(cmd));
    sub->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_flag, "output directory");
    sub->add_option("--seed", seed, "random seed override");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);

  const auto* sub = app.get_subcommands().front();
  const Command cmd = *parse_command(sub->get_name());
  fs::path out;
  try {
    auto cfg = parse_config(read_file(config_path), cmd);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!out_flag.empty())
      out = out_flag;
    else if (const char* env = std::getenv("NLSIP_OUT_DIR"); env && *env)
      out = env;
    else if (!cfg.out_dir.empty())
      out = cfg.out_dir;
    else
      out = fs::path("runs") / to_string(cmd);
    const auto res = run(cfg, out);
    std::cout << res.manifest["status"].get<std::string>() << ": " << (out / "manifest.json").string() << '\n';
    if (res.manifest.contains("error")) std::cerr << res.manifest["error"].get<std::string>() << '\n';
    return res.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!out.empty() || !out_flag.empty()) write_failed_marker(out.empty() ? fs::path(out_flag) : out, e.what());
    return exit_code_for(e);
  }
}
