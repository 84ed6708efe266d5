#include "epsolve/config.hpp"
#include "epsolve/error.hpp"
#include "epsolve/run.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace {

int fail(const epsolve::Error &e) {
  const nlohmann::ordered_json record = {{"error", true},
                                         {"code", std::string(epsolve::to_string(e.code()))},
                                         {"message", e.what()}};
  std::cerr << record.dump() << "\n";
  return epsolve::kExitError;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Effective-potential root solver and realisation analysis"};
  app.set_version_flag("--version", epsolve::kToolVersion);

  std::string config_path;
  std::string out_dir;
  std::string pipeline;
  std::string mode;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool no_color = false;

  app.add_option("--config", config_path, "TOML configuration file")->required();
  app.add_option("--out", out_dir, "output directory (overrides pipeline.output)");
  app.add_option("--jobs", jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
  auto *seed_opt = app.add_option("--seed", seed, "seed (overrides pipeline.seed)");
  app.add_option("--pipeline", pipeline, "pipeline override")
      ->check(CLI::IsMember({"verify", "sweep", "fractal", "wavefunction"}));
  app.add_option("--mode", mode, "auxiliary mode override")
      ->check(CLI::IsMember({"diagonal", "exactblock"}));
  app.add_flag("--no-color", no_color, "plain log output");

  CLI11_PARSE(app, argc, argv);

  epsolve::RunConfig config;
  try {
    std::ifstream f(config_path, std::ios::binary);
    if (!f) {
      throw epsolve::Error(epsolve::ErrorCode::IoError, "cannot read " + config_path);
    }
    std::ostringstream text;
    text << f.rdbuf();
    config = epsolve::parse_config(text.str(), config_path);
    if (!out_dir.empty()) config.pipeline.output = out_dir;
    if (!pipeline.empty()) config.pipeline.name = epsolve::parse_pipeline(pipeline);
    if (!mode.empty()) config.solver.auxiliary = epsolve::parse_auxiliary(mode);
    if (*seed_opt) config.seed = seed;
  } catch (const epsolve::Error &e) {
    return fail(e);
  }

  epsolve::RunOptions options;
  options.jobs = jobs;
  options.color = !no_color && std::getenv("NO_COLOR") == nullptr && isatty(STDERR_FILENO);
  return epsolve::run(config, options, std::cout, std::cerr);
}
