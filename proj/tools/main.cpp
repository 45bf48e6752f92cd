// gmrf: build models, run estimators, compare against the dense oracle.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harness.hpp"

namespace h = gmrf::harness;

int main(int argc, char** argv) {
  CLI::App app{"Marginal variances of latent Gaussian Markov random fields"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> overrides;
  std::string out, model_dir;
  long workers = -1, seed = -1;
  app.add_option("-c,--config", config_file, "key=value config file");
  app.add_option("-s,--set", overrides, "override one key (key=value), repeatable")->take_all();
  app.add_option("-o,--out", out, "output directory");
  app.add_option("-m,--model", model_dir, "model directory");
  app.add_option("-w,--workers", workers, "threads (0: OpenMP default)");
  app.add_option("--seed", seed, "random seed");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const h::Config&);
  };
  const Command commands[] = {
      {"build", "build a model and write its directory", h::cmd_build},
      {"infer", "posterior mean and marginal standard deviations", h::cmd_infer},
      {"sample", "draw samples from the latent conditional", h::cmd_sample},
      {"compare", "estimator error against the dense oracle", h::cmd_compare},
      {"bench", "phase timings across worker counts", h::cmd_bench},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    h::Config config;
    if (!config_file.empty()) config.load_file(config_file);
    for (const auto& s : overrides) config.set(s);
    if (!out.empty()) config.set("out", out);
    if (!model_dir.empty()) config.set("model.dir", model_dir);
    if (workers >= 0) config.set("workers", std::to_string(workers));
    if (seed >= 0) config.set("seed", std::to_string(seed));
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.run(config);
    return 2;
  } catch (const h::UsageError& e) {
    std::cerr << "gmrf: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gmrf: error: " << e.what() << "\n";
    return 1;
  }
}
