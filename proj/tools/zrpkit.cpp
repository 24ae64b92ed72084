#include "zrp/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Zero-range process experiments: static limits, hydrodynamics, blocks, PDE, sampling, moments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int workers = 0;

  for (const char* name : {"static", "hydro", "blocks", "pde", "sample", "moments"}) {
    auto* sub = app.add_subcommand(name, std::string("run a ") + name + " experiment");
    sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the base seed");
    sub->add_option("--out", out_dir, "output directory (default: config output_dir)");
    sub->add_option("--workers", workers, "replica worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  }
  CLI11_PARSE(app, argc, argv);

  const std::string kind = app.get_subcommands().front()->get_name();
  try {
    auto config = zrp::ExperimentConfig::load(config_path);
    if (zrp::to_string(config.kind) != kind)
      throw std::invalid_argument("config " + config_path + " describes a '" +
                                  std::string(zrp::to_string(config.kind)) + "' experiment, not '" + kind + "'");
    if (seed) config.seed = *seed;
    const std::string dir = out_dir.empty() ? config.output_dir : out_dir;
    const int status = zrp::run(config, dir, workers);
    std::cout << config.id << ": " << (status == 0 ? "all checks passed" : "some checks FAILED") << " (" << dir
              << "/results.csv)\n";
    return status;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
