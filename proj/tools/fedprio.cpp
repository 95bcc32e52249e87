// fedprio command-line entry point: run, sweep, lr-search.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "fedprio/fedprio.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::filesystem::path output_dir(const std::string& flag, const fedprio::ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("FEDPRIO_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "fedprio_out";
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0)) throw fedprio::ConfigError("--grid: '" + item + "' is not a positive number");
    grid.push_back(v);
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with prioritized multi-criteria aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::size_t max_rounds = 0;
  bool max_rounds_set = false;
  std::string grid_text;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_flag, "Output directory (default: config output_dir, $FEDPRIO_OUT_DIR, ./fedprio_out)");
    sub->add_option_function<std::size_t>(
        "--max-rounds",
        [&](const std::size_t& n) {
          max_rounds = n;
          max_rounds_set = true;
        },
        "Override trainer.max_rounds");
  };
  auto* run = app.add_subcommand("run", "Run one experiment with the configured criteria ordering");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "Run the baseline, single-criterion runs and all priority permutations");
  add_common(sweep);
  auto* lr = app.add_subcommand("lr-search", "Pick the learning rate that lets the DS baseline reach the target first");
  add_common(lr);
  lr->add_option("--grid", grid_text, "Comma-separated learning rates, e.g. 0.01,0.05,0.1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    auto cfg = fedprio::parse_config(config_path);
    if (max_rounds_set) cfg.max_rounds = max_rounds;
    const auto out = output_dir(out_flag, cfg);
    const auto data = fedprio::prepare_data(cfg);
    std::cerr << "clients=" << data.clients.size() << " parameters=" << fedprio::parameter_count(data.spec) << '\n';

    if (run->parsed()) {
      const auto result = fedprio::run_single(cfg, data, cfg.ordering,
                                              fedprio::round_logger(std::cerr, fedprio::experiment_id(cfg.ordering)));
      fedprio::write_run_directory(out, cfg, data, result);
      std::cout << "wrote " << out.string() << '\n';
    } else if (sweep->parsed()) {
      if (!cfg.sweep) throw fedprio::ConfigError("sweep: section missing from config");
      const auto result = fedprio::run_sweep(
          cfg, data, [](const std::string& id) { return fedprio::round_logger(std::cerr, id); });
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      fedprio::write_sweep_directory(out, cfg, data, result);
      std::cout << "wrote " << result.runs.size() << " runs to " << out.string() << '\n';
    } else if (lr->parsed()) {
      std::vector<double> grid = grid_text.empty() ? std::vector<double>{} : parse_grid(grid_text);
      if (grid.empty() && cfg.lr_search) grid = cfg.lr_search->grid;
      if (grid.empty()) throw fedprio::ConfigError("lr-search: no grid given (--grid or lr_search.grid)");
      const double target = cfg.lr_search && cfg.lr_search->target ? *cfg.lr_search->target : cfg.targets.front();
      const double fraction = cfg.lr_search ? cfg.lr_search->fraction : 0.5;
      const auto result = fedprio::grid_search_lr(cfg, data, grid, target, fraction);
      fedprio::write_lr_search_directory(out, cfg, result);
      for (const auto& c : result.candidates)
        std::cerr << "learning_rate=" << c.learning_rate
                  << " rounds=" << (c.rounds ? std::to_string(*c.rounds) : std::string("NR")) << '\n';
      if (!result.chosen) {
        std::cout << "NOT-FOUND: no learning rate reached target " << target << " on " << fraction
                  << " of devices within " << cfg.max_rounds << " rounds\n";
        return kExitRuntime;
      }
      std::cout << "learning_rate=" << *result.chosen << '\n';
    }
  } catch (const fedprio::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
