#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaview/commands.hpp"
#include "metaview/config.hpp"
#include "metaview/error.hpp"
#include "metaview/io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(metaview::ErrorKind kind) {
  switch (kind) {
    case metaview::ErrorKind::config: return kExitConfig;
    case metaview::ErrorKind::numeric: return kExitNumeric;
    case metaview::ErrorKind::data:
    case metaview::ErrorKind::io: return kExitData;
  }
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned viewport prediction and 360-degree streaming simulation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode = "all";
  std::optional<std::size_t> k;
  bool tile_mode = false;
  app.add_option("--config", config_path, "Config file (key = value lines)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--mode", mode, "Adaptation mode for simulate")
      ->check(CLI::IsMember({"full", "partial", "frozen", "all"}));
  app.add_option("--k", k, "Neighbors for the kNN baseline");
  app.add_flag("--tile-mode", tile_mode, "Also account prefetching on the tile grid");

  CLI::App* gen = app.add_subcommand("gen-traces", "Write the synthetic trace cohort");
  CLI::App* train = app.add_subcommand("train-meta", "Meta-train the prediction models");
  CLI::App* sim = app.add_subcommand("simulate", "Stream every trace through the simulator");
  CLI::App* eval = app.add_subcommand("evaluate", "Compare methods and write the report");
  CLI::App* flops = app.add_subcommand("flops", "Print per-step FLOPs and the battery estimate");
  CLI::App* show = app.add_subcommand("show-config", "Print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    metaview::RunConfig config;
    if (!config_path.empty()) config = metaview::parse_config(metaview::read_file(config_path));
    if (seed) config.seed = *seed;
    if (k) config.knn_k = *k;
    if (tile_mode) config.tile_mode = true;
    if (mode != "all") config.mode = metaview::parse_adapt_mode(mode);
    if (const char* dir = std::getenv("METAVIEW_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
      config.output_dir = dir;
    }
    config.validate();

    if (gen->parsed()) {
      metaview::cmd_gen_traces(config, std::cout);
    } else if (train->parsed()) {
      metaview::cmd_train_meta(config, std::cout);
    } else if (sim->parsed()) {
      std::vector<metaview::AdaptMode> modes;
      if (mode == "all") {
        modes = {metaview::AdaptMode::full, metaview::AdaptMode::partial,
                 metaview::AdaptMode::frozen};
      } else {
        modes = {config.mode};
      }
      metaview::cmd_simulate(config, modes, std::cout);
    } else if (eval->parsed()) {
      metaview::cmd_evaluate(config, std::cout);
    } else if (flops->parsed()) {
      metaview::cmd_flops(config, std::cout);
    } else if (show->parsed()) {
      std::cout << metaview::emit_config(config);
    }
  } catch (const metaview::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
