/**
 * @file moprior.cpp
 * @brief CLI for the moprior pipeline: phantom -> simulate -> train -> eval -> plot.
 *
 * Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
 */

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moprior/cli/commands.hpp"
#include "moprior/cli/config.hpp"

using namespace moprior;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string in_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const GlobalOpts& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = RunConfig::load(g.config_path);
  for (const std::string& s : g.overrides) cfg.apply_override(s);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (!g.in_dir.empty()) cfg.dataset.clean_dir = g.in_dir;
  return cfg;
}

void add_common(CLI::App* cmd, GlobalOpts& g, bool with_in) {
  cmd->add_option("--config", g.config_path, "JSON run configuration");
  cmd->add_option("--set", g.overrides, "Override a config key, e.g. --set train.lr=0.001")
      ->take_all();
  cmd->add_option("--out", g.out_dir, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", g.seed, "Global seed (overrides seed)")
      ->each([&g](const std::string&) { g.seed_set = true; });
  if (with_in) cmd->add_option("--in", g.in_dir, "Input dataset directory");
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"moprior - prior-conditioned retrospective motion correction for MRI"};
  app.require_subcommand(1);

  GlobalOpts g;

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic multi-contrast dataset");
  add_common(phantom, g, false);

  auto* simulate = app.add_subcommand("simulate", "Corrupt the target contrast with k-space motion");
  add_common(simulate, g, true);

  auto* train = app.add_subcommand("train", "Train a correction model on prepared samples");
  add_common(train, g, false);

  std::vector<std::string> checkpoint_args;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints against the corrupted baseline");
  add_common(eval, g, false);
  eval->add_option("--checkpoint", checkpoint_args, "Model checkpoint (repeatable)")->take_all();

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot", "Re-render the box plot from an eval directory");
  plot->add_option("--in", plot_in, "Eval output directory")->required();
  plot->add_option("--out", plot_out, "Plot output directory")->required();

  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> warnings;
  try {
    if (phantom->parsed()) {
      cmd_phantom(resolve_config(g), &warnings);
    } else if (simulate->parsed()) {
      cmd_simulate(resolve_config(g), &warnings);
    } else if (train->parsed()) {
      cmd_train(resolve_config(g), &warnings);
    } else if (eval->parsed()) {
      std::vector<std::filesystem::path> checkpoints(checkpoint_args.begin(), checkpoint_args.end());
      cmd_eval(resolve_config(g), checkpoints, &warnings);
    } else if (plot->parsed()) {
      cmd_plot(plot_in, plot_out);
    }
  } catch (const ConfigError& e) {
    print_warnings(warnings);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_warnings(warnings);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  print_warnings(warnings);
  return 0;
}
