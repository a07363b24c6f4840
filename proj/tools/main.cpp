#include <CLI11.hpp>
#include <iostream>

#include "gnasforge/cli.hpp"

namespace cli = gnasforge::cli;

int main(int argc, char** argv) {
  CLI::App app{"Differentiable micro/macro architecture search for graph neural networks"};
  app.require_subcommand(1);

  std::string config, out = "out", genotype, data, checkpoint;
  std::optional<std::uint64_t> seed;

  auto* search = app.add_subcommand("search", "Run the dual search over the hidden-size grid");
  search->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  search->add_option("--seed", seed, "Override the config seed");
  search->add_option("--out", out, "Output directory")->capture_default_str();

  auto* retrain = app.add_subcommand("retrain", "Retrain a genotype from fresh weights");
  retrain->add_option("--genotype", genotype, "genotype.json")->required()->check(CLI::ExistingFile);
  retrain->add_option("--config", config, "Run config supplying dataset and retraining settings");
  retrain->add_option("--data", data, "Graph JSON (overrides the config dataset)");
  retrain->add_option("--seed", seed, "Weight-init seed (defaults to the genotype seed)");
  retrain->add_option("--out", out, "Output directory")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Print train/val/test metrics of a retrained model");
  eval->add_option("--checkpoint", checkpoint, "Model directory written by retrain")->required();
  eval->add_option("--config", config, "Run config supplying the dataset");
  eval->add_option("--data", data, "Graph JSON (overrides the config dataset)");

  cli::GenDataOptions gen;
  std::string gen_out = "graph.json";
  auto* gen_data = app.add_subcommand("gen-data", "Write a synthetic graph as Graph JSON");
  gen_data->add_option("--kind", gen.kind, "sbm or chain")->check(CLI::IsMember({"sbm", "chain"}))->capture_default_str();
  gen_data->add_option("--classes", gen.sbm.num_classes, "SBM blocks")->capture_default_str();
  gen_data->add_option("--per-class", gen.sbm.nodes_per_class, "Nodes per SBM block")->capture_default_str();
  gen_data->add_option("--p-in", gen.sbm.p_in, "Within-block edge probability")->capture_default_str();
  gen_data->add_option("--p-out", gen.sbm.p_out, "Between-block edge probability")->capture_default_str();
  gen_data->add_option("--feature-dim", gen.sbm.feature_dim, "SBM feature width")->capture_default_str();
  gen_data->add_option("--feature-noise", gen.sbm.feature_noise, "SBM feature noise std")->capture_default_str();
  gen_data->add_option("--length", gen.chain_length, "Chain task node count")->capture_default_str();
  gen_data->add_option("--depth", gen.chain_depth, "Chain task block depth")->capture_default_str();
  gen_data->add_option("--seed", gen.seed, "Generator and split seed")->capture_default_str();
  gen_data->add_option("--split", gen.split, "Train/val/test ratios")->expected(3)->capture_default_str();
  gen_data->add_flag("!--no-split", gen.with_split, "Leave the masks empty");
  gen_data->add_option("--out", gen_out, "Output file")->capture_default_str();

  std::string op = "all";
  std::uint64_t check_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gradcheck->add_option("operator", op, "all, a group, or an entry name")->capture_default_str();
  gradcheck->add_option("--seed", check_seed, "Instance seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfigError;
  }

  auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
  };
  if (*search) return cli::cmd_search(config, seed, out, std::cerr);
  if (*retrain) return cli::cmd_retrain(genotype, opt_path(config), opt_path(data), seed, out, std::cerr);
  if (*eval) return cli::cmd_eval(checkpoint, opt_path(config), opt_path(data), std::cout, std::cerr);
  if (*gen_data) return cli::cmd_gen_data(gen, gen_out, std::cerr);
  return cli::cmd_gradcheck(op, check_seed, std::cout, std::cerr);
}
