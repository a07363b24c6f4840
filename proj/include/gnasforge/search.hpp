#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gnasforge/adam.hpp"
#include "gnasforge/genotype.hpp"
#include "gnasforge/graph.hpp"
#include "gnasforge/macro_router.hpp"
#include "gnasforge/micro_space.hpp"
#include "gnasforge/network.hpp"

namespace gnasforge {

struct RetrainConfig {
  std::int64_t epochs = 200;
  std::int64_t patience = 50;
  AdamConfig optimizer{0.005, 0.9, 0.999, 1e-8, 5e-4};
  std::vector<std::size_t> frozen_blocks;
};

struct SearchConfig {
  std::size_t layers = 2;
  std::vector<std::size_t> hidden_sizes{64, 128, 256, 512};
  std::int64_t max_iter = 400;
  std::int64_t train_steps = 10;
  AdamConfig w_optimizer{0.001, 0.9, 0.999, 1e-8, 1e-4};
  AdamConfig a_optimizer{0.001, 0.9, 0.999, 1e-8, 1e-8};
  TempSchedule schedule;  // e_max is overwritten with max_iter
  std::uint64_t seed = 0;
  bool router_enabled = true;
  CandidateLists candidates;
  /// Blocks whose weights stay at their initial values during search and
  /// retraining.
  std::vector<std::size_t> frozen_blocks;
  RetrainConfig retrain;

  /// Preset for the transductive citation setting: higher learning rates,
  /// 30 unrolled steps and the cosine-then-exponential schedule.
  static SearchConfig semi_supervised();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  TempSchedule resolved_schedule() const;
};

struct MetricsRecord {
  std::int64_t epoch = 0;
  double tau = 1.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  OperatorIndex index;
  Tensor gates;  // sigmoid(theta) on and above the diagonal; empty without router
};

struct MetricsLog {
  std::size_t hidden = 0;  // written into every line
  std::vector<MetricsRecord> records;

  void append(MetricsRecord r);
  std::string to_jsonl() const;
};

struct SearchCounters {
  std::int64_t w_updates = 0;
  std::int64_t micro_updates = 0;
  std::int64_t macro_updates = 0;
};

struct SearchResult {
  std::size_t hidden = 0;
  Genotype genotype;
  MetricsLog log;
  /// Supernet val metric evaluated at the derived genotype.
  double val_metric = 0.0;
  SearchCounters counters;
  std::shared_ptr<Supernet> supernet;
  std::map<std::string, std::int64_t> optimizer_steps;
};

/// Seed of the dual search run for the k-th grid entry.
std::uint64_t grid_seed(std::uint64_t seed, std::size_t k);

/// Alternates TrainStep weight updates on the train mask with one controller
/// update and one routing-prior update on the val mask, per epoch.
SearchResult dual_search(const SearchConfig& config, const Graph& graph, std::size_t hidden);

/// Genotype from the noise-free controller argmax and the prior signs.
Genotype derive_genotype(const Supernet& net, std::uint64_t seed);

struct RetrainResult {
  std::shared_ptr<GenotypeNetwork> network;  // weights restored to the best-val epoch
  double train_metric = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  std::int64_t best_epoch = 0;
  std::int64_t epochs_run = 0;
};

RetrainResult retrain_genotype(const Genotype& genotype, const Graph& graph,
                               const RetrainConfig& config, std::uint64_t seed);

struct Evaluation {
  double train = 0.0, val = 0.0, test = 0.0;
};
Evaluation evaluate_network(const GenotypeNetwork& net, const Graph& graph);

struct GridResult {
  std::vector<SearchResult> runs;  // grid order
  std::size_t best = 0;

  const SearchResult& best_run() const { return runs.at(best); }
};

/// One dual search per hidden size, run on up to `threads` threads. Picks the
/// largest val metric; ties go to the smaller hidden size.
GridResult grid_search_hidden(const SearchConfig& config, const Graph& graph,
                              std::size_t threads = 1);

/// GNASFORGE_THREADS, defaulting to 1.
std::size_t threads_from_env();

}  // namespace gnasforge
