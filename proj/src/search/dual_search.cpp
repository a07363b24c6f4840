#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "gnasforge/controller.hpp"
#include "gnasforge/ops.hpp"
#include "gnasforge/search.hpp"

namespace gnasforge {

SearchConfig SearchConfig::semi_supervised() {
  SearchConfig c;
  c.train_steps = 30;
  c.w_optimizer.lr = 0.005;
  c.w_optimizer.weight_decay = 5e-4;
  c.a_optimizer.lr = 0.002;
  c.a_optimizer.weight_decay = 1e-8;
  c.schedule.kind = TempSchedule::Kind::CosineExp;
  return c;
}

void SearchConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: " + field + " " + why);
  };
  if (layers < 2) fail("layers", "must be at least 2");
  if (max_iter < 1) fail("max_iter", "must be at least 1");
  if (train_steps < 1) fail("train_steps", "must be at least 1");
  if (hidden_sizes.empty()) fail("hidden_sizes", "must not be empty");
  for (std::size_t h : hidden_sizes) {
    if (h == 0 || h % 16 != 0) fail("hidden_sizes", "entry " + std::to_string(h) + " is not a positive multiple of 16");
    candidates.validate(h);
  }
  for (std::size_t b : frozen_blocks)
    if (b >= layers) fail("frozen_blocks", "entry " + std::to_string(b) + " is not a layer");
  if (w_optimizer.lr <= 0 || a_optimizer.lr <= 0) fail("lr", "must be positive");
  if (retrain.epochs < 1) fail("retrain.epochs", "must be at least 1");
  if (retrain.patience < 1) fail("retrain.patience", "must be at least 1");
  if (schedule.tau_min <= 0 || schedule.tau_min > 1) fail("schedule.tau_min", "must lie in (0, 1]");
  if (schedule.kind == TempSchedule::Kind::CosineExp) schedule.omega_value();
}

TempSchedule SearchConfig::resolved_schedule() const {
  TempSchedule s = schedule;
  s.e_max = max_iter;
  return s;
}

std::uint64_t grid_seed(std::uint64_t seed, std::size_t k) { return seed + k; }

namespace {

constexpr std::uint64_t kSearchStreamSalt = 0x9e3779b97f4a7c15ULL;

void check_finite(const Var& loss, const Gradients& grads, std::int64_t epoch, const char* phase) {
  if (!std::isfinite(loss.value().item())) {
    throw std::runtime_error("non-finite " + std::string(phase) + " loss at epoch " +
                             std::to_string(epoch) + " (tensor: loss)");
  }
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) {
      throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch) + " (" +
                               phase + " step, tensor: " + name + ")");
    }
  }
}

std::vector<Selection> selections(const ProbabilityTensor& p, const OperatorIndex& index) {
  std::vector<Selection> out;
  for (std::size_t i = 0; i < index.size(); ++i) out.push_back(selection_for_layer(p, index, i));
  return out;
}

std::vector<SubBlockScales> chosen_probabilities(const ProbabilityVars& p, const OperatorIndex& index) {
  std::vector<SubBlockScales> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (std::size_t k = 0; k < kSubBlockCount; ++k) {
      const std::size_t t = index[i][k];
      out[i].factor[k] = ops::slice_cols(p[i][k], t, t + 1);
    }
  }
  return out;
}

OperatorIndex noise_free_index(const Supernet& net) {
  return extract_indices(net.controller().probabilities(net.micro()));
}

}  // namespace

Genotype derive_genotype(const Supernet& net, std::uint64_t seed) {
  const SearchSpace& s = net.space();
  const OperatorIndex index = noise_free_index(net);
  Genotype g;
  for (std::size_t i = 0; i < s.layers; ++i) {
    std::array<std::size_t, kSubBlockCount> idx{};
    std::copy(index[i].begin(), index[i].end(), idx.begin());
    g.layers.push_back(s.candidates.choice(idx));
  }
  if (s.router_enabled) g.routing = derive_binary_routing(net.macro().value(net.router().theta_name()));
  g.hidden_sizes.assign(s.layers, s.hidden);
  g.seed = seed;
  return g;
}

SearchResult dual_search(const SearchConfig& config, const Graph& graph, std::size_t hidden) {
  config.validate();
  if (!graph.has_masks()) throw std::invalid_argument("dual_search: graph has no train/val/test masks");
  const auto& train = graph.mask(Split::Train);
  const auto& val = graph.mask(Split::Val);
  if (train.empty() || val.empty()) throw std::invalid_argument("dual_search: empty train or val mask");

  SearchSpace space{config.layers, hidden, graph.feature_dim(), graph.num_classes(),
                    config.candidates, config.router_enabled};
  auto net = std::make_shared<Supernet>(space, config.seed);
  for (std::size_t b : config.frozen_blocks) net->freeze_block(b);

  Rng rng(config.seed ^ kSearchStreamSalt);
  const NodeLabels labels = labels_of(graph);
  const TempSchedule schedule = config.resolved_schedule();
  Adam w_opt(config.w_optimizer), micro_opt(config.a_optimizer), macro_opt(config.a_optimizer);
  const ControllerLayout& layout = net->controller().layout();

  SearchResult result;
  result.hidden = hidden;
  result.log.hidden = hidden;
  auto gates_for = [&](Tape& tape, double tau) {
    return config.router_enabled ? net->router().sampled_gates(tape, net->macro(), tau, rng)
                                 : Gates(config.layers);
  };

  for (std::int64_t e = 0; e < config.max_iter; ++e) {
    const double tau = temp_anneal(e, schedule);
    const ProbabilityTensor noise = sample_exploration_noise(layout, rng);
    const ProbabilityTensor p_bar = net->controller().probabilities(net->micro());
    ProbabilityTensor p_g;
    for (std::size_t i = 0; i < p_bar.size(); ++i) {
      std::array<Tensor, kSubBlockCount> layer;
      for (std::size_t k = 0; k < kSubBlockCount; ++k) layer[k] = add_noise(p_bar[i][k], tau, noise[i][k]);
      p_g.push_back(std::move(layer));
    }
    const OperatorIndex index = extract_indices(p_g);
    const std::vector<Selection> sel = selections(p_g, index);

    MetricsRecord record;
    record.epoch = e;
    record.tau = tau;
    record.index = index;

    for (std::int64_t s = 0; s < config.train_steps; ++s) {
      Tape tape;
      const Gates gates = gates_for(tape, tau);
      const Var logits = net->forward(tape, graph, sel, ScaleMode::Detached, nullptr, &gates);
      const Var loss = compute_loss(logits, labels, train);
      Gradients grads = tape.backward(loss);
      check_finite(loss, grads, e, "train");
      w_opt.step(net->weights(), grads);
      ++result.counters.w_updates;
      record.train_loss = loss.value().item();
    }

    {
      Tape tape;
      const ProbabilityVars p_bar_vars = net->controller().forward(tape, net->micro());
      const ProbabilityVars p_vars = add_noise(p_bar_vars, tau, noise);
      const std::vector<SubBlockScales> scales = chosen_probabilities(p_vars, index);
      const Gates gates = gates_for(tape, tau);
      const Var logits = net->forward(tape, graph, sel, ScaleMode::Attached, &scales, &gates);
      const Var loss = compute_loss(logits, labels, val);
      Gradients grads = tape.backward(loss);
      check_finite(loss, grads, e, "architecture");
      micro_opt.step(net->micro(), grads);
      ++result.counters.micro_updates;
      macro_opt.step(net->macro(), grads);
      ++result.counters.macro_updates;
      record.val_loss = loss.value().item();
      record.val_metric = evaluate(logits.value(), labels, val);
    }

    if (config.router_enabled) record.gates = expected_gates(net->macro().value(net->router().theta_name()));
    result.log.append(std::move(record));
  }

  result.genotype = derive_genotype(*net, config.seed);
  {
    Tape tape;
    const OperatorIndex index = noise_free_index(*net);
    const std::vector<Selection> sel = selections(net->controller().probabilities(net->micro()), index);
    const Gates gates = net->router().binary_gates(result.genotype.routing);
    const Var logits = net->forward(tape, graph, sel, ScaleMode::Detached, nullptr, &gates);
    result.val_metric = evaluate(logits.value(), labels, val);
  }
  result.optimizer_steps = {{"w", w_opt.steps()},
                            {"a_micro", micro_opt.steps()},
                            {"a_macro", macro_opt.steps()}};
  result.supernet = std::move(net);
  return result;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("GNASFORGE_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) {
    throw std::invalid_argument(std::string("GNASFORGE_THREADS: expected a positive integer, got \"") + v + "\"");
  }
  return static_cast<std::size_t>(n);
}

GridResult grid_search_hidden(const SearchConfig& config, const Graph& graph, std::size_t threads) {
  config.validate();
  const std::size_t n = config.hidden_sizes.size();
  GridResult grid;
  grid.runs.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        SearchConfig c = config;
        c.seed = grid_seed(config.seed, k);
        grid.runs[k] = dual_search(c, graph, config.hidden_sizes[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t k = 1; k < n; ++k) {
    const SearchResult& a = grid.runs[k];
    const SearchResult& b = grid.runs[grid.best];
    if (a.val_metric > b.val_metric || (a.val_metric == b.val_metric && a.hidden < b.hidden)) grid.best = k;
  }
  return grid;
}

}  // namespace gnasforge
