#include <cmath>
#include <limits>
#include <stdexcept>

#include "gnasforge/ops.hpp"
#include "gnasforge/search.hpp"

namespace gnasforge {

Evaluation evaluate_network(const GenotypeNetwork& net, const Graph& graph) {
  if (!graph.has_masks()) throw std::invalid_argument("evaluate: graph has no train/val/test masks");
  Tape tape;
  const Tensor logits = net.forward(tape, graph).value();
  const NodeLabels labels = labels_of(graph);
  auto metric = [&](Split s) {
    return graph.mask(s).empty() ? 0.0 : evaluate(logits, labels, graph.mask(s));
  };
  return {metric(Split::Train), metric(Split::Val), metric(Split::Test)};
}

RetrainResult retrain_genotype(const Genotype& genotype, const Graph& graph,
                               const RetrainConfig& config, std::uint64_t seed) {
  if (!graph.has_masks()) throw std::invalid_argument("retrain: graph has no train/val/test masks");
  const auto& train = graph.mask(Split::Train);
  const auto& val = graph.mask(Split::Val);
  const auto& test = graph.mask(Split::Test);
  if (train.empty() || val.empty() || test.empty()) {
    throw std::invalid_argument("retrain: train, val and test masks must all be non-empty");
  }
  if (config.epochs < 1 || config.patience < 1) {
    throw std::invalid_argument("retrain: epochs and patience must be at least 1");
  }

  auto net = std::make_shared<GenotypeNetwork>(genotype, graph.feature_dim(), graph.num_classes(), seed);
  for (std::size_t b : config.frozen_blocks) net->freeze_block(b);
  const NodeLabels labels = labels_of(graph);
  Adam opt(config.optimizer);

  RetrainResult result;
  ParameterStore best = net->params();
  double best_val = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t since_best = 0;
  for (std::int64_t e = 0; e < config.epochs; ++e) {
    Tape tape;
    const Var logits = net->forward(tape, graph);
    const double v = evaluate(logits.value(), labels, val);
    result.epochs_run = e + 1;
    // A tie on the metric counts as progress when the val loss drops.
    const double vl = compute_loss(ops::detach(logits), labels, val).value().item();
    if (v > best_val || (v == best_val && vl < best_val_loss)) {
      best_val = v;
      best_val_loss = vl;
      best = net->params();
      result.best_epoch = e;
      result.train_metric = evaluate(logits.value(), labels, train);
      result.val_metric = v;
      result.test_metric = evaluate(logits.value(), labels, test);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
    const Var loss = compute_loss(logits, labels, train);
    if (!std::isfinite(loss.value().item())) {
      throw std::runtime_error("retrain: non-finite loss at epoch " + std::to_string(e));
    }
    opt.step(net->params(), tape.backward(loss));
  }
  net->params() = best;
  result.network = std::move(net);
  return result;
}

}  // namespace gnasforge
