#include <stdexcept>

#include "gnasforge/network.hpp"
#include "gnasforge/ops.hpp"
#include "gnasforge/search.hpp"

namespace gnasforge {
using nlohmann::json;

NodeLabels labels_of(const Graph& graph) {
  NodeLabels out;
  out.task = graph.task();
  out.num_classes = graph.num_classes();
  if (out.task == TaskKind::Single) {
    out.classes = graph.labels();
  } else {
    out.matrix = graph.label_matrix();
  }
  return out;
}

namespace {

void check_mask(std::span<const std::size_t> mask, std::size_t rows, const char* who) {
  if (mask.empty()) throw std::invalid_argument(std::string(who) + ": empty mask");
  for (std::size_t n : mask) {
    if (n >= rows) {
      throw std::out_of_range(std::string(who) + ": mask node " + std::to_string(n) +
                              " outside " + std::to_string(rows) + " rows");
    }
  }
}

Tensor masked_targets(const NodeLabels& labels, std::span<const std::size_t> mask) {
  Tensor y = Tensor::matrix(mask.size(), labels.num_classes, 0.0);
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (labels.task == TaskKind::Single) {
      y(r, labels.classes.at(mask[r])) = 1.0;
    } else {
      for (std::size_t c = 0; c < labels.num_classes; ++c) y(r, c) = labels.matrix(mask[r], c);
    }
  }
  return y;
}

}  // namespace

Var compute_loss(Var logits, const NodeLabels& labels, std::span<const std::size_t> mask) {
  check_mask(mask, logits.rows(), "compute_loss");
  if (logits.cols() != labels.num_classes) {
    throw std::invalid_argument("compute_loss: logits have " + std::to_string(logits.cols()) +
                                " columns for " + std::to_string(labels.num_classes) + " classes");
  }
  Tape& tape = *logits.tape();
  const Var x = ops::gather_rows(logits, mask);
  const Var y = tape.constant(masked_targets(labels, mask));
  if (labels.task == TaskKind::Single) {
    const double n = static_cast<double>(mask.size());
    return ops::scale(ops::sum(ops::mul(ops::log_softmax_rows(x), y)), -1.0 / n);
  }
  // softplus(x) - x y is the sigmoid cross-entropy written without log(0).
  return ops::mean(ops::sub(ops::softplus(x), ops::mul(x, y)));
}

double evaluate(const Tensor& logits, const NodeLabels& labels, std::span<const std::size_t> mask) {
  check_mask(mask, logits.rows(), "evaluate");
  const std::size_t c = logits.cols();
  if (labels.task == TaskKind::Single) {
    std::size_t correct = 0;
    for (std::size_t n : mask) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (logits(n, k) > logits(n, best)) best = k;
      if (best == labels.classes.at(n)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(mask.size());
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t n : mask) {
    for (std::size_t k = 0; k < c; ++k) {
      // sigmoid(x) > 0.5 exactly when x > 0
      const bool predicted = logits(n, k) > 0.0;
      const bool actual = labels.matrix(n, k) > 0.5;
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

void MetricsLog::append(MetricsRecord r) {
  if (!records.empty() && r.epoch != records.back().epoch + 1) {
    throw std::logic_error("MetricsLog: epoch " + std::to_string(r.epoch) + " follows " +
                           std::to_string(records.back().epoch));
  }
  records.push_back(std::move(r));
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const MetricsRecord& r : records) {
    json index = json::array();
    for (const auto& layer : r.index) index.push_back(layer);
    json gates = json::array();
    for (std::size_t i = 0; r.gates.numel() > 0 && i < r.gates.rows(); ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < r.gates.cols(); ++j) row.push_back(r.gates(i, j));
      gates.push_back(std::move(row));
    }
    const json line = {{"hidden", hidden},           {"epoch", r.epoch},           {"tau", r.tau},
                       {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                       {"val_metric", r.val_metric}, {"index", std::move(index)},
                       {"gates", std::move(gates)}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace gnasforge
