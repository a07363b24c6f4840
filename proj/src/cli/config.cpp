#include <fstream>
#include <set>

#include "gnasforge/cli.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge::cli {
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads an object's keys once each; finish() rejects whatever was not read.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key \"" + path(it.key()) + "\"");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename E>
std::vector<E> parse_names(const json& list, const std::string& where, E (*parse)(const std::string&)) {
  if (!list.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<E> out;
  try {
    for (const json& v : list) out.push_back(parse(v.get<std::string>()));
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return out;
}

template <typename E>
json names(const std::vector<E>& v) {
  json out = json::array();
  for (E e : v) out.push_back(to_string(e));
  return out;
}

void read_adam(Fields& parent, const std::string& key, AdamConfig& c) {
  const json* j = parent.child(key);
  if (!j) return;
  Fields f(*j, parent.path(key));
  f.read("lr", c.lr);
  f.read("weight_decay", c.weight_decay);
  f.read("beta1", c.beta1);
  f.read("beta2", c.beta2);
  f.read("epsilon", c.epsilon);
  f.finish();
}

json adam_json(const AdamConfig& c) {
  return {{"lr", c.lr}, {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

void read_sbm(Fields& f, SbmParams& p) {
  f.read("classes", p.num_classes);
  f.read("per_class", p.nodes_per_class);
  f.read("p_in", p.p_in);
  f.read("p_out", p.p_out);
  f.read("feature_dim", p.feature_dim);
  f.read("feature_noise", p.feature_noise);
  f.read("seed", p.seed);
}

void read_dataset(const json& j, const fs::path& base, DatasetConfig& d) {
  Fields f(j, "dataset");
  std::string source = "sbm";
  f.read("source", source);
  if (source == "file") {
    d.source = DatasetConfig::Source::File;
    std::string p;
    f.read("path", p);
    if (p.empty()) throw ConfigError("dataset.path: required when dataset.source is \"file\"");
    d.path = fs::path(p).is_absolute() ? fs::path(p) : base / p;
  } else if (source == "sbm") {
    d.source = DatasetConfig::Source::Sbm;
    if (const json* s = f.child("sbm")) {
      Fields g(*s, "dataset.sbm");
      read_sbm(g, d.sbm);
      g.finish();
    }
  } else if (source == "chain") {
    d.source = DatasetConfig::Source::Chain;
    if (const json* s = f.child("chain")) {
      Fields g(*s, "dataset.chain");
      g.read("length", d.chain_length);
      g.read("depth", d.chain_depth);
      g.read("seed", d.chain_seed);
      g.finish();
    }
  } else {
    throw ConfigError("dataset.source: expected \"file\", \"sbm\" or \"chain\", got \"" + source + "\"");
  }
  f.child("path");
  f.child("sbm");
  f.child("chain");
  f.read("split", d.split);
  f.read("split_seed", d.split_seed);
  f.read("force_split", d.force_split);
  f.finish();
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig rc;
  Fields top(doc, "");
  top.read("preset", rc.preset);
  if (rc.preset == "semi_supervised") {
    rc.search = SearchConfig::semi_supervised();
  } else if (rc.preset != "fully_supervised") {
    throw ConfigError("preset: expected \"fully_supervised\" or \"semi_supervised\", got \"" + rc.preset + "\"");
  }
  SearchConfig& s = rc.search;
  top.read("layers", s.layers);
  top.read("hidden_sizes", s.hidden_sizes);
  top.read("max_iter", s.max_iter);
  top.read("train_steps", s.train_steps);
  top.read("seed", s.seed);
  top.read("router", s.router_enabled);
  top.read("frozen_blocks", s.frozen_blocks);
  read_adam(top, "w_optimizer", s.w_optimizer);
  read_adam(top, "a_optimizer", s.a_optimizer);

  if (const json* j = top.child("schedule")) {
    Fields f(*j, "schedule");
    std::string kind = to_string(s.schedule.kind);
    f.read("kind", kind);
    try {
      s.schedule.kind = parse_schedule_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("schedule.kind: ") + e.what());
    }
    f.read("alpha", s.schedule.alpha);
    f.read("e_start", s.schedule.e_start);
    f.read("e_cos", s.schedule.e_cos);
    f.read("e_exp", s.schedule.e_exp);
    if (const json* o = f.child("omega")) {
      if (!o->is_number()) throw ConfigError("schedule.omega: expected a number");
      s.schedule.omega = o->get<double>();
    }
    f.read("tau_min", s.schedule.tau_min);
    f.finish();
  }

  if (const json* j = top.child("candidates")) {
    Fields f(*j, "candidates");
    CandidateLists& c = s.candidates;
    f.read("expansion", c.expansions);
    f.read("heads", c.heads);
    if (const json* v = f.child("attention")) c.attentions = parse_names(*v, "candidates.attention", parse_attention);
    if (const json* v = f.child("aggregate")) c.aggregators = parse_names(*v, "candidates.aggregate", parse_aggregator);
    if (const json* v = f.child("activation")) c.activations = parse_names(*v, "candidates.activation", parse_activation);
    f.finish();
  }

  if (const json* j = top.child("retrain")) {
    Fields f(*j, "retrain");
    f.read("epochs", s.retrain.epochs);
    f.read("patience", s.retrain.patience);
    f.read("frozen_blocks", s.retrain.frozen_blocks);
    read_adam(f, "optimizer", s.retrain.optimizer);
    f.finish();
  }

  // Fixed slopes are echoed into resolved configs; accept them back unchanged.
  if (const json* j = top.child("constants")) {
    Fields f(*j, "constants");
    double att = ops::kAttentionLeakySlope, act = ops::kActivationLeakySlope;
    f.read("attention_leaky_slope", att);
    f.read("activation_leaky_slope", act);
    f.finish();
    if (att != ops::kAttentionLeakySlope || act != ops::kActivationLeakySlope) {
      throw ConfigError("constants: the LeakyReLU slopes are fixed and cannot be changed");
    }
  }

  rc.dataset.split_seed = s.seed;
  if (const json* j = top.child("dataset")) read_dataset(*j, base_dir, rc.dataset);
  top.finish();

  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json run_config_to_json(const RunConfig& rc) {
  const SearchConfig& s = rc.search;
  const CandidateLists& c = s.candidates;
  json schedule = {{"kind", to_string(s.schedule.kind)},
                   {"alpha", s.schedule.alpha},
                   {"e_start", s.schedule.e_start},
                   {"e_cos", s.schedule.e_cos},
                   {"e_exp", s.schedule.e_exp},
                   {"omega", s.schedule.omega || s.schedule.e_exp > s.schedule.e_cos
                                 ? json(s.schedule.omega_value())
                                 : json(nullptr)},
                   {"tau_min", s.schedule.tau_min}};
  json dataset = {{"split", rc.dataset.split},
                  {"split_seed", rc.dataset.split_seed},
                  {"force_split", rc.dataset.force_split}};
  switch (rc.dataset.source) {
    case DatasetConfig::Source::File:
      dataset["source"] = "file";
      dataset["path"] = rc.dataset.path.string();
      break;
    case DatasetConfig::Source::Sbm: {
      const SbmParams& p = rc.dataset.sbm;
      dataset["source"] = "sbm";
      dataset["sbm"] = {{"classes", p.num_classes}, {"per_class", p.nodes_per_class},
                        {"p_in", p.p_in},           {"p_out", p.p_out},
                        {"feature_dim", p.feature_dim}, {"feature_noise", p.feature_noise},
                        {"seed", p.seed}};
      break;
    }
    case DatasetConfig::Source::Chain:
      dataset["source"] = "chain";
      dataset["chain"] = {{"length", rc.dataset.chain_length},
                          {"depth", rc.dataset.chain_depth},
                          {"seed", rc.dataset.chain_seed}};
      break;
  }
  return {{"preset", rc.preset},
          {"layers", s.layers},
          {"hidden_sizes", s.hidden_sizes},
          {"max_iter", s.max_iter},
          {"train_steps", s.train_steps},
          {"seed", s.seed},
          {"router", s.router_enabled},
          {"frozen_blocks", s.frozen_blocks},
          {"w_optimizer", adam_json(s.w_optimizer)},
          {"a_optimizer", adam_json(s.a_optimizer)},
          {"schedule", std::move(schedule)},
          {"candidates",
           {{"expansion", c.expansions},
            {"attention", names(c.attentions)},
            {"heads", c.heads},
            {"aggregate", names(c.aggregators)},
            {"activation", names(c.activations)}}},
          {"retrain",
           {{"epochs", s.retrain.epochs},
            {"patience", s.retrain.patience},
            {"frozen_blocks", s.retrain.frozen_blocks},
            {"optimizer", adam_json(s.retrain.optimizer)}}},
          {"dataset", std::move(dataset)},
          {"constants",
           {{"attention_leaky_slope", ops::kAttentionLeakySlope},
            {"activation_leaky_slope", ops::kActivationLeakySlope}}}};
}

Graph load_dataset(const DatasetConfig& d) {
  Graph g;
  switch (d.source) {
    case DatasetConfig::Source::File:
      if (!fs::exists(d.path)) throw ConfigError("dataset file not found: " + d.path.string());
      g = load_graph_json(d.path);
      break;
    case DatasetConfig::Source::Sbm:
      g = generate_sbm(d.sbm).graph;
      break;
    case DatasetConfig::Source::Chain:
      g = generate_chain_task(d.chain_length, d.chain_depth, d.chain_seed).graph;
      break;
  }
  if (d.force_split || !g.has_masks()) g = random_split(g, d.split, d.split_seed);
  return g;
}

}  // namespace gnasforge::cli
