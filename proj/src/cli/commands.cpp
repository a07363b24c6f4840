#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "gnasforge/checkpoint.hpp"
#include "gnasforge/cli.hpp"
#include "gnasforge/gradcheck_suite.hpp"
#include "gnasforge/kernels.hpp"

namespace gnasforge::cli {
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Log lines carry wall-clock time; artifacts never do.
std::ostream& stamp(std::ostream& log) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  return log << '[' << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << "] ";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string metric_name(const Graph& g) { return g.task() == TaskKind::Single ? "accuracy" : "micro_f1"; }

template <typename F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitModuleError;
  }
}

RunConfig config_or_default(const std::optional<fs::path>& config, const std::optional<fs::path>& data) {
  RunConfig rc = config ? load_run_config(*config) : RunConfig{};
  if (data) {
    rc.dataset.source = DatasetConfig::Source::File;
    rc.dataset.path = fs::absolute(*data);
  } else if (!config) {
    throw ConfigError("a dataset is required: pass --config or --data");
  }
  return rc;
}

}  // namespace

int cmd_search(const fs::path& config, std::optional<std::uint64_t> seed, const fs::path& out,
               std::ostream& log) {
  return guarded(log, [&] {
    RunConfig rc = load_run_config(config);
    if (seed) rc.search.seed = *seed;
    const Graph graph = load_dataset(rc.dataset);
    make_dir(out);
    write_json(out / "resolved_config.json", run_config_to_json(rc));

    const std::size_t threads = threads_from_env();
    stamp(log) << "search: " << graph.num_nodes() << " nodes, " << graph.num_edges() << " directed edges, "
               << rc.search.hidden_sizes.size() << " hidden size(s), " << threads << " thread(s), kernels "
               << kernels::isa_name(kernels::active().isa) << '\n';
    const GridResult grid = grid_search_hidden(rc.search, graph, threads);

    std::string lines;
    json summary = json::array();
    for (const SearchResult& r : grid.runs) {
      lines += r.log.to_jsonl();
      summary.push_back({{"hidden", r.hidden}, {"val_metric", r.val_metric}});
      stamp(log) << "hidden " << r.hidden << ": val " << metric_name(graph) << " " << r.val_metric << '\n';
      for (const std::string& w : r.supernet->router().warnings()) stamp(log) << "warning: " << w << '\n';
    }
    const SearchResult& best = grid.best_run();
    save_genotype(out / "genotype.json", best.genotype);
    write_text(out / "metrics.jsonl", lines);
    write_json(out / "grid.json", {{"metric", metric_name(graph)}, {"runs", summary}, {"best_hidden", best.hidden}});
    save_checkpoint(out / "checkpoint",
                    {&best.supernet->weights(), &best.supernet->micro(), &best.supernet->macro()},
                    best.optimizer_steps);
    stamp(log) << "search: best hidden size " << best.hidden << ", artifacts in " << out.string() << '\n';
    return kExitOk;
  });
}

int cmd_retrain(const fs::path& genotype_path, const std::optional<fs::path>& config,
                const std::optional<fs::path>& data, std::optional<std::uint64_t> seed, const fs::path& out,
                std::ostream& log) {
  return guarded(log, [&] {
    const RunConfig rc = config_or_default(config, data);
    const Genotype genotype = load_genotype(genotype_path);
    const Graph graph = load_dataset(rc.dataset);
    const std::uint64_t s = seed.value_or(genotype.seed);
    stamp(log) << "retrain: " << genotype.layers.size() << " layers, seed " << s << '\n';
    const RetrainResult r = retrain_genotype(genotype, graph, rc.search.retrain, s);
    make_dir(out);
    const fs::path model = out / "model";
    save_checkpoint(model, {&r.network->params()}, {});
    save_genotype(model / "genotype.json", genotype);
    write_json(out / "retrain_report.json", {{"metric", metric_name(graph)},
                                             {"train", r.train_metric},
                                             {"val", r.val_metric},
                                             {"test", r.test_metric},
                                             {"best_epoch", r.best_epoch},
                                             {"epochs_run", r.epochs_run},
                                             {"seed", s}});
    stamp(log) << "retrain: test " << metric_name(graph) << " " << r.test_metric << " (best epoch "
               << r.best_epoch << ")\n";
    return kExitOk;
  });
}

int cmd_eval(const fs::path& checkpoint, const std::optional<fs::path>& config,
             const std::optional<fs::path>& data, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const RunConfig rc = config_or_default(config, data);
    const fs::path genotype_path = checkpoint / "genotype.json";
    if (!fs::exists(genotype_path)) {
      throw std::runtime_error("checkpoint " + checkpoint.string() + " has no genotype.json (expected a retrained model)");
    }
    const Genotype genotype = load_genotype(genotype_path);
    const Graph graph = load_dataset(rc.dataset);
    GenotypeNetwork net(genotype, graph.feature_dim(), graph.num_classes(), genotype.seed);
    restore_parameters(net.params(), load_checkpoint(checkpoint));
    const Evaluation e = evaluate_network(net, graph);
    out << json{{"metric", metric_name(graph)}, {"train", e.train}, {"val", e.val}, {"test", e.test}}.dump() << '\n';
    return kExitOk;
  });
}

int cmd_gen_data(const GenDataOptions& o, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    Graph g;
    if (o.kind == "sbm") {
      SbmParams p = o.sbm;
      p.seed = o.seed;
      g = generate_sbm(p).graph;
    } else if (o.kind == "chain") {
      g = generate_chain_task(o.chain_length, o.chain_depth, o.seed).graph;
    } else {
      throw ConfigError("gen-data: kind must be \"sbm\" or \"chain\", got \"" + o.kind + "\"");
    }
    if (o.with_split) g = random_split(g, o.split, o.seed);
    if (out.has_parent_path()) make_dir(out.parent_path());
    save_graph_json(out, g);
    stamp(log) << "gen-data: " << o.kind << " graph with " << g.num_nodes() << " nodes written to "
               << out.string() << '\n';
    return kExitOk;
  });
}

int cmd_gradcheck(const std::string& selector, std::uint64_t seed, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    std::vector<GradcheckEntry> entries;
    try {
      entries = run_gradcheck(selector, seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    std::size_t failed = 0;
    for (const GradcheckEntry& e : entries) {
      out << std::left << std::setw(44) << e.name << ' ' << std::scientific << std::setprecision(3)
          << e.max_rel_error << (e.passed() ? "  ok" : "  FAIL");
      if (e.redraws) out << "  (redrawn " << e.redraws << "x)";
      out << '\n';
      failed += !e.passed();
    }
    out << std::defaultfloat << entries.size() - failed << '/' << entries.size() << " within " << kGradcheckTolerance
        << '\n';
    return failed == 0 ? kExitOk : kExitModuleError;
  });
}

}  // namespace gnasforge::cli
