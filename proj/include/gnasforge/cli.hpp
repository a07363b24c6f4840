#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>

#include "gnasforge/graph.hpp"
#include "gnasforge/search.hpp"

namespace gnasforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitConfigError = 2;

/// Invalid or unreadable configuration, or a missing dataset file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  enum class Source { File, Sbm, Chain };
  Source source = Source::Sbm;
  std::filesystem::path path;  // absolute once resolved
  SbmParams sbm;
  std::size_t chain_length = 200;
  std::size_t chain_depth = 3;
  std::uint64_t chain_seed = 0;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;
  /// Re-split even when the graph carries masks.
  bool force_split = false;
};

struct RunConfig {
  std::string preset = "fully_supervised";
  SearchConfig search;
  DatasetConfig dataset;
};

/// Unknown keys anywhere are rejected. Relative dataset paths resolve
/// against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every field, defaults included. Parsing the result yields the same config.
nlohmann::json run_config_to_json(const RunConfig& config);

/// Loads or generates the graph and applies the split when it has no masks.
Graph load_dataset(const DatasetConfig& dataset);

struct GenDataOptions {
  std::string kind = "sbm";
  SbmParams sbm;
  std::size_t chain_length = 200;
  std::size_t chain_depth = 3;
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  bool with_split = true;
};

int cmd_search(const std::filesystem::path& config, std::optional<std::uint64_t> seed,
               const std::filesystem::path& out, std::ostream& log);
/// Dataset and retraining settings come from `config` if given; `data`
/// overrides the dataset path.
int cmd_retrain(const std::filesystem::path& genotype, const std::optional<std::filesystem::path>& config,
                const std::optional<std::filesystem::path>& data, std::optional<std::uint64_t> seed,
                const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& config,
             const std::optional<std::filesystem::path>& data, std::ostream& out, std::ostream& log);
int cmd_gen_data(const GenDataOptions& options, const std::filesystem::path& out, std::ostream& log);
int cmd_gradcheck(const std::string& selector, std::uint64_t seed, std::ostream& out, std::ostream& log);

}  // namespace gnasforge::cli
