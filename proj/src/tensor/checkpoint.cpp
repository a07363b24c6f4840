#include "gnasforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace gnasforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

fs::path blob_path(const fs::path& dir, const std::string& name) {
  if (name.empty() || name.front() == '/' || name.find("..") != std::string::npos) {
    throw std::invalid_argument("checkpoint: unsafe parameter name '" + name + "'");
  }
  return dir / (name + ".bin");
}

}  // namespace

void save_checkpoint(const fs::path& dir, const std::vector<const ParameterStore*>& stores,
                     const std::map<std::string, std::int64_t>& optimizer_steps) {
  fs::create_directories(dir);
  json meta;
  meta["format"] = "gnasforge-checkpoint-v1";
  meta["optimizer_steps"] = optimizer_steps;
  json params = json::array();
  for (const ParameterStore* store : stores) {
    for (const auto& [name, p] : store->entries()) {
      const fs::path file = blob_path(dir, name);
      fs::create_directories(file.parent_path());
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("checkpoint: cannot write " + file.string());
      out.write(reinterpret_cast<const char*>(p.value.data().data()),
                static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
      params.push_back({{"name", name},
                        {"shape", p.value.shape()},
                        {"file", fs::relative(file, dir).generic_string()},
                        {"trainable", p.trainable}});
    }
  }
  meta["parameters"] = std::move(params);
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

CheckpointData load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw std::runtime_error("checkpoint: missing " + (dir / "meta.json").string());
  const json meta = json::parse(in);
  CheckpointData data;
  data.optimizer_steps = meta.at("optimizer_steps").get<std::map<std::string, std::int64_t>>();
  for (const json& entry : meta.at("parameters")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const fs::path file = blob_path(dir, name);
    std::ifstream blob(file, std::ios::binary);
    if (!blob) throw std::runtime_error("checkpoint: missing blob " + file.string());
    std::vector<double> values(shape_numel(shape));
    blob.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (blob.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)) ||
        blob.peek() != std::char_traits<char>::eof()) {
      throw std::runtime_error("checkpoint: blob size mismatch for '" + name + "'");
    }
    data.parameters.add(name, Tensor(shape, std::move(values)),
                        entry.value("trainable", true));
  }
  return data;
}

void restore_parameters(ParameterStore& store, const CheckpointData& data) {
  for (const auto& [name, p] : store.entries()) {
    if (!data.parameters.contains(name)) {
      throw std::runtime_error("checkpoint: no saved value for '" + name + "'");
    }
    const Tensor& saved = data.parameters.value(name);
    if (saved.shape() != p.value.shape()) {
      throw std::runtime_error("checkpoint: '" + name + "' saved with shape " +
                               shape_string(saved.shape()) + ", expected " +
                               shape_string(p.value.shape()));
    }
    store.value(name) = saved;
  }
}

}  // namespace gnasforge
