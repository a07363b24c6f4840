#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gnasforge/params.hpp"

namespace gnasforge {

/// On-disk layout:
///   <dir>/meta.json               parameter names, shapes, optimizer steps
///   <dir>/<registry path>.bin     raw little-endian float64, row-major
/// Registry paths are the parameter names; '/' becomes a subdirectory.
struct CheckpointData {
  ParameterStore parameters;
  std::map<std::string, std::int64_t> optimizer_steps;
};

void save_checkpoint(const std::filesystem::path& dir, const std::vector<const ParameterStore*>& stores,
                     const std::map<std::string, std::int64_t>& optimizer_steps);

CheckpointData load_checkpoint(const std::filesystem::path& dir);

/// Overwrites the values of every parameter in `store` from `data`. Throws if
/// a name is missing or a shape differs.
void restore_parameters(ParameterStore& store, const CheckpointData& data);

}  // namespace gnasforge
