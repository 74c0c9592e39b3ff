// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoint format (JSON):
//
//   {
//     "format": "dast-checkpoint",
//     "version": 1,
//     "params": { "<name>": { "shape": [..], "data": [..] }, ... },
//     ...extra top-level sections written by callers (model config, optimizer)
//   }
//
// Doubles are serialized with shortest round-trip formatting, so a save/load
// cycle is value-exact.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dast/tensor.hpp"
#include "json.hpp"

namespace dast {

inline constexpr const char* kCheckpointFormat = "dast-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json params_to_json(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> params_from_json(const nlohmann::json& params);

/// Copies values from `loaded` into `target` by name. Missing names and
/// shape mismatches raise DataError naming the parameter.
void assign_params(const std::vector<NamedTensor>& loaded, std::vector<NamedTensor>& target);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace dast
