// SPDX-License-Identifier: Apache-2.0
//
// Experiment settings as a flat tree of dotted keys.
//
// File format, one setting per line:
//
//   # comment
//   [train]
//   epochs = 5
//   labels.mode = center_distance     # inside [train]: train.labels.mode
//   model.backbone.channels = 8,16,16 # top-level keys work anywhere via a
//                                     # leading dot: .model.use_st = false
//
// A `[section]` header prefixes the keys below it; a key starting with '.'
// ignores the prefix. Lists are comma separated. Unknown keys are rejected
// with the key named. `dump_settings` prints every key with its current value
// and serves as the reference for the key set.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dast/data_synth.hpp"
#include "dast/model.hpp"
#include "dast/tracker.hpp"
#include "dast/training.hpp"
#include "json.hpp"

namespace dast {

struct SynthSettings {
  SequenceSpec spec;
  int count = 10;
  // in-memory corpus used by `train` when no data directory is given; the
  // other geometry comes from `spec`
  int train_count = 160;
  int train_length = 52;
  std::uint64_t train_seed = 100;

  SequenceSpec train_spec() const;
};

struct Settings {
  ModelConfig model;
  TrainConfig train;
  TrackerConfig tracker;
  SynthSettings synth;

  void validate() const;
};

struct SettingInfo {
  std::string key;
  std::string help;
};

const std::vector<SettingInfo>& setting_keys();

/// Throws ContractError for an unknown key or a malformed value.
void apply_setting(Settings& s, const std::string& key, const std::string& value);
std::string get_setting(const Settings& s, const std::string& key);

/// Applies a settings file on top of `s`. Missing file: DataError. Errors
/// carry the line number.
void load_settings_file(const std::filesystem::path& path, Settings& s);
void parse_settings(const std::string& text, Settings& s, const std::string& origin = "<string>");
/// Every key as `key = value`, with its help text as a comment.
std::string dump_settings(const Settings& s);

std::string to_string(Assignment a);
Assignment parse_assignment(const std::string& name);

/// Model section as a JSON object of key -> value strings (checkpoints).
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace dast
