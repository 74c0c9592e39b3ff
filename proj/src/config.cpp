// SPDX-License-Identifier: Apache-2.0

#include "dast/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace dast {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw ContractError("setting " + key + ": '" + value + "' is not " + want);
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value(key, v, "an integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const long x = parse_long(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) bad_value(key, v, "in int range");
  return static_cast<int>(x);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value(key, v, "a non-negative 64-bit seed");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double x) {
  if (std::isinf(x) && x > 0) return "inf";
  char buf[32];
  // shortest text that parses back to the same double
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}
std::string fmt(bool b) { return b ? "true" : "false"; }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

struct Entry {
  std::string key;
  std::string help;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

// Field binders. `F` projects Settings to the field.
template <class F>
Entry int_entry(std::string key, std::string help, F f) {
  return {key, std::move(help), [f, key](Settings& s, const std::string& v) { f(s) = parse_int(key, v); },
          [f](const Settings& s) { return fmt(f(const_cast<Settings&>(s))); }};
}
template <class F>
Entry double_entry(std::string key, std::string help, F f) {
  return {key, std::move(help), [f, key](Settings& s, const std::string& v) { f(s) = parse_double(key, v); },
          [f](const Settings& s) { return fmt(f(const_cast<Settings&>(s))); }};
}
template <class F>
Entry bool_entry(std::string key, std::string help, F f) {
  return {key, std::move(help), [f, key](Settings& s, const std::string& v) { f(s) = parse_bool(key, v); },
          [f](const Settings& s) { return fmt(f(const_cast<Settings&>(s))); }};
}
template <class F>
Entry seed_entry(std::string key, std::string help, F f) {
  return {key, std::move(help),
          [f, key](Settings& s, const std::string& v) { f(s) = parse_seed(key, v); },
          [f](const Settings& s) { return fmt(f(const_cast<Settings&>(s))); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // model
    t.push_back({"model.backbone.channels", "conv stage widths, comma separated",
                 [](Settings& s, const std::string& v) {
                   std::vector<int> c;
                   for (const auto& x : split(v, ',')) c.push_back(parse_int("model.backbone.channels", x));
                   s.model.backbone.channels = c;
                 },
                 [](const Settings& s) {
                   std::string out;
                   for (int c : s.model.backbone.channels) out += (out.empty() ? "" : ",") + std::to_string(c);
                   return out;
                 }});
    t.push_back(int_entry("model.backbone.feature_channels", "output feature channels C",
                          [](Settings& s) -> int& { return s.model.backbone.feature_channels; }));
    t.push_back(int_entry("model.backbone.total_stride", "backbone stride (power of two)",
                          [](Settings& s) -> int& { return s.model.backbone.total_stride; }));
    t.push_back(int_entry("model.backbone.template_size", "template crop side in pixels",
                          [](Settings& s) -> int& { return s.model.backbone.template_size; }));
    t.push_back(int_entry("model.backbone.search_size", "search crop side in pixels",
                          [](Settings& s) -> int& { return s.model.backbone.search_size; }));
    t.push_back({"model.anchors.ratios", "anchor aspect ratios h/w, comma separated",
                 [](Settings& s, const std::string& v) {
                   std::vector<double> r;
                   for (const auto& x : split(v, ',')) r.push_back(parse_double("model.anchors.ratios", x));
                   s.model.anchors.ratios = r;
                 },
                 [](const Settings& s) {
                   std::string out;
                   for (double r : s.model.anchors.ratios) out += (out.empty() ? "" : ",") + fmt(r);
                   return out;
                 }});
    t.push_back(int_entry("model.anchors.scale", "anchor scale",
                          [](Settings& s) -> int& { return s.model.anchors.scale; }));
    t.push_back(int_entry("model.anchors.stride", "anchor stride, equal to the backbone stride",
                          [](Settings& s) -> int& { return s.model.anchors.stride; }));
    t.push_back(int_entry("model.head_hidden", "hidden width of each head branch",
                          [](Settings& s) -> int& { return s.model.head_hidden; }));
    t.push_back(bool_entry("model.use_st", "enable the spatio-temporal template fusion",
                           [](Settings& s) -> bool& { return s.model.use_st; }));
    t.push_back(bool_entry("model.use_da", "enable the search-region augmentation",
                           [](Settings& s) -> bool& { return s.model.use_da; }));
    t.push_back(bool_entry("model.fc_bias", "bias terms on the attention projections",
                           [](Settings& s) -> bool& { return s.model.fc_bias; }));
    t.push_back(int_entry("model.da_filter_depth", "conv layers after the DA decoder (1 or 2)",
                          [](Settings& s) -> int& { return s.model.da_filter_depth; }));
    t.push_back(double_entry("model.context", "template context as a fraction of w + h",
                             [](Settings& s) -> double& { return s.model.context; }));
    // train
    t.push_back(int_entry("train.epochs", "training epochs", [](Settings& s) -> int& { return s.train.epochs; }));
    t.push_back(int_entry("train.freeze_backbone_epochs", "leading epochs with the backbone fixed",
                          [](Settings& s) -> int& { return s.train.freeze_backbone_epochs; }));
    t.push_back(int_entry("train.steps_per_epoch", "optimizer steps per epoch",
                          [](Settings& s) -> int& { return s.train.steps_per_epoch; }));
    t.push_back(int_entry("train.batch_size", "triplets per step",
                          [](Settings& s) -> int& { return s.train.batch_size; }));
    t.push_back(double_entry("train.lr_start", "learning rate at the first epoch",
                             [](Settings& s) -> double& { return s.train.lr_start; }));
    t.push_back(double_entry("train.lr_end", "learning rate at the last epoch (log-space decay)",
                             [](Settings& s) -> double& { return s.train.lr_end; }));
    t.push_back(double_entry("train.momentum", "SGD momentum",
                             [](Settings& s) -> double& { return s.train.momentum; }));
    t.push_back(double_entry("train.weight_decay", "L2 weight decay",
                             [](Settings& s) -> double& { return s.train.weight_decay; }));
    t.push_back(double_entry("train.grad_clip", "global gradient norm clip, 0 disables",
                             [](Settings& s) -> double& { return s.train.grad_clip; }));
    t.push_back(int_entry("train.max_nonfinite", "consecutive non-finite batches before aborting",
                          [](Settings& s) -> int& { return s.train.max_nonfinite; }));
    t.push_back(seed_entry("train.seed", "training seed",
                           [](Settings& s) -> std::uint64_t& { return s.train.seed; }));
    t.push_back(double_entry("train.lambda", "weight of the softmax branch against the BCE branch",
                             [](Settings& s) -> double& { return s.train.weights.lambda; }));
    t.push_back(double_entry("train.lambda1", "weight of classification against regression",
                             [](Settings& s) -> double& { return s.train.weights.lambda1; }));
    t.push_back({"train.labels.mode", "softmax-branch assignment: iou or center_distance",
                 [](Settings& s, const std::string& v) { s.train.labels.mode = parse_assignment(v); },
                 [](const Settings& s) { return to_string(s.train.labels.mode); }});
    t.push_back(double_entry("train.labels.iou_pos", "IoU at or above which an anchor is positive",
                             [](Settings& s) -> double& { return s.train.labels.iou_pos; }));
    t.push_back(double_entry("train.labels.iou_neg", "IoU below which an anchor is negative",
                             [](Settings& s) -> double& { return s.train.labels.iou_neg; }));
    t.push_back(double_entry("train.labels.center_thr", "squared feature-cell distance for positives",
                             [](Settings& s) -> double& { return s.train.labels.center_thr; }));
    t.push_back(bool_entry("train.labels.eq5_literal", "normalise corner sums by the map size",
                           [](Settings& s) -> bool& { return s.train.labels.eq5_literal; }));
    t.push_back(int_entry("train.triplets.window", "frame window for triplet sampling",
                          [](Settings& s) -> int& { return s.train.triplets.window; }));
    t.push_back(double_entry("train.triplets.noise_sigma", "noise sd on T_a and T_c, fraction of 255",
                             [](Settings& s) -> double& { return s.train.triplets.noise_sigma; }));
    t.push_back(double_entry("train.triplets.noise_prob", "probability of adding noise to a template",
                             [](Settings& s) -> double& { return s.train.triplets.noise_prob; }));
    t.push_back(bool_entry("train.triplets.search_from_successor", "search frame follows T_c, else T_c itself",
                           [](Settings& s) -> bool& { return s.train.triplets.search_from_successor; }));
    t.push_back(double_entry("train.triplets.search_shift", "max target offset in the search crop",
                             [](Settings& s) -> double& { return s.train.triplets.search_shift; }));
    t.push_back(double_entry("train.triplets.search_scale_jitter", "search crop scale jitter",
                             [](Settings& s) -> double& { return s.train.triplets.search_scale_jitter; }));
    t.push_back(double_entry("train.triplets.negative_prob", "probability of a search crop from another sequence",
                             [](Settings& s) -> double& { return s.train.triplets.negative_prob; }));
    // tracker
    t.push_back(double_entry("tracker.penalty_k", "scale/ratio change penalty factor",
                             [](Settings& s) -> double& { return s.tracker.penalty_k; }));
    t.push_back(double_entry("tracker.window_influence", "cosine window weight",
                             [](Settings& s) -> double& { return s.tracker.window_influence; }));
    t.push_back(double_entry("tracker.size_lr", "box size smoothing rate",
                             [](Settings& s) -> double& { return s.tracker.size_lr; }));
    t.push_back(double_entry("tracker.w1", "softmax branch weight in the score",
                             [](Settings& s) -> double& { return s.tracker.w1; }));
    t.push_back(double_entry("tracker.w2", "BCE branch weight in the score",
                             [](Settings& s) -> double& { return s.tracker.w2; }));
    t.push_back(double_entry("tracker.update_threshold", "template update fires above this; inf disables",
                             [](Settings& s) -> double& { return s.tracker.update_threshold; }));
    t.push_back({"tracker.confidence", "gate statistic: penalized or raw",
                 [](Settings& s, const std::string& v) {
                   if (v == "penalized") s.tracker.confidence = ConfidenceMode::penalized;
                   else if (v == "raw") s.tracker.confidence = ConfidenceMode::raw;
                   else bad_value("tracker.confidence", v, "one of penalized, raw");
                 },
                 [](const Settings& s) {
                   return std::string(s.tracker.confidence == ConfidenceMode::raw ? "raw" : "penalized");
                 }});
    t.push_back(double_entry("tracker.min_size", "minimum box side in pixels",
                             [](Settings& s) -> double& { return s.tracker.min_size; }));
    // synth
    t.push_back(int_entry("synth.count", "number of sequences", [](Settings& s) -> int& { return s.synth.count; }));
    t.push_back(int_entry("synth.length", "frames per sequence",
                          [](Settings& s) -> int& { return s.synth.spec.length; }));
    t.push_back(int_entry("synth.width", "frame width", [](Settings& s) -> int& { return s.synth.spec.width; }));
    t.push_back(int_entry("synth.height", "frame height", [](Settings& s) -> int& { return s.synth.spec.height; }));
    t.push_back(int_entry("synth.target_w", "initial target width",
                          [](Settings& s) -> int& { return s.synth.spec.target_w; }));
    t.push_back(int_entry("synth.target_h", "initial target height",
                          [](Settings& s) -> int& { return s.synth.spec.target_h; }));
    t.push_back(double_entry("synth.speed", "target speed in pixels per frame",
                             [](Settings& s) -> double& { return s.synth.spec.speed; }));
    t.push_back(double_entry("synth.camera_speed", "background pan in pixels per frame",
                             [](Settings& s) -> double& { return s.synth.spec.camera_speed; }));
    t.push_back(bool_entry("synth.zero_motion", "static target and camera, attribute effects off",
                           [](Settings& s) -> bool& { return s.synth.spec.zero_motion; }));
    t.push_back({"synth.attributes", "comma separated tags (deformation, occlusion, ...)",
                 [](Settings& s, const std::string& v) {
                   std::set<Attribute> a;
                   if (!v.empty())
                     for (const auto& x : split(v, ',')) a.insert(parse_attribute(x));
                   s.synth.spec.attributes = a;
                 },
                 [](const Settings& s) {
                   std::string out;
                   for (Attribute a : s.synth.spec.attributes) out += (out.empty() ? "" : ",") + to_string(a);
                   return out;
                 }});
    t.push_back(seed_entry("synth.seed", "base seed; sequence k uses seed + k",
                           [](Settings& s) -> std::uint64_t& { return s.synth.spec.seed; }));
    t.push_back(int_entry("synth.train_count", "sequences in the generated training corpus",
                          [](Settings& s) -> int& { return s.synth.train_count; }));
    t.push_back(int_entry("synth.train_length", "frames per generated training sequence",
                          [](Settings& s) -> int& { return s.synth.train_length; }));
    t.push_back(seed_entry("synth.train_seed", "base seed of the generated training corpus",
                           [](Settings& s) -> std::uint64_t& { return s.synth.train_seed; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return e;
  throw ContractError("unknown setting '" + key + "'");
}

}  // namespace

void Settings::validate() const {
  model.validate();
  train.validate();
  tracker.validate();
  synth.spec.validate();
  if (synth.count < 1) throw ContractError("synth.count must be positive");
  if (synth.train_count < 1) throw ContractError("synth.train_count must be positive");
  synth.train_spec().validate();
}

SequenceSpec SynthSettings::train_spec() const {
  SequenceSpec s = spec;
  s.length = train_length;
  s.seed = train_seed;
  s.attributes.clear();
  return s;
}

const std::vector<SettingInfo>& setting_keys() {
  static const std::vector<SettingInfo> keys = [] {
    std::vector<SettingInfo> out;
    for (const auto& e : entries()) out.push_back({e.key, e.help});
    return out;
  }();
  return keys;
}

void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  find_entry(key).set(s, trim(value));
}

std::string get_setting(const Settings& s, const std::string& key) { return find_entry(key).get(s); }

void parse_settings(const std::string& text, Settings& s, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ContractError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!key.empty() && key.front() == '.') key.erase(0, 1);
    else if (!section.empty()) key = section + "." + key;
    try {
      apply_setting(s, key, line.substr(eq + 1));
    } catch (const ContractError& e) {
      throw ContractError(where + e.what());
    }
  }
}

void load_settings_file(const std::filesystem::path& path, Settings& s) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read settings file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  parse_settings(buf.str(), s, path.string());
}

std::string dump_settings(const Settings& s) {
  std::string out;
  for (const auto& e : entries()) out += "# " + e.help + "\n" + e.key + " = " + e.get(s) + "\n";
  return out;
}

std::string to_string(Assignment a) { return a == Assignment::iou ? "iou" : "center_distance"; }

Assignment parse_assignment(const std::string& name) {
  if (name == "iou") return Assignment::iou;
  if (name == "center_distance" || name == "center") return Assignment::center;
  throw ContractError("unknown assignment '" + name + "' (valid: iou, center_distance)");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  Settings s;
  s.model = cfg;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : entries())
    if (e.key.rfind("model.", 0) == 0) j[e.key.substr(6)] = e.get(s);
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("model config must be an object");
  Settings s;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw DataError("model config: value of '" + k + "' must be a string");
    try {
      apply_setting(s, "model." + k, v.get<std::string>());
    } catch (const ContractError& e) {
      throw DataError(std::string("model config: ") + e.what());
    }
  }
  s.model.validate();
  return s.model;
}

}  // namespace dast
