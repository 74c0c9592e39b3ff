// SPDX-License-Identifier: Apache-2.0

#include "dast/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace dast {

using nlohmann::json;

json params_to_json(const std::vector<NamedTensor>& params) {
  json out = json::object();
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) throw NumericError("checkpoint: parameter '" + name + "' is not finite");
    json entry;
    entry["shape"] = t.shape();
    entry["data"] = std::vector<double>(t.data().begin(), t.data().end());
    out[name] = std::move(entry);
  }
  return out;
}

std::vector<NamedTensor> params_from_json(const json& params) {
  if (!params.is_object()) throw DataError("checkpoint: 'params' must be an object");
  std::vector<NamedTensor> out;
  for (const auto& [name, entry] : params.items()) {
    if (!entry.contains("shape") || !entry.contains("data")) {
      throw DataError("checkpoint: parameter '" + name + "' lacks shape or data");
    }
    auto shape = entry["shape"].get<Shape>();
    auto values = entry["data"].get<std::vector<double>>();
    if (shape_numel(shape) != values.size()) {
      throw DataError("checkpoint: parameter '" + name + "' has " +
                      std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    out.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void assign_params(const std::vector<NamedTensor>& loaded, std::vector<NamedTensor>& target) {
  for (auto& [name, t] : target) {
    auto it = std::find_if(loaded.begin(), loaded.end(),
                           [&](const NamedTensor& nt) { return nt.first == name; });
    if (it == loaded.end()) throw DataError("checkpoint: missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw DataError("checkpoint: parameter '" + name + "' has shape " +
                      shape_str(it->second.shape()) + ", model expects " + shape_str(t.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace dast
