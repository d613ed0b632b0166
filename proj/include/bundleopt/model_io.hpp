#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bundleopt/errors.hpp"
#include "bundleopt/model.hpp"

namespace bundleopt {

/// Model file schema:
///   {"v0": number,
///    "items": [{"id": int, "revenue": number, "v": number}, ...],
///    "pairs": [{"i": int, "j": int, "v": number}, ...]}
/// Item ids must be 0..n-1 (any order); pairs require i < j and no duplicates.
/// Items may carry an optional "label" string, which is preserved on load.
struct ModelFile {
  ModelParams params;
  std::vector<std::string> labels;  // empty when the file has no labels
};

inline nlohmann::ordered_json model_to_json(const ModelParams& p,
                                            const std::vector<std::string>& labels = {}) {
  nlohmann::ordered_json j;
  j["v0"] = p.v0;
  auto& items = j["items"] = nlohmann::ordered_json::array();
  for (int i = 0; i < p.n(); ++i) {
    nlohmann::ordered_json item;
    item["id"] = i;
    item["revenue"] = p.revenue[static_cast<std::size_t>(i)];
    item["v"] = p.item_weight[static_cast<std::size_t>(i)];
    if (!labels.empty()) item["label"] = labels[static_cast<std::size_t>(i)];
    items.push_back(std::move(item));
  }
  if (p.pair_weight.size() > 0) {
    auto& pairs = j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& e : p.pair_weight.entries()) {
      pairs.push_back({{"i", e.i}, {"j", e.j}, {"v", e.v}});
    }
  }
  return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
  ModelFile out;
  if (!j.contains("v0") || !j.contains("items"))
    throw std::invalid_argument("model file: missing v0 or items");
  ModelParams p;
  p.v0 = j.at("v0").get<double>();
  const auto& items = j.at("items");
  const int n = static_cast<int>(items.size());
  p.item_weight.assign(static_cast<std::size_t>(n), 0.0);
  p.revenue.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  bool any_label = false;
  out.labels.assign(static_cast<std::size_t>(n), "");
  for (const auto& item : items) {
    const int id = item.at("id").get<int>();
    if (id < 0 || id >= n) throw std::invalid_argument("model file: item id out of range");
    if (seen[static_cast<std::size_t>(id)])
      throw std::invalid_argument("model file: duplicate item id " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = true;
    p.revenue[static_cast<std::size_t>(id)] = item.at("revenue").get<double>();
    p.item_weight[static_cast<std::size_t>(id)] = item.at("v").get<double>();
    if (item.contains("label")) {
      any_label = true;
      out.labels[static_cast<std::size_t>(id)] = item.at("label").get<std::string>();
    }
  }
  if (!any_label) out.labels.clear();
  if (j.contains("pairs")) {
    for (const auto& pr : j.at("pairs")) {
      const int i = pr.at("i").get<int>();
      const int jj = pr.at("j").get<int>();
      if (i >= jj) throw std::invalid_argument("model file: pair requires i < j");
      if (i < 0 || jj >= n) throw std::invalid_argument("model file: pair index out of range");
      if (p.pair_weight.contains(i, jj))
        throw std::invalid_argument("model file: duplicate pair (" + std::to_string(i) + "," +
                                    std::to_string(jj) + ")");
      p.pair_weight.set(i, jj, pr.at("v").get<double>());
    }
  }
  p.finalize();
  out.params = std::move(p);
  return out;
}

inline void save_model(const ModelParams& p, const std::string& path,
                       const std::vector<std::string>& labels = {}) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << model_to_json(p, labels).dump(2) << "\n";
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace bundleopt
