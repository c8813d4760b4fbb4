#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bmatree/error.hpp"
#include "bmatree/sampler.hpp"
#include "bmatree/tree.hpp"

namespace bmatree {

inline constexpr const char* kEnsembleFormat = "bmatree-ensemble";
inline constexpr int kEnsembleVersion = 1;

// Splits "key = value" lines into an ordered object of strings.
inline nlohmann::ordered_json echo_to_json(const std::string& echo) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

inline std::string json_to_echo(const nlohmann::ordered_json& config) {
  std::string out;
  for (const auto& [key, value] : config.items()) out += key + " = " + value.get<std::string>() + "\n";
  return out;
}

// Ensemble document layout (version 1):
//   format, version, tree_count
//   provenance: config_digest, dataset_digest, fold, alpha, attribute_names,
//               class_names, attribute_map, refinement (T, n_weak,
//               weak_attributes, retained, total) or null
//   config: the ChainConfig echo as an object of strings
//   trees: [{log_lik, tree}] with tree in the nested text record format
inline nlohmann::ordered_json ensemble_to_json(const Ensemble& ensemble) {
  const auto& p = ensemble.provenance;
  nlohmann::ordered_json prov;
  prov["config_digest"] = p.config_digest;
  prov["dataset_digest"] = p.dataset_digest;
  prov["fold"] = p.fold;
  prov["alpha"] = p.alpha;
  prov["attribute_names"] = p.attribute_names;
  prov["class_names"] = p.class_names;
  prov["attribute_map"] = p.attribute_map;
  if (p.refinement) {
    const auto& r = *p.refinement;
    prov["refinement"] = {{"threshold", r.threshold},
                          {"n_weak", r.n_weak},
                          {"weak_attributes", r.weak_attributes},
                          {"retained", r.retained},
                          {"total", r.total}};
  } else {
    prov["refinement"] = nullptr;
  }
  nlohmann::ordered_json doc;
  doc["format"] = kEnsembleFormat;
  doc["version"] = kEnsembleVersion;
  doc["tree_count"] = ensemble.size();
  doc["provenance"] = std::move(prov);
  doc["config"] = echo_to_json(p.config_echo);
  auto& trees = doc["trees"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ensemble.size(); ++i)
    trees.push_back({{"log_lik", ensemble.log_liks[i]}, {"tree", tree_to_text(ensemble.trees[i])}});
  return doc;
}

inline std::string ensemble_to_text(const Ensemble& ensemble) {
  return ensemble_to_json(ensemble).dump(1) + "\n";
}

inline Ensemble ensemble_from_text(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ensemble document: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kEnsembleFormat)
      throw ParseError("not an ensemble document");
    if (doc.at("version").get<int>() != kEnsembleVersion)
      throw ParseError("unsupported ensemble version " + doc.at("version").dump());
    Ensemble e;
    const auto& prov = doc.at("provenance");
    auto& p = e.provenance;
    p.config_digest = prov.at("config_digest").get<std::string>();
    p.dataset_digest = prov.at("dataset_digest").get<std::string>();
    p.fold = prov.at("fold").get<int>();
    p.alpha = prov.at("alpha").get<double>();
    p.attribute_names = prov.at("attribute_names").get<std::vector<std::string>>();
    p.class_names = prov.at("class_names").get<std::vector<std::string>>();
    p.attribute_map = prov.at("attribute_map").get<std::vector<std::size_t>>();
    if (!prov.at("refinement").is_null()) {
      const auto& r = prov.at("refinement");
      p.refinement = RefinementInfo{r.at("threshold").get<double>(), r.at("n_weak").get<std::size_t>(),
                                    r.at("weak_attributes").get<std::vector<std::string>>(),
                                    r.at("retained").get<std::size_t>(),
                                    r.at("total").get<std::size_t>()};
    }
    p.config_echo = json_to_echo(doc.at("config"));
    for (const auto& item : doc.at("trees")) {
      e.trees.push_back(tree_from_text(item.at("tree").get<std::string>(), p.class_names.size()));
      e.log_liks.push_back(item.at("log_lik").get<double>());
    }
    if (e.size() != doc.at("tree_count").get<std::size_t>())
      throw ParseError("tree_count does not match the tree list");
    return e;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ensemble document: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_ensemble(const Ensemble& ensemble, const std::string& path) {
  write_text_file(path, ensemble_to_text(ensemble));
}

inline Ensemble read_ensemble(const std::string& path) {
  return ensemble_from_text(read_text_file(path));
}

// Diagnostics document: per-move counters, acceptance fraction, size trace.
inline nlohmann::ordered_json diagnostics_to_json(const Diagnostics& diag) {
  nlohmann::ordered_json doc;
  doc["iterations"] = diag.iterations;
  doc["burn_in"] = diag.burn_in;
  doc["initial_splits"] = diag.initial_splits;
  doc["final_splits"] = diag.final_splits;
  doc["acceptance_fraction"] = diag.acceptance_fraction();
  auto& moves = doc["moves"] = nlohmann::ordered_json::object();
  for (MoveKind m : kAllMoves) {
    const auto i = static_cast<std::size_t>(m);
    moves[move_name(m)] = {{"proposed", diag.stats.proposed[i]},
                           {"accepted", diag.stats.accepted[i]},
                           {"rate", diag.stats.rate(m)}};
  }
  auto& trace = doc["size_trace"] = nlohmann::ordered_json::array();
  for (const auto& point : diag.size_trace) trace.push_back({point.iteration, point.splits});
  return doc;
}

}  // namespace bmatree
