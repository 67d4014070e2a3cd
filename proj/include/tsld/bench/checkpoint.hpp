#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsld/bench/dataset.hpp"
#include "tsld/numkit/adam.hpp"

namespace tsld {

inline constexpr int kCheckpointVersion = 1;

/// Adam state detached from an optimizer.
struct OptimizerState {
  std::size_t steps = 0;
  std::vector<Tensor> first;
  std::vector<Tensor> second;

  static OptimizerState capture(const Adam& a) { return {a.steps(), a.first_moments(), a.second_moments()}; }
  void restore(Adam& a) const { a.restore(steps, first, second); }
};

/// Progress of one trainer: update count, last loss and random state.
struct TrainerState {
  std::size_t steps = 0;
  double last_loss = 0.0;
  std::string rng;
  OptimizerState optimizer;
};

/// Everything needed to rebuild the models and resume training: named
/// parameter lists per component, per-trainer progress, the normalization
/// the models were trained under and the resolved config.
struct Checkpoint {
  int version = kCheckpointVersion;
  nlohmann::json config = nlohmann::json::object();
  std::string stage;  // last completed stage
  std::map<std::string, std::vector<Parameter>> components;
  std::map<std::string, TrainerState> trainers;
  Normalization norm;
};

/// Copies the current values of a parameter list.
inline std::vector<Parameter> snapshot(std::span<Parameter* const> params) {
  std::vector<Parameter> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(*p);
  return out;
}

/// Writes saved values into live parameters. Every name and shape is checked
/// before anything is written, so a mismatch leaves the targets untouched.
inline void restore_parameters(const std::vector<Parameter>& saved, std::span<Parameter* const> params) {
  if (saved.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(saved.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < saved.size(); ++k) {
    if (saved[k].name != params[k]->name) {
      throw FormatError("checkpoint parameter '" + saved[k].name + "' where model expects '" +
                        params[k]->name + "'");
    }
    if (saved[k].value.shape() != params[k]->value.shape()) {
      throw FormatError("checkpoint parameter '" + saved[k].name + "' has the wrong shape");
    }
  }
  for (std::size_t k = 0; k < saved.size(); ++k) params[k]->value = saved[k].value;
}

namespace detail {

inline nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  auto data = j.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (n != data.size()) throw FormatError("checkpoint tensor data does not match its shape manifest");
  return Tensor(std::move(shape), std::move(data));
}

inline nlohmann::json tensors_json(const std::vector<Tensor>& ts) {
  auto a = nlohmann::json::array();
  for (const auto& t : ts) a.push_back(tensor_json(t));
  return a;
}

inline std::vector<Tensor> tensors_from_json(const nlohmann::json& j) {
  std::vector<Tensor> out;
  for (const auto& e : j) out.push_back(tensor_from_json(e));
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "tsld-checkpoint";
  j["version"] = c.version;
  j["config"] = c.config;
  j["stage"] = c.stage;
  auto& comps = j["components"] = nlohmann::json::object();
  for (const auto& [name, params] : c.components) {
    auto list = nlohmann::json::array();
    for (const auto& p : params) {
      auto e = detail::tensor_json(p.value);
      e["name"] = p.name;
      list.push_back(std::move(e));
    }
    comps[name] = std::move(list);
  }
  auto& trainers = j["trainers"] = nlohmann::json::object();
  for (const auto& [name, t] : c.trainers) {
    trainers[name] = {{"steps", t.steps},
                      {"last_loss", t.last_loss},
                      {"rng", t.rng},
                      {"optimizer",
                       {{"steps", t.optimizer.steps},
                        {"first", detail::tensors_json(t.optimizer.first)},
                        {"second", detail::tensors_json(t.optimizer.second)}}}};
  }
  j["normalization"] = {{"mean", c.norm.mean}, {"stddev", c.norm.stddev}};
  return j;
}

/// Parses a checkpoint document. Any missing field, malformed array or
/// version other than the current one is a FormatError.
inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "tsld-checkpoint") {
      throw FormatError("not a tsld checkpoint");
    }
    if (!j.contains("version")) throw FormatError("checkpoint has no version field");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.version = version;
    c.config = j.at("config");
    c.stage = j.at("stage").get<std::string>();
    for (const auto& [name, list] : j.at("components").items()) {
      std::vector<Parameter> params;
      for (const auto& e : list) params.push_back({e.at("name").get<std::string>(), detail::tensor_from_json(e)});
      c.components[name] = std::move(params);
    }
    for (const auto& [name, t] : j.at("trainers").items()) {
      TrainerState s;
      s.steps = t.at("steps").get<std::size_t>();
      s.last_loss = t.at("last_loss").get<double>();
      s.rng = t.at("rng").get<std::string>();
      const auto& o = t.at("optimizer");
      s.optimizer.steps = o.at("steps").get<std::size_t>();
      s.optimizer.first = detail::tensors_from_json(o.at("first"));
      s.optimizer.second = detail::tensors_from_json(o.at("second"));
      if (s.optimizer.first.size() != s.optimizer.second.size()) {
        throw FormatError("checkpoint optimizer moments disagree in length");
      }
      if (!s.rng.empty()) {
        Rng probe;
        probe.set_state(s.rng);
      }
      c.trainers[name] = std::move(s);
    }
    const auto& n = j.at("normalization");
    c.norm.mean = n.at("mean").get<std::vector<double>>();
    c.norm.stddev = n.at("stddev").get<std::vector<double>>();
    if (c.norm.mean.size() != c.norm.stddev.size()) throw FormatError("checkpoint normalization is ragged");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint: ") + e.what());
  }
}

/// Writes atomically: the document goes to a sibling temporary file that is
/// renamed over `path` once complete.
inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint to '" + path + "'");
    out << to_json(c).dump() << '\n';
    if (!out) throw InputError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace tsld
