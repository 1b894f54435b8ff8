#include "lens/train_config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace lens {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError(key, "ConfigError: field '" + key + "' " + why);
}

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0) bad(key, "must be a non-negative integer");
  return v.get<std::size_t>();
}

double as_real(const std::string& key, const json& v) {
  if (!v.is_number() || !std::isfinite(v.get<double>())) bad(key, "must be a finite number");
  return v.get<double>();
}

std::string as_text(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "must be a string");
  return v.get<std::string>();
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

struct Key {
  Setter set;
  std::function<json(const RunConfig&)> get;
  bool required = false;
};

// Ordered as printed by --print-config.
const std::vector<std::pair<std::string, Key>>& schema() {
  static const std::vector<std::pair<std::string, Key>> keys = [] {
    std::vector<std::pair<std::string, Key>> k;
    auto count = [&](const char* name, auto member, bool required = false) {
      k.push_back({name,
                   {[member](RunConfig& c, const std::string& key, const json& v) {
                      member(c) = as_count(key, v);
                    },
                    [member](const RunConfig& c) {
                      RunConfig copy = c;
                      return json(member(copy));
                    },
                    required}});
    };
    auto real = [&](const char* name, auto member, bool required = false) {
      k.push_back({name,
                   {[member](RunConfig& c, const std::string& key, const json& v) {
                      member(c) = as_real(key, v);
                    },
                    [member](const RunConfig& c) {
                      RunConfig copy = c;
                      return json(member(copy));
                    },
                    required}});
    };

    count("num_questions", [](RunConfig& c) -> std::size_t& { return c.task.num_questions; }, true);
    count("answers_per_question",
          [](RunConfig& c) -> std::size_t& { return c.task.answers_per_question; }, true);
    count("steps", [](RunConfig& c) -> std::size_t& { return c.train.steps; }, true);
    real("learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }, true);

    k.push_back({"answer_space",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    const auto s = as_text(key, v);
                    if (s == "tabular") {
                      c.task.answer_space = Parameterization::TabularSoftmax;
                    } else if (s == "sequence") {
                      c.task.answer_space = Parameterization::LinearAutoregressive;
                    } else {
                      bad(key, "must be \"tabular\" or \"sequence\"");
                    }
                  },
                  [](const RunConfig& c) {
                    return json(c.task.answer_space == Parameterization::TabularSoftmax
                                    ? "tabular"
                                    : "sequence");
                  }}});
    count("vocab", [](RunConfig& c) -> std::size_t& { return c.task.vocab; });
    count("max_len", [](RunConfig& c) -> std::size_t& { return c.task.max_len; });
    count("correct_min", [](RunConfig& c) -> std::size_t& { return c.task.correct_min; });
    count("correct_max", [](RunConfig& c) -> std::size_t& { return c.task.correct_max; });
    k.push_back({"difficulty_profile",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    const auto s = as_text(key, v);
                    if (s == "uniform") {
                      c.task.profile = DifficultyProfile::Uniform;
                    } else if (s == "hardtail") {
                      c.task.profile = DifficultyProfile::HardTail;
                    } else {
                      bad(key, "must be \"uniform\" or \"hardtail\"");
                    }
                  },
                  [](const RunConfig& c) {
                    return json(c.task.profile == DifficultyProfile::Uniform ? "uniform"
                                                                             : "hardtail");
                  }}});
    real("hard_fraction", [](RunConfig& c) -> double& { return c.task.hard_fraction; });
    real("hard_quantile", [](RunConfig& c) -> double& { return c.task.hard_quantile; });
    real("init_scale", [](RunConfig& c) -> double& { return c.task.init_scale; });
    count("task_seed", [](RunConfig& c) -> std::uint64_t& { return c.task.seed; });
    k.push_back({"min_negative_fraction",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    if (v.is_null()) {
                      c.task.min_negative_fraction.reset();
                    } else {
                      c.task.min_negative_fraction = as_real(key, v);
                    }
                  },
                  [](const RunConfig& c) {
                    return c.task.min_negative_fraction ? json(*c.task.min_negative_fraction)
                                                        : json(nullptr);
                  }}});
    count("probe_group_size", [](RunConfig& c) -> std::size_t& { return c.task.probe_group_size; });
    count("probe_groups", [](RunConfig& c) -> std::size_t& { return c.task.probe_groups; });

    count("seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    count("group_size", [](RunConfig& c) -> std::size_t& { return c.train.group_size; });
    count("questions_per_batch",
          [](RunConfig& c) -> std::size_t& { return c.train.questions_per_batch; });
    count("inner_updates", [](RunConfig& c) -> std::size_t& { return c.train.inner_updates; });
    real("clip_epsilon", [](RunConfig& c) -> double& { return c.train.clip_epsilon; });
    real("alpha", [](RunConfig& c) -> double& { return c.train.alpha; });
    real("temperature", [](RunConfig& c) -> double& { return c.train.temperature; });
    real("floor_factor",
         [](RunConfig& c) -> double& { return c.train.calibration.difficulty_floor_factor; });
    k.push_back({"negative_scale",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    const auto s = as_text(key, v);
                    if (s == "1/G") {
                      c.train.calibration.negative_scale = NegativeScale::OneOverG;
                    } else if (s == "none") {
                      c.train.calibration.negative_scale = NegativeScale::None;
                    } else {
                      bad(key, "must be \"1/G\" or \"none\"");
                    }
                  },
                  [](const RunConfig& c) {
                    return json(c.train.calibration.negative_scale == NegativeScale::OneOverG
                                    ? "1/G"
                                    : "none");
                  }}});
    k.push_back({"preference",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    const auto s = as_text(key, v);
                    auto& mode = c.train.calibration.preference.mode;
                    if (s == "none") {
                      mode = PreferenceMode::None;
                    } else if (s == "data") {
                      mode = PreferenceMode::DataDistribution;
                    } else if (s == "policy") {
                      mode = PreferenceMode::PolicyItself;
                    } else if (s == "length") {
                      mode = PreferenceMode::LengthGeometric;
                    } else {
                      bad(key, "must be one of none, data, policy, length");
                    }
                  },
                  [](const RunConfig& c) {
                    switch (c.train.calibration.preference.mode) {
                      case PreferenceMode::DataDistribution:
                        return json("data");
                      case PreferenceMode::PolicyItself:
                        return json("policy");
                      case PreferenceMode::LengthGeometric:
                        return json("length");
                      case PreferenceMode::None:
                        break;
                    }
                    return json("none");
                  }}});
    k.push_back({"gamma",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    if (v.is_null()) {
                      c.train.calibration.preference.gamma.reset();
                    } else {
                      c.train.calibration.preference.gamma = as_real(key, v);
                    }
                  },
                  [](const RunConfig& c) {
                    const auto& g = c.train.calibration.preference.gamma;
                    return g ? json(*g) : json(nullptr);
                  }}});
    real("std_epsilon", [](RunConfig& c) -> double& { return c.train.advantage.std_epsilon; });
    count("eval_interval", [](RunConfig& c) -> std::size_t& { return c.train.eval_interval; });
    count("eval_samples", [](RunConfig& c) -> std::size_t& { return c.train.eval_samples; });
    k.push_back({"pass_ks",
                 {[](RunConfig& c, const std::string& key, const json& v) {
                    if (!v.is_array() || v.empty()) bad(key, "must be a non-empty integer array");
                    c.train.pass_ks.clear();
                    for (const auto& e : v) {
                      const auto n = as_count(key, e);
                      if (n == 0) bad(key, "entries must be positive");
                      c.train.pass_ks.push_back(n);
                    }
                  },
                  [](const RunConfig& c) { return json(c.train.pass_ks); }}});
    count("threads", [](RunConfig& c) -> std::size_t& { return c.train.threads; });
    return k;
  }();
  return keys;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("ConfigError: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("", "ConfigError: config must be a JSON object");

  std::map<std::string, const Key*> lookup;
  for (const auto& [name, key] : schema()) lookup[name] = &key;
  for (const auto& [name, value] : doc.items()) {
    if (!lookup.contains(name)) bad(name, "is not a known setting");
  }

  RunConfig cfg;
  for (const auto& [name, key] : schema()) {
    auto it = doc.find(name);
    if (it == doc.end()) {
      if (key.required) bad(name, "is required but missing");
      continue;
    }
    key.set(cfg, name, *it);
  }
  cfg.explicit_seed = doc.contains("seed");

  try {
    cfg.task.validate();
    cfg.train.validate();
    cfg.train.calibration.preference.validate();
  } catch (const Error& e) {
    throw ConfigError("", std::string("ConfigError: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "ConfigError: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string default_config_json() {
  const RunConfig defaults{};
  ordered out;
  for (const auto& [name, key] : schema()) {
    out[name] = key.required ? ordered(nullptr) : ordered(key.get(defaults));
  }
  return out.dump(2);
}

}  // namespace lens
