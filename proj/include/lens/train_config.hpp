#pragma once

#include <string>

#include "lens/simulator.hpp"

namespace lens {

/// Bad config document. `field` names the offending key when there is one.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Everything `train` needs: the synthetic task and the optimizer settings.
struct RunConfig {
  SyntheticTaskSpec task;
  TrainConfig train;
  bool explicit_seed = false;  // "seed" present in the document
};

/// Parses a flat JSON object. Required keys: num_questions,
/// answers_per_question, steps, learning_rate. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Every key with its default value (required keys shown as null).
std::string default_config_json();

}  // namespace lens
