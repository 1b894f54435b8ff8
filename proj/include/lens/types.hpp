#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Every failure raised by the library derives from Error so
// callers (the CLI in particular) can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class InconsistentSample : public Error {
 public:
  using Error::Error;
};

class InvalidReward : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class EmptyCorrectSet : public Error {
 public:
  using Error::Error;
};

class KTooLarge : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  NonFiniteGradient(const std::string& what, long step)
      : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// A question. `answer_space` is empty for opaque questions (trajectory files);
/// synthetic tasks enumerate every answer and list the correct ones by index.
struct Question {
  std::string id;
  std::vector<std::string> answer_space;
  std::vector<std::size_t> correct_set;  // sorted indices into answer_space

  bool enumerable() const noexcept { return !answer_space.empty(); }
  bool is_correct(std::size_t answer) const noexcept;
};

/// Validates the invariants and sorts `correct_set`.
Question make_question(std::string id, std::vector<std::string> answer_space,
                       std::vector<std::size_t> correct_set);

/// One sampled response. `seq_logprob` is the natural log of the sampling
/// policy's probability for the whole sequence.
struct GroupSample {
  std::string response_id;
  double seq_logprob = 0.0;
  std::size_t length = 1;
  double reward = 0.0;
  std::optional<std::vector<double>> token_logprobs;

  bool correct() const noexcept { return reward == 1.0; }
};

enum class GroupKind { Mixed, Negative, AllCorrect };

const char* to_string(GroupKind kind) noexcept;

/// Pure function of the reward vector.
GroupKind classify(std::span<const double> rewards);

struct ResponseGroup {
  Question question;
  std::vector<GroupSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  Vector rewards() const;
  std::size_t num_correct() const noexcept;
  GroupKind kind() const;
};

/// Builds a validated group. Throws SizeError, InconsistentSample or
/// InvalidReward.
ResponseGroup make_group(Question question, std::vector<GroupSample> samples);

/// Throws when a single sample breaks its own invariants.
void validate_sample(const GroupSample& sample);

struct CalibratedGroup {
  ResponseGroup group;
  Vector normalized_probs;
  double difficulty = 1.0;
  Vector calibrated_rewards;
  GroupKind kind = GroupKind::Mixed;
  Vector advantages;  // empty until compute_advantages runs
};

enum class PreferenceMode { None, DataDistribution, PolicyItself, LengthGeometric };

struct PreferenceSpec {
  PreferenceMode mode = PreferenceMode::None;
  std::optional<double> gamma;  // LengthGeometric only

  static PreferenceSpec none() { return {}; }
  static PreferenceSpec data_distribution() {
    return {PreferenceMode::DataDistribution, std::nullopt};
  }
  static PreferenceSpec policy_itself() {
    return {PreferenceMode::PolicyItself, std::nullopt};
  }
  static PreferenceSpec length_geometric(double gamma);

  void validate() const;
};

}  // namespace lens
