#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/advantage.hpp"
#include "lens/calibration.hpp"
#include "lens/likelihood.hpp"
#include "lens/policy.hpp"

namespace lens {

enum class DifficultyProfile { Uniform, HardTail };

/// Synthetic verifiable task. Answers are either a flat list (tabular policy)
/// or all token strings over a small vocabulary (autoregressive policy).
struct SyntheticTaskSpec {
  std::size_t num_questions = 200;
  Parameterization answer_space = Parameterization::TabularSoftmax;
  std::size_t answers_per_question = 50;
  std::size_t vocab = 4;    // sequence answers, including EOS
  std::size_t max_len = 3;  // sequence answers
  std::size_t correct_min = 1;
  std::size_t correct_max = 2;
  DifficultyProfile profile = DifficultyProfile::HardTail;
  double hard_fraction = 0.4;
  /// Hard questions draw their correct answers from this lowest-mass fraction
  /// of the answer space under the fresh policy.
  double hard_quantile = 0.2;
  /// Standard deviation of the fresh policy's random parameters.
  double init_scale = 1.5;
  std::uint64_t seed = 0;
  /// When set, the task is accepted only if at least this fraction of groups
  /// of `probe_group_size` fresh-policy samples are all-negative (measured over
  /// `probe_groups` groups); otherwise generation retries with a derived seed.
  std::optional<double> min_negative_fraction;
  std::size_t probe_group_size = 8;
  std::size_t probe_groups = 1000;

  void validate() const;
};

struct SyntheticTask {
  EnumerableTask task;
  std::vector<bool> hard;  // per question
  PolicyModel initial_policy;
  double initial_negative_fraction = 0.0;  // measured when probing, else 0
};

SyntheticTask generate_task(const SyntheticTaskSpec& spec);

/// Fraction of all-negative groups of size G over `groups` draws with
/// questions sampled uniformly.
double measure_negative_fraction(const PolicyModel& policy, const EnumerableTask& task,
                                 std::size_t group_size, std::size_t groups,
                                 std::uint64_t seed);

/// A group together with the answer indices the verifier scored.
struct SampledGroup {
  std::size_t question_index = 0;
  ResponseGroup group;
  std::vector<std::size_t> answers;
};

SampledGroup sample_group(const PolicyModel& policy, const EnumerableTask& task,
                          std::size_t question_index, std::size_t group_size, Rng& rng,
                          const std::string& id_prefix = "r");

enum class Algorithm { Lens, Grpo, MixedOnly, NegativeOnly };

const char* to_string(Algorithm algorithm) noexcept;
std::optional<Algorithm> parse_algorithm(const std::string& name);
AdvantageMode advantage_mode(Algorithm algorithm) noexcept;

struct TrainConfig {
  std::size_t group_size = 16;
  std::size_t questions_per_batch = 32;
  std::size_t inner_updates = 4;
  double clip_epsilon = 0.2;
  double learning_rate = 8.0;
  std::size_t steps = 500;
  double alpha = 0.25;
  double temperature = 1.0;
  CalibrationConfig calibration{};
  AdvantageConfig advantage{};
  std::uint64_t seed = 0;
  std::size_t eval_interval = 100;
  std::size_t eval_samples = 16;
  std::vector<std::size_t> pass_ks{1, 2, 4, 8, 16};
  std::size_t threads = 1;

  void validate() const;
};

struct TrainMetrics {
  long step = 0;
  double mean_reward = 0.0;
  double negative_group_fraction = 0.0;
  std::map<std::size_t, double> pass_at_k;  // filled on evaluation steps
  double grad_norm = 0.0;
  double grad_norm_from_negative_groups = 0.0;
  std::optional<double> accuracy;       // exact expected reward, evaluation steps
  std::optional<double> hard_accuracy;  // same, restricted to hard questions
};

/// A calibrated group with the policy-side bookkeeping needed for the update.
struct TrainingGroup {
  std::size_t question_index = 0;
  std::vector<std::size_t> answers;
  CalibratedGroup calibrated;
};

struct UpdateDiagnostics {
  double grad_norm = 0.0;
  double grad_norm_from_negative_groups = 0.0;
  double grad_norm_from_mixed_groups = 0.0;
  std::size_t clipped_tokens = 0;
};

/// Runs `inner_updates` minibatch ascent steps on the clipped surrogate. The
/// old-policy log-probabilities are read from each sample's token_logprobs.
UpdateDiagnostics surrogate_update(PolicyModel& policy, std::span<const TrainingGroup> groups,
                                   const TrainConfig& cfg, long step = 0);

struct EvalResult {
  std::map<std::size_t, double> pass_at_k;
  double accuracy = 0.0;
  std::optional<double> hard_accuracy;
};

EvalResult evaluate(const PolicyModel& policy, const EnumerableTask& task,
                    const std::vector<bool>& hard, const TrainConfig& cfg, long step);

struct TrainResult {
  std::vector<TrainMetrics> metrics;
  PolicyModel final_policy;
};

TrainResult train(const SyntheticTask& task, const TrainConfig& cfg, Algorithm algorithm,
                  const std::function<void(const TrainMetrics&)>& on_step = {});

}  // namespace lens
