#include "lens/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lens {

bool Question::is_correct(std::size_t answer) const noexcept {
  return std::binary_search(correct_set.begin(), correct_set.end(), answer);
}

Question make_question(std::string id, std::vector<std::string> answer_space,
                       std::vector<std::size_t> correct_set) {
  if (answer_space.empty() && !correct_set.empty()) {
    throw SpecError("question '" + id + "': correct_set without answer_space");
  }
  std::sort(correct_set.begin(), correct_set.end());
  if (std::adjacent_find(correct_set.begin(), correct_set.end()) !=
      correct_set.end()) {
    throw SpecError("question '" + id + "': duplicate correct answer");
  }
  if (!correct_set.empty() && correct_set.back() >= answer_space.size()) {
    throw SpecError("question '" + id + "': correct answer outside answer_space");
  }
  return Question{std::move(id), std::move(answer_space), std::move(correct_set)};
}

const char* to_string(GroupKind kind) noexcept {
  switch (kind) {
    case GroupKind::Mixed:
      return "mixed";
    case GroupKind::Negative:
      return "negative";
    case GroupKind::AllCorrect:
      return "all_correct";
  }
  return "unknown";
}

GroupKind classify(std::span<const double> rewards) {
  const auto correct =
      std::count_if(rewards.begin(), rewards.end(), [](double r) { return r == 1.0; });
  if (correct == 0) return GroupKind::Negative;
  if (static_cast<std::size_t>(correct) == rewards.size()) return GroupKind::AllCorrect;
  return GroupKind::Mixed;
}

Vector ResponseGroup::rewards() const {
  Vector r(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = samples[i].reward;
  }
  return r;
}

std::size_t ResponseGroup::num_correct() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [](const GroupSample& s) { return s.correct(); }));
}

GroupKind ResponseGroup::kind() const {
  const Vector r = rewards();
  return classify(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

void validate_sample(const GroupSample& sample) {
  if (sample.reward != 0.0 && sample.reward != 1.0) {
    throw InvalidReward("InvalidReward: response '" + sample.response_id +
                        "' has reward " + std::to_string(sample.reward) +
                        " (expected 0 or 1)");
  }
  if (sample.length < 1) {
    throw InconsistentSample("InconsistentSample: response '" + sample.response_id +
                             "' has length 0");
  }
  if (!std::isfinite(sample.seq_logprob) || sample.seq_logprob > 0.0) {
    throw InconsistentSample("InconsistentSample: response '" + sample.response_id +
                             "' has seq_logprob outside (-inf, 0]");
  }
  if (sample.token_logprobs) {
    const auto& tokens = *sample.token_logprobs;
    if (tokens.size() != sample.length) {
      throw InconsistentSample("InconsistentSample: response '" + sample.response_id +
                               "' has " + std::to_string(tokens.size()) +
                               " token log-probs for length " +
                               std::to_string(sample.length));
    }
    for (double t : tokens) {
      if (!std::isfinite(t) || t > 0.0) {
        throw InconsistentSample("InconsistentSample: response '" +
                                 sample.response_id + "' has a token log-prob > 0");
      }
    }
    const double sum = std::accumulate(tokens.begin(), tokens.end(), 0.0);
    if (std::abs(sum - sample.seq_logprob) > 1e-9) {
      throw InconsistentSample("InconsistentSample: response '" + sample.response_id +
                               "' token log-probs do not sum to seq_logprob");
    }
  }
}

ResponseGroup make_group(Question question, std::vector<GroupSample> samples) {
  if (samples.size() < 2) {
    throw SizeError("SizeError: group for question '" + question.id + "' has " +
                    std::to_string(samples.size()) + " samples (need at least 2)");
  }
  for (const auto& s : samples) validate_sample(s);
  return ResponseGroup{std::move(question), std::move(samples)};
}

PreferenceSpec PreferenceSpec::length_geometric(double gamma) {
  PreferenceSpec spec{PreferenceMode::LengthGeometric, gamma};
  spec.validate();
  return spec;
}

void PreferenceSpec::validate() const {
  if (mode == PreferenceMode::LengthGeometric) {
    if (!gamma || !(*gamma > 0.0 && *gamma < 1.0)) {
      throw SpecError("length preference requires gamma in (0, 1)");
    }
  } else if (gamma) {
    throw SpecError("gamma is only valid with the length preference");
  }
}

}  // namespace lens
