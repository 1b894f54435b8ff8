#include "lens/calibration.hpp"

namespace lens {

void CalibrationConfig::validate() const {
  if (!(difficulty_floor_factor > 1.0)) {
    throw SpecError("difficulty floor factor must exceed 1");
  }
  if (!(prob_epsilon > 0.0 && prob_epsilon <= 1e-6)) {
    throw SpecError("prob_epsilon must lie in (0, 1e-6]");
  }
  preference.validate();
}

double normalized_prob(const GroupSample& sample, const CalibrationConfig& cfg) {
  return geometric_mean_prob(sample.seq_logprob, sample.length, cfg.prob_epsilon);
}

Vector normalized_probs(const ResponseGroup& group, const CalibrationConfig& cfg) {
  Vector p(static_cast<Eigen::Index>(group.size()));
  for (std::size_t i = 0; i < group.size(); ++i) {
    p[static_cast<Eigen::Index>(i)] = normalized_prob(group.samples[i], cfg);
  }
  return p;
}

std::optional<double> difficulty_importance(const ResponseGroup& group,
                                            const Vector& probs) {
  if (static_cast<std::size_t>(probs.size()) != group.size()) {
    throw SizeError("SizeError: probability vector does not match group size");
  }
  double sum = 0.0;
  bool any_correct = false;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double r = group.samples[i].reward;
    if (r == 1.0) {
      any_correct = true;
      sum += r / probs[static_cast<Eigen::Index>(i)];
    }
  }
  if (!any_correct) return std::nullopt;
  return 1.0 / (sum / static_cast<double>(group.size()));
}

double difficulty(const ResponseGroup& group, const Vector& probs,
                  const CalibrationConfig& cfg) {
  const double floor = cfg.difficulty_floor_factor * probs.maxCoeff();
  if (const auto d_imp = difficulty_importance(group, probs)) {
    return std::max(*d_imp, floor);
  }
  return floor;
}

double negative_scale(std::size_t group_size, const CalibrationConfig& cfg) {
  return cfg.negative_scale == NegativeScale::OneOverG
             ? 1.0 / static_cast<double>(group_size)
             : 1.0;
}

double calibrated_reward(double reward, double prob, double difficulty,
                         std::size_t group_size, const CalibrationConfig& cfg) {
  if (reward != 0.0 && reward != 1.0) {
    throw InvalidReward("InvalidReward: reward must be 0 or 1");
  }
  if (reward == 1.0) return 1.0;
  return -negative_scale(group_size, cfg) * confidence_odds(prob, difficulty);
}

double preference_adjusted_reward(double reward, double prob, double difficulty,
                                  const GroupSample& sample, const PreferenceSpec& spec,
                                  std::size_t group_size, const CalibrationConfig& cfg) {
  if (reward != 0.0 && reward != 1.0) {
    throw InvalidReward("InvalidReward: reward must be 0 or 1");
  }
  if (reward == 1.0) return 1.0;
  const double s = negative_scale(group_size, cfg);
  switch (spec.mode) {
    case PreferenceMode::None:
      return -s * confidence_odds(prob, difficulty);
    case PreferenceMode::DataDistribution:
    case PreferenceMode::PolicyItself:
      // rho = pi cancels: pi / (D * pi - pi) = 1 / (D - 1).
      if (!(difficulty > 1.0)) {
        throw DomainError("DomainError: policy preference needs difficulty > 1, got " +
                          std::to_string(difficulty));
      }
      return -s / (difficulty - 1.0);
    case PreferenceMode::LengthGeometric: {
      spec.validate();
      const double gamma = *spec.gamma;
      const double p = std::min(prob, gamma * (1.0 - 1e-9));
      return -s * (1.0 / static_cast<double>(sample.length)) * p / (gamma - p);
    }
  }
  throw DomainError("unknown preference mode");
}

double empirical_difficulty(const ResponseGroup& group) {
  const auto correct = std::max<std::size_t>(group.num_correct(), 1);
  return static_cast<double>(group.size()) / static_cast<double>(correct);
}

CalibratedGroup calibrate_group(ResponseGroup group, const CalibrationConfig& cfg) {
  CalibratedGroup out;
  out.kind = group.kind();
  out.normalized_probs = normalized_probs(group, cfg);

  const auto mode = cfg.preference.mode;
  const bool policy_preference =
      mode == PreferenceMode::PolicyItself || mode == PreferenceMode::DataDistribution;
  out.difficulty = policy_preference ? empirical_difficulty(group)
                                     : difficulty(group, out.normalized_probs, cfg);

  const auto n = static_cast<Eigen::Index>(group.size());
  out.calibrated_rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& sample = group.samples[static_cast<std::size_t>(i)];
    if (out.kind == GroupKind::AllCorrect) {
      out.calibrated_rewards[i] = 1.0;
    } else if (mode == PreferenceMode::None) {
      out.calibrated_rewards[i] = calibrated_reward(
          sample.reward, out.normalized_probs[i], out.difficulty, group.size(), cfg);
    } else {
      out.calibrated_rewards[i] =
          preference_adjusted_reward(sample.reward, out.normalized_probs[i],
                                     out.difficulty, sample, cfg.preference,
                                     group.size(), cfg);
    }
  }
  out.group = std::move(group);
  return out;
}

}  // namespace lens
