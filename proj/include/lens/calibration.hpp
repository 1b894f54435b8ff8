#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>

#include "lens/types.hpp"

namespace lens {

enum class NegativeScale { OneOverG, None };

struct CalibrationConfig {
  double difficulty_floor_factor = 2.0;
  NegativeScale negative_scale = NegativeScale::OneOverG;
  PreferenceSpec preference{};
  double prob_epsilon = 1e-12;

  void validate() const;
};

/// Geometric-mean probability exp(logprob / length), clamped to [eps, 1 - eps].
template <typename Scalar>
Scalar geometric_mean_prob(Scalar seq_logprob, std::size_t length, Scalar eps) {
  using std::exp;
  const Scalar p = exp(seq_logprob / static_cast<Scalar>(length));
  return std::clamp(p, eps, Scalar(1) - eps);
}

/// The policy's confidence odds pi / (D - pi). This is the negative-sample
/// coefficient of the likelihood gradient as well as the (unscaled) penalty of
/// the calibrated reward, so both call sites share this one evaluation.
template <typename Scalar>
Scalar confidence_odds(Scalar prob, Scalar difficulty) {
  if (!(prob < difficulty)) {
    throw DomainError("DomainError: probability " + std::to_string(double(prob)) +
                      " is not below the difficulty " +
                      std::to_string(double(difficulty)));
  }
  return prob / (difficulty - prob);
}

/// Unscaled calibrated reward r - (1 - r) * pi / (D - pi) for binary r.
template <typename Scalar>
Scalar unscaled_calibrated_reward(Scalar reward, Scalar prob, Scalar difficulty) {
  if (reward == Scalar(1)) return Scalar(1);
  return -confidence_odds(prob, difficulty);
}

double normalized_prob(const GroupSample& sample, const CalibrationConfig& cfg = {});

Vector normalized_probs(const ResponseGroup& group, const CalibrationConfig& cfg = {});

/// Importance-sampling difficulty {(1/G) sum r_i / p_i}^-1; empty for
/// negative groups.
std::optional<double> difficulty_importance(const ResponseGroup& group,
                                            const Vector& probs);

/// Floored difficulty: max(D_imp, f * max p) or the fallback f * max p.
double difficulty(const ResponseGroup& group, const Vector& probs,
                  const CalibrationConfig& cfg = {});

/// 1/G or 1 depending on the configured negative scale.
double negative_scale(std::size_t group_size, const CalibrationConfig& cfg);

double calibrated_reward(double reward, double prob, double difficulty,
                         std::size_t group_size, const CalibrationConfig& cfg = {});

/// Calibrated reward under a preference over correct answers. `cfg` supplies
/// the negative scale; `cfg.preference` is ignored in favour of `spec`.
double preference_adjusted_reward(double reward, double prob, double difficulty,
                                  const GroupSample& sample, const PreferenceSpec& spec,
                                  std::size_t group_size,
                                  const CalibrationConfig& cfg = {});

/// Difficulty used by the policy-as-preference modes: the inverse empirical
/// correctness rate G / c, with c floored at one for negative groups.
double empirical_difficulty(const ResponseGroup& group);

CalibratedGroup calibrate_group(ResponseGroup group, const CalibrationConfig& cfg = {});

}  // namespace lens
