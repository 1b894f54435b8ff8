#pragma once

#include <cmath>

#include "lens/types.hpp"

namespace lens {

enum class AdvantageMode { Full, MixedOnly, NegativeOnly, GrpoBaseline };

const char* to_string(AdvantageMode mode) noexcept;

struct AdvantageConfig {
  double alpha = 0.25;
  double std_epsilon = 1e-8;
  AdvantageMode mode = AdvantageMode::Full;

  /// Returns false (and leaves validation to the caller's logging) when alpha
  /// falls outside [0, 1]; throws on negative alpha.
  bool validate() const;
};

/// Group z-score (r - mean) / (std + eps) with population std. Groups whose
/// std is below eps map to all zeros.
template <typename Derived>
Vector normalize_mixed(const Eigen::DenseBase<Derived>& rewards, double std_epsilon = 1e-8) {
  const Eigen::Index n = rewards.size();
  Vector out = Vector::Zero(n);
  if (n == 0) return out;
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += rewards(i);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = rewards(i) - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(n));
  if (std_dev < std_epsilon) return out;
  const double denom = std_dev + std_epsilon;
  for (Eigen::Index i = 0; i < n; ++i) out[i] = (rewards(i) - mean) / denom;
  return out;
}

/// De-meaning only: r - mean(r).
template <typename Derived>
Vector normalize_negative(const Eigen::DenseBase<Derived>& rewards) {
  const Eigen::Index n = rewards.size();
  Vector out(n);
  if (n == 0) return out;
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += rewards(i);
  mean /= static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = rewards(i) - mean;
  return out;
}

/// Fills `advantages` according to the group kind and the configured mode.
CalibratedGroup compute_advantages(CalibratedGroup cal, const AdvantageConfig& cfg = {});

}  // namespace lens
