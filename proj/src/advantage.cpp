#include "lens/advantage.hpp"

namespace lens {

const char* to_string(AdvantageMode mode) noexcept {
  switch (mode) {
    case AdvantageMode::Full:
      return "full";
    case AdvantageMode::MixedOnly:
      return "mixed-only";
    case AdvantageMode::NegativeOnly:
      return "negative-only";
    case AdvantageMode::GrpoBaseline:
      return "grpo";
  }
  return "unknown";
}

bool AdvantageConfig::validate() const {
  if (!(alpha >= 0.0)) throw SpecError("alpha must be non-negative");
  if (!(std_epsilon >= 0.0)) throw SpecError("std_epsilon must be non-negative");
  return alpha <= 1.0;
}

namespace {

// Scales by alpha and maps -0.0 to +0.0 so alpha = 0 output is identical to an
// explicitly zeroed group.
Vector weighted(const Vector& v, double alpha) {
  return (alpha * v).array() + 0.0;
}

}  // namespace

CalibratedGroup compute_advantages(CalibratedGroup cal, const AdvantageConfig& cfg) {
  const Vector raw = cal.group.rewards();
  const auto n = raw.size();
  const bool negative = cal.kind == GroupKind::Negative;

  switch (cfg.mode) {
    case AdvantageMode::Full:
      cal.advantages = negative ? weighted(normalize_negative(cal.calibrated_rewards), cfg.alpha)
                                : normalize_mixed(cal.calibrated_rewards, cfg.std_epsilon);
      break;
    case AdvantageMode::MixedOnly:
      cal.advantages = negative ? Vector::Zero(n)
                                : normalize_mixed(cal.calibrated_rewards, cfg.std_epsilon);
      break;
    case AdvantageMode::NegativeOnly:
      cal.advantages = negative ? weighted(normalize_negative(cal.calibrated_rewards), cfg.alpha)
                                : normalize_mixed(raw, cfg.std_epsilon);
      break;
    case AdvantageMode::GrpoBaseline:
      cal.advantages = normalize_mixed(raw, cfg.std_epsilon);
      break;
  }
  return cal;
}

}  // namespace lens
