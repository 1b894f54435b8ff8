#include <cmath>
#include <vector>

#include "doctest.h"
#include "lens/advantage.hpp"
#include "lens/calibration.hpp"
#include "lens/rng.hpp"

using namespace lens;
using doctest::Approx;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

CalibratedGroup random_group(Rng& rng, std::size_t G, std::size_t correct) {
  std::vector<GroupSample> samples;
  std::vector<std::size_t> order(G);
  for (std::size_t i = 0; i < G; ++i) order[i] = i;
  for (std::size_t i = 0; i < G; ++i) std::swap(order[i], order[i + uniform_index(rng, G - i)]);
  std::vector<double> rewards(G, 0.0);
  for (std::size_t i = 0; i < correct; ++i) rewards[order[i]] = 1.0;
  for (std::size_t i = 0; i < G; ++i) {
    const std::size_t len = 1 + uniform_index(rng, 20);
    samples.push_back({"r", uniform(rng, -30.0, 0.0), len, rewards[i], std::nullopt});
  }
  return calibrate_group(make_group(Question{"q", {}, {}}, std::move(samples)));
}

}  // namespace

TEST_SUITE("advantage") {
  TEST_CASE("z-score with population std") {
    const Vector a = normalize_mixed(vec({1, 0}));
    CHECK(a[0] == Approx(1.0).epsilon(1e-7));
    CHECK(a[1] == Approx(-1.0).epsilon(1e-7));
    CHECK(normalize_mixed(vec({1, 1, 1})).isZero(0.0));

    const Vector b = normalize_mixed(vec({1, -0.5, -0.5}));
    const double std_dev = std::sqrt(0.5);
    CHECK(b[0] == Approx(1.0 / (std_dev + 1e-8)).epsilon(1e-14));
    CHECK(b[1] == Approx(-0.5 / (std_dev + 1e-8)).epsilon(1e-14));
    CHECK(b[0] == Approx(1.41421356).epsilon(1e-7));
    CHECK(b[1] == Approx(-0.70710678).epsilon(1e-7));
  }

  TEST_CASE("de-meaning only for negative groups") {
    const Vector a = normalize_negative(vec({-0.5, -1.0 / 6.0}));
    CHECK(a[0] == Approx(-1.0 / 6.0).epsilon(1e-14));
    CHECK(a[1] == Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(normalize_negative(vec({-0.2, -0.2, -0.2})).cwiseAbs().maxCoeff() <= 1e-16);
    const Vector b = normalize_negative(vec({-1.0 / 3.0, -1.0 / 6.0, -0.5}));
    CHECK(b[0] == Approx(0.0).epsilon(1e-15));
    CHECK(b[1] == Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(b[2] == Approx(-1.0 / 6.0).epsilon(1e-14));
  }

  TEST_CASE("modes on a negative group") {
    std::vector<GroupSample> s{{"a", std::log(0.4), 1, 0.0, std::nullopt},
                               {"b", std::log(0.2), 1, 0.0, std::nullopt}};
    const auto cal = calibrate_group(make_group(Question{"q", {}, {}}, s));

    AdvantageConfig cfg;
    const Vector full = compute_advantages(cal, cfg).advantages;
    CHECK(full[0] == Approx(-0.25 / 6.0).epsilon(1e-12));
    CHECK(full[1] == Approx(0.25 / 6.0).epsilon(1e-12));

    cfg.mode = AdvantageMode::GrpoBaseline;
    CHECK(compute_advantages(cal, cfg).advantages.isZero(0.0));
    cfg.mode = AdvantageMode::MixedOnly;
    CHECK(compute_advantages(cal, cfg).advantages.isZero(0.0));
    cfg.mode = AdvantageMode::NegativeOnly;
    CHECK(compute_advantages(cal, cfg).advantages == full);
  }

  TEST_CASE("modes on a mixed group") {
    std::vector<GroupSample> s{{"a", std::log(0.3), 1, 1.0, std::nullopt},
                               {"b", std::log(0.2), 1, 0.0, std::nullopt}};
    const auto cal = calibrate_group(make_group(Question{"q", {}, {}}, s));
    AdvantageConfig cfg;
    cfg.mode = AdvantageMode::GrpoBaseline;
    const Vector grpo = compute_advantages(cal, cfg).advantages;
    CHECK(grpo[0] == Approx(1.0).epsilon(1e-7));
    CHECK(grpo[1] == Approx(-1.0).epsilon(1e-7));
    cfg.mode = AdvantageMode::NegativeOnly;
    CHECK(compute_advantages(cal, cfg).advantages == grpo);
    cfg.mode = AdvantageMode::MixedOnly;
    const Vector mixed = compute_advantages(cal, cfg).advantages;
    cfg.mode = AdvantageMode::Full;
    CHECK(compute_advantages(cal, cfg).advantages == mixed);
  }

  TEST_CASE("sign invariance on random mixed groups") {
    Rng rng = derive_rng(21, {});
    for (int t = 0; t < 2000; ++t) {
      const std::size_t G = 2 + uniform_index(rng, 63);
      const std::size_t c = 1 + uniform_index(rng, G - 1);
      const auto adv = compute_advantages(random_group(rng, G, c));
      for (std::size_t i = 0; i < G; ++i) {
        const double a = adv.advantages[static_cast<Eigen::Index>(i)];
        if (adv.group.samples[i].reward == 1.0) {
          CHECK(a > 0.0);
        } else {
          CHECK(a < 0.0);
        }
      }
    }
  }

  TEST_CASE("advantages sum to zero") {
    Rng rng = derive_rng(22, {});
    for (int t = 0; t < 1000; ++t) {
      const std::size_t G = 2 + uniform_index(rng, 63);
      const std::size_t c = uniform_index(rng, G);
      const auto adv = compute_advantages(random_group(rng, G, c));
      CHECK(std::abs(adv.advantages.sum()) <= (c == 0 ? 1e-12 : 1e-10));
    }
  }

  TEST_CASE("alpha scales negative groups linearly and alpha = 0 equals mixed-only") {
    Rng rng = derive_rng(23, {});
    for (int t = 0; t < 300; ++t) {
      const std::size_t G = 2 + uniform_index(rng, 30);
      const std::size_t c = uniform_index(rng, G + 1);
      const auto cal = random_group(rng, G, c);
      AdvantageConfig one;
      one.alpha = 1.0;
      AdvantageConfig half;
      half.alpha = 0.5;
      const Vector a1 = compute_advantages(cal, one).advantages;
      const Vector a2 = compute_advantages(cal, half).advantages;
      if (cal.kind == GroupKind::Negative) {
        CHECK((a2 - 0.5 * a1).cwiseAbs().maxCoeff() <= 1e-15);
      } else {
        CHECK(a1 == a2);
      }

      AdvantageConfig zero;
      zero.alpha = 0.0;
      AdvantageConfig mixed_only;
      mixed_only.mode = AdvantageMode::MixedOnly;
      const Vector z = compute_advantages(cal, zero).advantages;
      const Vector m = compute_advantages(cal, mixed_only).advantages;
      CHECK(z == m);
      for (Eigen::Index i = 0; i < z.size(); ++i) CHECK_FALSE(std::signbit(z[i]) != std::signbit(m[i]));
    }
  }

  TEST_CASE("alpha validation") {
    AdvantageConfig cfg;
    CHECK(cfg.validate());
    cfg.alpha = 1.5;
    CHECK_FALSE(cfg.validate());
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
  }
}
