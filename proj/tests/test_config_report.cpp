#include <string>
#include <vector>

#include "doctest.h"
#include "lens/report.hpp"
#include "lens/train_config.hpp"

using namespace lens;

namespace {

const std::string kMinimal =
    R"({"num_questions": 10, "answers_per_question": 8, "steps": 5, "learning_rate": 2.0})";

std::string with(const std::string& extra) {
  return kMinimal.substr(0, kMinimal.size() - 1) + ", " + extra + "}";
}

MetricsLine line(long step, double neg, std::map<std::size_t, double> pass = {},
                 std::optional<double> acc = std::nullopt) {
  MetricsLine l;
  l.algorithm = "lens";
  l.metrics.step = step;
  l.metrics.negative_group_fraction = neg;
  l.metrics.pass_at_k = std::move(pass);
  l.metrics.accuracy = acc;
  return l;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("minimal config takes defaults") {
    const auto cfg = parse_run_config(kMinimal);
    CHECK(cfg.task.num_questions == 10);
    CHECK(cfg.task.answers_per_question == 8);
    CHECK(cfg.train.steps == 5);
    CHECK(cfg.train.learning_rate == 2.0);
    CHECK(cfg.train.group_size == TrainConfig{}.group_size);
    CHECK(cfg.train.alpha == 0.25);
    CHECK_FALSE(cfg.explicit_seed);
  }

  TEST_CASE("optional keys are applied") {
    const auto cfg = parse_run_config(with(
        R"("seed": 9, "alpha": 0.5, "difficulty_profile": "uniform", "pass_ks": [1, 3], "preference": "length", "gamma": 0.8, "negative_scale": "none")"));
    CHECK(cfg.explicit_seed);
    CHECK(cfg.train.seed == 9);
    CHECK(cfg.train.alpha == 0.5);
    CHECK(cfg.task.profile == DifficultyProfile::Uniform);
    CHECK(cfg.train.pass_ks == std::vector<std::size_t>{1, 3});
    CHECK(cfg.train.calibration.preference.mode == PreferenceMode::LengthGeometric);
    CHECK(*cfg.train.calibration.preference.gamma == 0.8);
    CHECK(cfg.train.calibration.negative_scale == NegativeScale::None);
  }

  TEST_CASE("missing required keys are named") {
    try {
      parse_run_config(R"({"num_questions": 10, "answers_per_question": 8, "steps": 5})");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "learning_rate");
      CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    }
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_WITH_AS(parse_run_config(with(R"("lerning_rate": 1)")),
                         doctest::Contains("lerning_rate"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(with(R"("alpha": "big")")), ConfigError);
    CHECK_THROWS_AS(parse_run_config(with(R"("difficulty_profile": "steep")")), ConfigError);
    CHECK_THROWS_AS(parse_run_config(with(R"("clip_epsilon": 2.0)")), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("default document lists every key") {
    const std::string doc = default_config_json();
    for (const char* key : {"num_questions", "learning_rate", "hard_quantile", "pass_ks",
                            "threads", "min_negative_fraction"}) {
      CHECK(doc.find(std::string("\"") + key + "\"") != std::string::npos);
    }
  }
}

TEST_SUITE("report") {
  TEST_CASE("summary takes the last evaluation") {
    const auto s = summarize("a", {line(1, 0.9, {{1, 0.1}}, 0.1), line(2, 0.8),
                                   line(3, 0.5, {{1, 0.3}}, 0.3)});
    CHECK(s.final_step == 3);
    CHECK(s.pass_at_k.at(1) == 0.3);
    CHECK(*s.accuracy == 0.3);
    CHECK(s.negative_fraction.size() == 3);
  }

  TEST_CASE("mismatched k sets leave blanks and warn") {
    const auto a = summarize("a", {line(1, 0.5, {{1, 0.2}, {8, 0.6}})});
    const auto b = summarize("b", {line(1, 0.4, {{1, 0.3}}), line(2, 0.3)});
    const auto r = build_report({a, b});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0] == "run 'b' has no pass@8");
    CHECK(r.table.find("pass@8") != std::string::npos);
    CHECK(r.csv == "step,a,b\n1,0.500000,0.400000\n2,,0.300000\n");
  }
}
