#include <cmath>

#include "doctest.h"
#include "lens/types.hpp"

using namespace lens;

namespace {

GroupSample sample(const char* id, double logprob, double reward) {
  return GroupSample{id, logprob, 1, reward, std::nullopt};
}

}  // namespace

TEST_SUITE("types") {
  TEST_CASE("group kind follows the rewards") {
    const Question q{"q", {}, {}};
    CHECK(make_group(q, {sample("a", -1, 1), sample("b", -1, 0)}).kind() == GroupKind::Mixed);
    CHECK(make_group(q, {sample("a", -1, 0), sample("b", -1, 0), sample("c", -2, 0)}).kind() ==
          GroupKind::Negative);
    CHECK(make_group(q, {sample("a", -1, 1), sample("b", -1, 1)}).kind() ==
          GroupKind::AllCorrect);
  }

  TEST_CASE("classify is a function of the reward vector alone") {
    const double mixed[] = {0.0, 1.0, 0.0};
    const double negative[] = {0.0, 0.0};
    const double correct[] = {1.0, 1.0, 1.0};
    CHECK(classify(mixed) == GroupKind::Mixed);
    CHECK(classify(negative) == GroupKind::Negative);
    CHECK(classify(correct) == GroupKind::AllCorrect);
    CHECK(std::string(to_string(GroupKind::AllCorrect)) == "all_correct");
  }

  TEST_CASE("make_group rejects invalid input") {
    const Question q{"q", {}, {}};
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1)}), SizeError);
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1), sample("b", -1, 0.5)}), InvalidReward);

    GroupSample bad{"b", -1.0, 2, 0.0, std::vector<double>{-0.5, -1.0}};  // sums to -1.5
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1), bad}), InconsistentSample);

    GroupSample wrong_count{"b", -1.0, 3, 0.0, std::vector<double>{-0.5, -0.5}};
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1), wrong_count}), InconsistentSample);

    GroupSample positive{"b", 0.1, 1, 0.0, std::nullopt};
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1), positive}), InconsistentSample);

    GroupSample empty{"b", -1.0, 0, 0.0, std::nullopt};
    CHECK_THROWS_AS(make_group(q, {sample("a", -1, 1), empty}), InconsistentSample);
  }

  TEST_CASE("token log-probs within tolerance are accepted") {
    const Question q{"q", {}, {}};
    GroupSample ok{"b", -1.5, 2, 0.0, std::vector<double>{-0.5, -1.0 + 5e-10}};
    CHECK_NOTHROW(make_group(q, {sample("a", -1, 1), ok}));
  }

  TEST_CASE("questions validate their correct set") {
    auto q = make_question("q", {"A", "B", "C"}, {2, 0});
    CHECK(q.correct_set == std::vector<std::size_t>{0, 2});
    CHECK(q.is_correct(0));
    CHECK_FALSE(q.is_correct(1));
    CHECK_THROWS_AS(make_question("q", {"A"}, {1}), SpecError);
    CHECK_THROWS_AS(make_question("q", {"A", "B"}, {1, 1}), SpecError);
    CHECK_THROWS_AS(make_question("q", {}, {0}), SpecError);
    CHECK_FALSE(make_question("q", {}, {}).enumerable());
  }

  TEST_CASE("preference spec carries gamma only for the length mode") {
    CHECK_NOTHROW(PreferenceSpec::length_geometric(0.9));
    CHECK_THROWS_AS(PreferenceSpec::length_geometric(1.0), SpecError);
    CHECK_THROWS_AS(PreferenceSpec::length_geometric(0.0), SpecError);
    PreferenceSpec stray{PreferenceMode::PolicyItself, 0.5};
    CHECK_THROWS_AS(stray.validate(), SpecError);
  }
}
