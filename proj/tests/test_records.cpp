#include <sstream>
#include <string>

#include "doctest.h"
#include "lens/records.hpp"

using namespace lens;

namespace {

std::string rec(const std::string& gid, const std::string& rid, double lp, int reward,
                const std::string& qid = "q") {
  return "{\"group_id\":\"" + gid + "\",\"question_id\":\"" + qid + "\",\"response_id\":\"" +
         rid + "\",\"seq_logprob\":" + std::to_string(lp) + ",\"length\":1,\"reward\":" +
         std::to_string(reward) + "}";
}

TrajectoryRecord parsed(const std::string& gid, const std::string& rid, int reward,
                        const std::string& qid = "q") {
  return parse_trajectory(rec(gid, rid, -1.0, reward, qid), 1);
}

}  // namespace

TEST_SUITE("records") {
  TEST_CASE("trajectory round trip") {
    const auto r = parse_trajectory(
        R"({"group_id":"g","question_id":"q","response_id":"r","seq_logprob":-2.5,"length":2,"reward":1,"token_logprobs":[-1.0,-1.5]})",
        1);
    CHECK(r.length == 2);
    CHECK(r.reward == 1.0);
    REQUIRE(r.token_logprobs);
    CHECK(r.token_logprobs->size() == 2);
    CHECK(parse_trajectory(format_trajectory(r), 1).seq_logprob == r.seq_logprob);
  }

  TEST_CASE("parse errors carry the line number") {
    try {
      parse_trajectory("{not json", 7);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 7);
      CHECK(std::string(e.what()).rfind("line 7: ", 0) == 0);
    }
    CHECK_THROWS_WITH_AS(parse_trajectory(R"({"group_id":"g"})", 3),
                         doctest::Contains("missing field"), ParseError);
    CHECK_THROWS_WITH_AS(parse_trajectory(rec("g", "r", -1.0, 0).replace(
                                              rec("g", "r", -1.0, 0).find("\"length\":1"), 10,
                                              "\"length\":0"),
                                          2),
                         doctest::Contains("length"), ParseError);
  }

  TEST_CASE("rewards must be binary") {
    std::string line = rec("g", "r", -1.0, 0);
    line.replace(line.find("\"reward\":0"), 10, "\"reward\":0.5");
    CHECK_THROWS_WITH_AS(parse_trajectory(line, 4), doctest::Contains("InvalidReward"),
                         ParseError);
  }

  TEST_CASE("positive log-probabilities are rejected") {
    CHECK_THROWS_AS(parse_trajectory(rec("g", "r", 0.5, 0), 1), ParseError);
  }

  TEST_CASE("interleaved groups assemble at end of input") {
    GroupAssembler asm_;
    CHECK(asm_.push(parsed("a", "1", 1), 1).empty());
    CHECK(asm_.push(parsed("b", "1", 0, "p"), 2).empty());
    CHECK(asm_.push(parsed("a", "2", 0), 3).empty());
    CHECK(asm_.push(parsed("b", "2", 0, "p"), 4).empty());
    CHECK(asm_.buffered_records() == 4);
    const auto groups = asm_.finish();
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].group_id == "a");
    CHECK(groups[0].first_line == 1);
    CHECK(groups[1].group.question.id == "p");
    CHECK(groups[1].group.kind() == GroupKind::Negative);
  }

  TEST_CASE("fixed group size releases groups as they fill") {
    GroupAssembler asm_(2);
    CHECK(asm_.push(parsed("a", "1", 1), 1).empty());
    CHECK(asm_.push(parsed("b", "1", 0), 2).empty());
    const auto done = asm_.push(parsed("a", "2", 0), 3);
    REQUIRE(done.size() == 1);
    CHECK(done[0].group_id == "a");
    CHECK(asm_.buffered_records() == 1);
    CHECK_THROWS_AS(asm_.finish(), IncompleteGroup);
    CHECK_THROWS_AS(GroupAssembler(1), SizeError);
  }

  TEST_CASE("strict mode closes a group when its id changes") {
    GroupAssembler asm_(std::nullopt, true);
    asm_.push(parsed("a", "1", 1), 1);
    asm_.push(parsed("a", "2", 0), 2);
    const auto done = asm_.push(parsed("b", "1", 0), 3);
    REQUIRE(done.size() == 1);
    CHECK(done[0].group.size() == 2);
    CHECK_THROWS_AS(asm_.push(parsed("c", "1", 0), 4), IncompleteGroup);
  }

  TEST_CASE("singleton and mixed-question groups") {
    GroupAssembler asm_;
    asm_.push(parsed("a", "1", 1), 1);
    CHECK_THROWS_WITH_AS(asm_.finish(), doctest::Contains("IncompleteGroup"), IncompleteGroup);
    GroupAssembler other;
    other.push(parsed("a", "1", 1, "q1"), 1);
    CHECK_THROWS_AS(other.push(parsed("a", "2", 1, "q2"), 2), ParseError);
  }

  TEST_CASE("advantage lines keep field order") {
    GroupAssembler asm_;
    asm_.push(parsed("g", "x", 1), 1);
    asm_.push(parsed("g", "y", 0), 2);
    const auto g = asm_.finish();
    const auto lines = format_advantages("g", compute_advantages(calibrate_group(g[0].group)));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("{\"group_id\":\"g\",\"response_id\":\"x\",\"normalized_prob\":", 0) == 0);
    CHECK(lines[1].find("\"group_kind\":\"mixed\"}") != std::string::npos);
  }

  TEST_CASE("metrics round trip") {
    TrainMetrics m;
    m.step = 12;
    m.mean_reward = 0.25;
    m.negative_group_fraction = 0.5;
    m.grad_norm = 1.5;
    m.grad_norm_from_negative_groups = 0.75;
    m.pass_at_k = {{1, 0.1}, {8, 0.4}};
    m.accuracy = 0.2;
    m.hard_accuracy = 0.05;
    const std::string line = metrics_to_json(m, Algorithm::Lens);
    CHECK(line.rfind("{\"algorithm\":\"lens\",\"step\":12", 0) == 0);
    const auto back = metrics_from_json(line, 1);
    CHECK(back.algorithm == "lens");
    CHECK(back.metrics.step == 12);
    CHECK(back.metrics.pass_at_k == m.pass_at_k);
    CHECK(back.metrics.hard_accuracy == m.hard_accuracy);

    std::istringstream in(line + "\n\n" + metrics_to_json(m, Algorithm::Grpo) + "\n");
    CHECK(read_metrics(in).size() == 2);
    std::istringstream bad(line + "\n{\"step\":1}\n");
    CHECK_THROWS_WITH_AS(read_metrics(bad), doctest::Contains("line 2"), ParseError);
  }
}
