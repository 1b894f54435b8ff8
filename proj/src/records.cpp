#include "lens/records.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace lens {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

std::string g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& obj, const char* name, std::size_t line) {
  const json& v = field(obj, name, line);
  if (!v.is_string()) throw ParseError(line, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

double number_field(const json& obj, const char* name, std::size_t line) {
  const json& v = field(obj, name, line);
  if (!v.is_number()) throw ParseError(line, std::string("field '") + name + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(line, std::string("field '") + name + "' is not finite");
  return d;
}

}  // namespace

TrajectoryRecord parse_trajectory(const std::string& line, std::size_t n) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(n, std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(n, "record must be a JSON object");

  TrajectoryRecord r;
  r.group_id = string_field(obj, "group_id", n);
  r.question_id = string_field(obj, "question_id", n);
  r.response_id = string_field(obj, "response_id", n);
  r.seq_logprob = number_field(obj, "seq_logprob", n);

  const json& len = field(obj, "length", n);
  if (!len.is_number_integer() || len.get<long long>() < 1) {
    throw ParseError(n, "field 'length' must be a positive integer");
  }
  r.length = len.get<std::size_t>();

  r.reward = number_field(obj, "reward", n);
  if (r.reward != 0.0 && r.reward != 1.0) {
    throw ParseError(n, "InvalidReward: reward " + g12(r.reward) + " (expected 0 or 1)");
  }

  if (auto it = obj.find("token_logprobs"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(n, "field 'token_logprobs' must be an array");
    std::vector<double> tokens;
    tokens.reserve(it->size());
    for (const auto& t : *it) {
      if (!t.is_number() || !std::isfinite(t.get<double>())) {
        throw ParseError(n, "field 'token_logprobs' must hold finite numbers");
      }
      tokens.push_back(t.get<double>());
    }
    r.token_logprobs = std::move(tokens);
  }

  GroupSample probe{r.response_id, r.seq_logprob, r.length, r.reward, r.token_logprobs};
  try {
    validate_sample(probe);
  } catch (const Error& e) {
    throw ParseError(n, e.what());
  }
  return r;
}

std::string format_trajectory(const TrajectoryRecord& r) {
  ordered j;
  j["group_id"] = r.group_id;
  j["question_id"] = r.question_id;
  j["response_id"] = r.response_id;
  j["seq_logprob"] = r.seq_logprob;
  j["length"] = r.length;
  j["reward"] = static_cast<int>(r.reward);
  if (r.token_logprobs) j["token_logprobs"] = *r.token_logprobs;
  return j.dump();
}

std::vector<std::string> format_advantages(const std::string& group_id,
                                           const CalibratedGroup& cal) {
  std::vector<std::string> out;
  out.reserve(cal.group.size());
  const std::string gid = json(group_id).dump();
  const std::string kind = json(to_string(cal.kind)).dump();
  for (std::size_t i = 0; i < cal.group.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out.push_back("{\"group_id\":" + gid +
                  ",\"response_id\":" + json(cal.group.samples[i].response_id).dump() +
                  ",\"normalized_prob\":" + g12(cal.normalized_probs[k]) +
                  ",\"difficulty\":" + g12(cal.difficulty) +
                  ",\"calibrated_reward\":" + g12(cal.calibrated_rewards[k]) +
                  ",\"advantage\":" + g12(cal.advantages[k]) + ",\"group_kind\":" + kind + "}");
  }
  return out;
}

GroupAssembler::GroupAssembler(std::optional<std::size_t> group_size, bool strict_contiguous)
    : group_size_(group_size), strict_(strict_contiguous) {
  if (group_size_ && *group_size_ < 2) throw SizeError("SizeError: group size must be at least 2");
}

GroupAssembler::Group GroupAssembler::close(Pending p) const {
  if (group_size_ && p.samples.size() != *group_size_) {
    throw IncompleteGroup("IncompleteGroup: group '" + p.group_id + "' (line " +
                          std::to_string(p.first_line) + ") has " +
                          std::to_string(p.samples.size()) + " of " +
                          std::to_string(*group_size_) + " records");
  }
  if (p.samples.size() < 2) {
    throw IncompleteGroup("IncompleteGroup: group '" + p.group_id + "' (line " +
                          std::to_string(p.first_line) + ") has fewer than 2 records");
  }
  return Group{p.group_id, p.first_line,
               make_group(Question{p.question_id, {}, {}}, std::move(p.samples))};
}

std::vector<GroupAssembler::Group> GroupAssembler::push(TrajectoryRecord r, std::size_t line) {
  std::vector<Group> done;
  if (strict_ && !open_.empty() && open_.back().group_id != r.group_id) {
    Pending prev = std::move(open_.back());
    open_.pop_back();
    index_.erase(prev.group_id);
    buffered_ -= prev.samples.size();
    done.push_back(close(std::move(prev)));
  }

  auto it = index_.find(r.group_id);
  if (it == index_.end()) {
    it = index_.emplace(r.group_id, open_.size()).first;
    open_.push_back(Pending{r.group_id, r.question_id, line, {}});
  }
  Pending& p = open_[it->second];
  if (p.question_id != r.question_id) {
    throw ParseError(line, "group '" + r.group_id + "' mixes question ids '" + p.question_id +
                               "' and '" + r.question_id + "'");
  }
  p.samples.push_back(
      GroupSample{std::move(r.response_id), r.seq_logprob, r.length, r.reward,
                  std::move(r.token_logprobs)});
  ++buffered_;

  if (group_size_ && p.samples.size() == *group_size_) {
    const std::size_t slot = it->second;
    Pending full = std::move(open_[slot]);
    open_.erase(open_.begin() + static_cast<std::ptrdiff_t>(slot));
    index_.erase(full.group_id);
    for (auto& [id, pos] : index_) {
      if (pos > slot) --pos;
    }
    buffered_ -= full.samples.size();
    done.push_back(close(std::move(full)));
  }
  return done;
}

std::vector<GroupAssembler::Group> GroupAssembler::finish() {
  std::vector<Group> done;
  for (auto& p : open_) {
    done.push_back(close(std::move(p)));
  }
  open_.clear();
  index_.clear();
  buffered_ = 0;
  return done;
}

std::string metrics_to_json(const TrainMetrics& m, Algorithm algorithm) {
  ordered j;
  j["algorithm"] = to_string(algorithm);
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["negative_group_fraction"] = m.negative_group_fraction;
  j["grad_norm"] = m.grad_norm;
  j["grad_norm_from_negative_groups"] = m.grad_norm_from_negative_groups;
  if (!m.pass_at_k.empty()) {
    ordered p = ordered::object();
    for (const auto& [k, v] : m.pass_at_k) p[std::to_string(k)] = v;
    j["pass_at_k"] = p;
  }
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.hard_accuracy) j["hard_accuracy"] = *m.hard_accuracy;
  return j.dump();
}

MetricsLine metrics_from_json(const std::string& line, std::size_t n) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(n, std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(n, "metrics line must be a JSON object");
  MetricsLine out;
  out.algorithm = string_field(obj, "algorithm", n);
  const json& step = field(obj, "step", n);
  if (!step.is_number_integer()) throw ParseError(n, "field 'step' must be an integer");
  out.metrics.step = step.get<long>();
  out.metrics.mean_reward = number_field(obj, "mean_reward", n);
  out.metrics.negative_group_fraction = number_field(obj, "negative_group_fraction", n);
  out.metrics.grad_norm = number_field(obj, "grad_norm", n);
  out.metrics.grad_norm_from_negative_groups =
      number_field(obj, "grad_norm_from_negative_groups", n);
  if (auto it = obj.find("pass_at_k"); it != obj.end()) {
    if (!it->is_object()) throw ParseError(n, "field 'pass_at_k' must be an object");
    for (const auto& [key, value] : it->items()) {
      std::size_t k = 0;
      try {
        std::size_t used = 0;
        k = std::stoul(key, &used);
        if (used != key.size() || k == 0) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ParseError(n, "pass_at_k key '" + key + "' is not a positive integer");
      }
      if (!value.is_number()) throw ParseError(n, "pass_at_k values must be numbers");
      out.metrics.pass_at_k[k] = value.get<double>();
    }
  }
  if (obj.contains("accuracy")) out.metrics.accuracy = number_field(obj, "accuracy", n);
  if (obj.contains("hard_accuracy")) {
    out.metrics.hard_accuracy = number_field(obj, "hard_accuracy", n);
  }
  return out;
}

std::vector<MetricsLine> read_metrics(std::istream& in) {
  std::vector<MetricsLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(metrics_from_json(line, n));
  }
  return out;
}

}  // namespace lens
