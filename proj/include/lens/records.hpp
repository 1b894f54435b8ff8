#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lens/simulator.hpp"
#include "lens/types.hpp"

namespace lens {

/// Malformed input line. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A group that cannot be completed (too few records, wrong size, or split
/// under strict-contiguous mode).
class IncompleteGroup : public Error {
 public:
  using Error::Error;
};

struct TrajectoryRecord {
  std::string group_id;
  std::string question_id;
  std::string response_id;
  double seq_logprob = 0.0;
  std::size_t length = 1;
  double reward = 0.0;
  std::optional<std::vector<double>> token_logprobs;
};

TrajectoryRecord parse_trajectory(const std::string& line, std::size_t line_number);
std::string format_trajectory(const TrajectoryRecord& record);

/// One AdvantageRecord line per sample, numbers at 12 significant digits.
std::vector<std::string> format_advantages(const std::string& group_id,
                                           const CalibratedGroup& cal);

/// Buffers records per group_id and releases complete groups.
///
/// With an expected size a group is released as soon as it holds that many
/// records. Without one, a group is released when its id is left behind in
/// strict-contiguous mode, or at end of input otherwise.
class GroupAssembler {
 public:
  struct Group {
    std::string group_id;
    std::size_t first_line = 0;
    ResponseGroup group;
  };

  explicit GroupAssembler(std::optional<std::size_t> group_size = std::nullopt,
                          bool strict_contiguous = false);

  std::vector<Group> push(TrajectoryRecord record, std::size_t line_number);
  std::vector<Group> finish();
  std::size_t buffered_records() const noexcept { return buffered_; }

 private:
  struct Pending {
    std::string group_id;
    std::string question_id;
    std::size_t first_line = 0;
    std::vector<GroupSample> samples;
  };

  Group close(Pending pending) const;

  std::optional<std::size_t> group_size_;
  bool strict_;
  std::vector<Pending> open_;  // first-seen order
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t buffered_ = 0;
};

std::string metrics_to_json(const TrainMetrics& metrics, Algorithm algorithm);

struct MetricsLine {
  std::string algorithm;
  TrainMetrics metrics;
};

MetricsLine metrics_from_json(const std::string& line, std::size_t line_number);
std::vector<MetricsLine> read_metrics(std::istream& in);

}  // namespace lens
