#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lens/records.hpp"

namespace lens {

/// The last evaluation and the negative-group curve of one metrics file.
struct RunSummary {
  std::string label;
  std::string algorithm;
  long final_step = 0;
  std::map<std::size_t, double> pass_at_k;
  std::optional<double> accuracy;
  std::optional<double> hard_accuracy;
  std::map<long, double> negative_fraction;  // step -> fraction
};

RunSummary summarize(std::string label, const std::vector<MetricsLine>& lines);

struct Report {
  std::string table;  // aligned text, one column per run
  std::string csv;    // step, then one negative-fraction column per run
  std::vector<std::string> warnings;
};

Report build_report(const std::vector<RunSummary>& runs);

}  // namespace lens
