#include "lens/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace lens {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RunSummary summarize(std::string label, const std::vector<MetricsLine>& lines) {
  RunSummary s;
  s.label = std::move(label);
  for (const auto& line : lines) {
    const auto& m = line.metrics;
    if (s.algorithm.empty()) s.algorithm = line.algorithm;
    s.final_step = std::max(s.final_step, m.step);
    s.negative_fraction[m.step] = m.negative_group_fraction;
    if (!m.pass_at_k.empty()) s.pass_at_k = m.pass_at_k;
    if (m.accuracy) s.accuracy = m.accuracy;
    if (m.hard_accuracy) s.hard_accuracy = m.hard_accuracy;
  }
  return s;
}

Report build_report(const std::vector<RunSummary>& runs) {
  Report report;
  std::set<std::size_t> ks;
  std::set<long> steps;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.pass_at_k) ks.insert(k);
    for (const auto& [step, v] : r.negative_fraction) steps.insert(step);
  }
  for (const auto& r : runs) {
    for (auto k : ks) {
      if (!r.pass_at_k.contains(k)) {
        report.warnings.push_back("run '" + r.label + "' has no pass@" + std::to_string(k));
      }
    }
  }

  std::vector<std::string> header{"metric"};
  for (const auto& r : runs) header.push_back(r.label + " (" + r.algorithm + ")");
  std::vector<std::vector<std::string>> rows;
  for (auto k : ks) {
    std::vector<std::string> row{"pass@" + std::to_string(k)};
    for (const auto& r : runs) {
      auto it = r.pass_at_k.find(k);
      row.push_back(it == r.pass_at_k.end() ? "" : fixed(it->second));
    }
    rows.push_back(std::move(row));
  }
  auto optional_row = [&](const char* name, auto member) {
    std::vector<std::string> row{name};
    bool any = false;
    for (const auto& r : runs) {
      const auto& v = r.*member;
      row.push_back(v ? fixed(*v) : "");
      any |= v.has_value();
    }
    if (any) rows.push_back(std::move(row));
  };
  optional_row("accuracy", &RunSummary::accuracy);
  optional_row("hard_accuracy", &RunSummary::hard_accuracy);
  {
    std::vector<std::string> row{"final_step"};
    for (const auto& r : runs) row.push_back(std::to_string(r.final_step));
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream table;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) table << "  ";
      const std::string pad(width[c] - row[c].size(), ' ');
      table << (c == 0 ? row[c] + pad : pad + row[c]);
    }
    table << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  report.table = table.str();

  std::ostringstream csv;
  csv << "step";
  for (const auto& r : runs) csv << ',' << csv_cell(r.label);
  csv << '\n';
  for (long step : steps) {
    csv << step;
    for (const auto& r : runs) {
      csv << ',';
      if (auto it = r.negative_fraction.find(step); it != r.negative_fraction.end()) {
        csv << fixed(it->second, 6);
      }
    }
    csv << '\n';
  }
  report.csv = csv.str();
  return report;
}

}  // namespace lens
