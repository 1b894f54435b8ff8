// lens: calibrate trajectory files, run the verification suite, train on
// synthetic tasks, and compare metric streams.
//
// Exit codes:
//   0  success
//   1  a verification check failed
//   2  malformed input, config or usage
//   3  incomplete group
//   4  non-finite gradient during training

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "lens/advantage.hpp"
#include "lens/calibration.hpp"
#include "lens/likelihood.hpp"
#include "lens/records.hpp"
#include "lens/report.hpp"
#include "lens/simulator.hpp"
#include "lens/train_config.hpp"

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kBadInput = 2, kIncomplete = 3, kNonFinite = 4 };

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("LENS_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used == std::string(raw).size()) return v;
  } catch (const std::exception&) {
  }
  std::cerr << "lens: ignoring non-integer LENS_SEED '" << raw << "'\n";
  return std::nullopt;
}

// "-" means the standard stream.
class Input {
 public:
  explicit Input(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ifstream>(path);
      if (!*file_) throw std::runtime_error("cannot open '" + path + "'");
    }
  }
  std::istream& get() { return file_ ? *file_ : std::cin; }

 private:
  std::unique_ptr<std::ifstream> file_;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot write '" + path + "'");
    }
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

// --- calibrate ---------------------------------------------------------------

struct CalibrateArgs {
  std::string input = "-";
  std::string output = "-";
  double alpha = 0.25;
  std::optional<std::size_t> group_size;
  double floor_factor = 2.0;
  std::string mode = "full";
  std::string preference = "none";
  std::optional<double> gamma;
  std::string negative_scale = "1/G";
  bool strict_contiguous = false;
};

int run_calibrate(const CalibrateArgs& a) {
  lens::CalibrationConfig cal;
  lens::AdvantageConfig adv;
  try {
    cal.difficulty_floor_factor = a.floor_factor;
    cal.negative_scale =
        a.negative_scale == "none" ? lens::NegativeScale::None : lens::NegativeScale::OneOverG;
    if (a.preference == "none") {
      cal.preference = lens::PreferenceSpec::none();
    } else if (a.preference == "data") {
      cal.preference = lens::PreferenceSpec::data_distribution();
    } else if (a.preference == "policy") {
      cal.preference = lens::PreferenceSpec::policy_itself();
    } else {
      if (!a.gamma) throw lens::SpecError("--preference length needs --gamma");
      cal.preference = lens::PreferenceSpec::length_geometric(*a.gamma);
    }
    cal.validate();
    adv.alpha = a.alpha;
    for (auto m : {lens::AdvantageMode::Full, lens::AdvantageMode::MixedOnly,
                   lens::AdvantageMode::NegativeOnly, lens::AdvantageMode::GrpoBaseline}) {
      if (a.mode == lens::to_string(m)) adv.mode = m;
    }
    if (!adv.validate()) std::cerr << "lens: warning: alpha above 1\n";
  } catch (const lens::Error& e) {
    std::cerr << "lens calibrate: " << e.what() << '\n';
    return kBadInput;
  }

  std::size_t counts[3] = {0, 0, 0};
  std::size_t records = 0;
  try {
    Input in(a.input);
    Output out(a.output);
    lens::GroupAssembler assembler(a.group_size, a.strict_contiguous);
    auto flush = [&](std::vector<lens::GroupAssembler::Group> groups) {
      for (auto& g : groups) {
        auto result = lens::compute_advantages(lens::calibrate_group(std::move(g.group), cal), adv);
        ++counts[static_cast<int>(result.kind)];
        for (const auto& line : lens::format_advantages(g.group_id, result)) {
          out.get() << line << '\n';
          ++records;
        }
      }
    };
    std::string line;
    std::size_t n = 0;
    while (std::getline(in.get(), line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      flush(assembler.push(lens::parse_trajectory(line, n), n));
    }
    flush(assembler.finish());
    out.get().flush();
  } catch (const lens::IncompleteGroup& e) {
    std::cerr << "lens calibrate: " << e.what() << '\n';
    return kIncomplete;
  } catch (const std::exception& e) {
    std::cerr << "lens calibrate: " << e.what() << '\n';
    return kBadInput;
  }

  const std::size_t total = counts[0] + counts[1] + counts[2];
  std::fprintf(stderr,
               "groups: %zu (mixed %zu, negative %zu, all_correct %zu); records: %zu; "
               "negative fraction: %.4f\n",
               total, counts[0], counts[1], counts[2], records,
               total ? static_cast<double>(counts[1]) / static_cast<double>(total) : 0.0);
  return kOk;
}

// --- verify ------------------------------------------------------------------

int run_verify(const lens::VerifyOptions& options, bool json) {
  try {
    const auto report = lens::run_verification(options);
    std::cout << (json ? report.to_json() + "\n" : report.to_text());
    return report.all_passed() ? kOk : kVerifyFailed;
  } catch (const std::exception& e) {
    std::cerr << "lens verify: " << e.what() << '\n';
    return kBadInput;
  }
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string algorithm = "lens";
  std::string out = "-";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

int run_train(const TrainArgs& a) {
  lens::RunConfig cfg;
  std::optional<lens::Algorithm> algorithm = lens::parse_algorithm(a.algorithm);
  if (!algorithm) {
    std::cerr << "lens train: unknown algorithm '" << a.algorithm << "'\n";
    return kBadInput;
  }
  std::optional<lens::SyntheticTask> task;
  try {
    cfg = lens::load_run_config(a.config);
    if (a.seed) {
      cfg.train.seed = *a.seed;
    } else if (!cfg.explicit_seed) {
      if (auto s = env_seed()) cfg.train.seed = *s;
    }
    if (a.threads) cfg.train.threads = *a.threads;
    task = lens::generate_task(cfg.task);
  } catch (const std::exception& e) {
    std::cerr << "lens train: " << e.what() << '\n';
    return kBadInput;
  }

  std::vector<lens::TrainMetrics> metrics;
  try {
    Output out(a.out);
    metrics = lens::train(*task, cfg.train, *algorithm, [&](const lens::TrainMetrics& m) {
      out.get() << lens::metrics_to_json(m, *algorithm) << '\n';
    }).metrics;
    out.get().flush();
  } catch (const lens::NonFiniteGradient& e) {
    std::cerr << "lens train: " << e.what() << '\n';
    return kNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "lens train: " << e.what() << '\n';
    return kBadInput;
  }

  std::vector<lens::MetricsLine> lines;
  for (const auto& m : metrics) lines.push_back({lens::to_string(*algorithm), m});
  const auto report = lens::build_report({lens::summarize(a.algorithm, lines)});
  std::ostream& summary = a.out == "-" ? std::cerr : std::cout;
  summary << report.table;
  return kOk;
}

// --- report ------------------------------------------------------------------

int run_report(const std::vector<std::string>& paths, const std::string& csv_path) {
  std::vector<lens::RunSummary> runs;
  try {
    for (const auto& path : paths) {
      Input in(path);
      const auto lines = lens::read_metrics(in.get());
      if (lines.empty()) throw std::runtime_error("'" + path + "' holds no metrics");
      runs.push_back(lens::summarize(std::filesystem::path(path).stem().string(), lines));
    }
  } catch (const std::exception& e) {
    std::cerr << "lens report: " << e.what() << '\n';
    return kBadInput;
  }
  const auto report = lens::build_report(runs);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << report.table;
  try {
    if (csv_path.empty()) {
      std::cout << '\n' << report.csv;
    } else {
      Output out(csv_path);
      out.get() << report.csv;
    }
  } catch (const std::exception& e) {
    std::cerr << "lens report: " << e.what() << '\n';
    return kBadInput;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated group advantages for verifiable-reward RL"};
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Trajectory JSONL in, advantage JSONL out");
  calibrate->add_option("input", cal.input, "Trajectory file ('-' for stdin)");
  calibrate->add_option("-o,--output", cal.output, "Advantage file ('-' for stdout)");
  calibrate->add_option("--alpha", cal.alpha, "Negative-group weight")->capture_default_str();
  calibrate->add_option("--group-size", cal.group_size, "Require this many records per group");
  calibrate->add_option("--floor-factor", cal.floor_factor, "Difficulty floor factor")
      ->capture_default_str();
  calibrate->add_option("--mode", cal.mode, "Advantage mode")
      ->check(CLI::IsMember({"full", "mixed-only", "negative-only", "grpo"}))
      ->capture_default_str();
  calibrate->add_option("--preference", cal.preference, "Preference over correct answers")
      ->check(CLI::IsMember({"none", "data", "policy", "length"}))
      ->capture_default_str();
  calibrate->add_option("--gamma", cal.gamma, "Length preference ratio in (0, 1)");
  calibrate->add_option("--negative-scale", cal.negative_scale, "Incorrect-reward scale")
      ->check(CLI::IsMember({"1/G", "none"}))
      ->capture_default_str();
  calibrate->add_flag("--strict-contiguous", cal.strict_contiguous,
                      "Close a group as soon as another group_id appears");

  lens::VerifyOptions vopt;
  if (auto s = env_seed()) vopt.seed = *s;
  std::string suite = "all";
  bool verify_json = false;
  auto* verify = app.add_subcommand("verify", "Numerical checks of the likelihood identities");
  verify->add_option("--suite", suite, "Which checks to run")
      ->check(CLI::IsMember({"theorem1", "theorem2", "weight", "consistency", "all"}))
      ->capture_default_str();
  verify->add_option("--trials", vopt.trials, "Random instances per gradient check")
      ->capture_default_str();
  verify->add_option("--seed", vopt.seed, "Seed (default: LENS_SEED or 7)");
  verify->add_option("--tol-theorem1", vopt.tol_theorem1)->capture_default_str();
  verify->add_option("--tol-theorem1-ar", vopt.tol_theorem1_autoregressive)
      ->capture_default_str();
  verify->add_option("--tol-theorem2", vopt.tol_theorem2)->capture_default_str();
  verify->add_option("--tol-weight", vopt.tol_weight)->capture_default_str();
  verify->add_option("--tol-consistency", vopt.tol_consistency)->capture_default_str();
  verify->add_flag("--json", verify_json, "Print the report as JSON");

  TrainArgs targ;
  bool print_config = false;
  auto* train = app.add_subcommand("train", "Train on a synthetic task and stream metrics");
  train->add_option("-c,--config", targ.config, "Flat JSON config");
  train->add_option("-a,--algorithm", targ.algorithm, "lens, grpo, mixed-only, negative-only")
      ->capture_default_str();
  train->add_option("-o,--out", targ.out, "Metrics JSONL ('-' for stdout)");
  train->add_option("--seed", targ.seed, "Override the training seed");
  train->add_option("--threads", targ.threads, "Worker threads for sampling and evaluation");
  train->add_flag("--print-config", print_config, "Print every config key with its default");

  std::vector<std::string> metrics_paths;
  std::string csv_path;
  auto* report = app.add_subcommand("report", "Compare metric streams");
  report->add_option("metrics", metrics_paths, "Metrics JSONL files")->required();
  report->add_option("--csv", csv_path, "Write the negative-fraction CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  if (*calibrate) return run_calibrate(cal);
  if (*verify) {
    const std::map<std::string, lens::Suite> suites{{"theorem1", lens::Suite::Theorem1},
                                                    {"theorem2", lens::Suite::Theorem2},
                                                    {"weight", lens::Suite::Weight},
                                                    {"consistency", lens::Suite::Consistency},
                                                    {"all", lens::Suite::All}};
    vopt.suite = suites.at(suite);
    return run_verify(vopt, verify_json);
  }
  if (*train) {
    if (print_config) {
      std::cout << lens::default_config_json() << '\n';
      return kOk;
    }
    if (targ.config.empty()) {
      std::cerr << "lens train: --config is required\n";
      return kBadInput;
    }
    return run_train(targ);
  }
  return run_report(metrics_paths, csv_path);
}
