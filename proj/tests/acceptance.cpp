#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lens/advantage.hpp"
#include "lens/calibration.hpp"
#include "lens/likelihood.hpp"
#include "lens/pass_at_k.hpp"
#include "lens/simulator.hpp"
#include "lens/train_config.hpp"

using namespace lens;

namespace {

int failures = 0;
std::map<int, std::string> lines;

void verdict(int id, bool ok, const std::string& detail) {
  char head[32];
  std::snprintf(head, sizeof head, "criterion %2d: %s  ", id, ok ? "PASS" : "FAIL");
  lines[id] = head + detail;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Random group with `correct` successes; negative when correct == 0.
ResponseGroup fuzz_group(Rng& rng, std::size_t G, std::size_t correct) {
  std::vector<GroupSample> samples;
  for (std::size_t i = 0; i < G; ++i) {
    const std::size_t len = 1 + uniform_index(rng, 50);
    const double lp = -uniform(rng, 0.01, 4.0) * static_cast<double>(len);
    samples.push_back({"r" + std::to_string(i), lp, len, i < correct ? 1.0 : 0.0, std::nullopt});
  }
  for (std::size_t i = G; i > 1; --i) {
    std::swap(samples[i - 1].reward, samples[uniform_index(rng, i)].reward);
  }
  return make_group(Question{"q", {}, {}}, std::move(samples));
}

// Textbook GRPO: z-score of the raw rewards, zero for single-outcome groups.
std::vector<double> grpo_reference(const std::vector<double>& r) {
  const double n = static_cast<double>(r.size());
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  std::vector<double> out(r.size(), 0.0);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = (r[i] - mean) / (sd + 1e-8);
  return out;
}

struct Cmd {
  int code = -1;
  std::string out;
};

Cmd run(const std::string& cmd) {
  Cmd r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void theory_criteria() {
  VerifyOptions opt;
  opt.trials = 100;

  auto t0 = std::chrono::steady_clock::now();
  opt.suite = Suite::Theorem1;
  const auto t1 = run_verification(opt);
  const double s1 = seconds_since(t0);
  const double e1 = t1.grad_mle_vs_autograd_relerr.value_or(INFINITY);
  verdict(1, e1 <= 1e-6 && s1 < 10.0,
          fmt("loss gradient rel err %.3e (tol 1e-6), %.2f s (limit 10 s)", e1, s1));

  t0 = std::chrono::steady_clock::now();
  opt.suite = Suite::Theorem2;
  const auto t2 = run_verification(opt);
  const double s2 = seconds_since(t0);
  const double e2 = t2.grad_jmle_vs_mle_relerr.value_or(INFINITY);
  const double ew = t2.weight_identity_maxerr.value_or(INFINITY);
  verdict(2, e2 <= 1e-4 && ew <= 1e-6 && s2 < 30.0,
          fmt("value gradient rel err %.3e (tol 1e-4), weight identity %.3e (tol 1e-6), %.2f s",
              e2, ew, s2));

  const auto task = toy_task();
  const auto uni = consistency_check(task, 1e-8, Sampler::Uniform);
  const auto onp = consistency_check(task, 1e-8, Sampler::OnPolicy);
  verdict(3, uni.check.passed && onp.check.passed,
          fmt("gradient norm at optimum: uniform %.3e, on-policy %.3e (tol 1e-8); binary "
              "verifier residual %.3e",
              uni.check.error, onp.check.error, onp.binary_verifier_gradnorm));
}

void fuzz_criteria() {
  Rng rng = derive_rng(4242, {});
  std::size_t sign_violations = 0;
  std::size_t range_violations = 0;
  double worst_anchor = 0.0;
  std::size_t mixed = 0;
  std::size_t negative = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t G = 2 + uniform_index(rng, 63);
    const bool neg = t % 2 == 1;
    const std::size_t c = neg ? 0 : 1 + uniform_index(rng, G - 1);
    const auto cal = compute_advantages(calibrate_group(fuzz_group(rng, G, c)));
    const double s = 1.0 / static_cast<double>(G);
    std::size_t top = 0;
    for (std::size_t i = 0; i < G; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const bool correct = cal.group.samples[i].reward == 1.0;
      if (!correct) {
        const double r = cal.calibrated_rewards[k];
        if (!(r >= -s && r < 0.0)) ++range_violations;
      }
      if (!neg && (correct ? cal.advantages[k] <= 0.0 : cal.advantages[k] >= 0.0)) {
        ++sign_violations;
      }
      if (cal.normalized_probs[k] > cal.normalized_probs[static_cast<Eigen::Index>(top)]) top = i;
    }
    if (neg) {
      ++negative;
      worst_anchor = std::max(
          worst_anchor, std::abs(cal.calibrated_rewards[static_cast<Eigen::Index>(top)] + s));
    } else {
      ++mixed;
    }
  }
  verdict(4, sign_violations == 0,
          fmt("%.0f mixed groups, %.0f advantage sign violations", static_cast<double>(mixed),
              static_cast<double>(sign_violations)));
  verdict(5, range_violations == 0 && worst_anchor <= 1e-12,
          fmt("%.0f negative groups, %.0f rewards outside [-1/G, 0), max |r_top + 1/G| = %.3e",
              static_cast<double>(negative), static_cast<double>(range_violations),
              worst_anchor));

  std::size_t mismatches = 0;
  double worst = 0.0;
  AdvantageConfig grpo;
  grpo.mode = AdvantageMode::GrpoBaseline;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t G = 2 + uniform_index(rng, 63);
    const std::size_t c = uniform_index(rng, G + 1);
    const auto cal = compute_advantages(calibrate_group(fuzz_group(rng, G, c)), grpo);
    std::vector<double> r;
    for (const auto& smp : cal.group.samples) r.push_back(smp.reward);
    const auto ref = grpo_reference(r);
    for (std::size_t i = 0; i < G; ++i) {
      const double a = cal.advantages[static_cast<Eigen::Index>(i)];
      if (a != ref[i]) ++mismatches;
      worst = std::max(worst, std::abs(a - ref[i]));
    }
  }
  verdict(6, mismatches == 0,
          fmt("1000 groups, %.0f entries differ from the reference (max |diff| %.3e)",
              static_cast<double>(mismatches), worst));
}

void pass_at_k_criterion() {
  double worst = 0.0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t c = 0; c <= n; ++c) {
        std::size_t hit = 0;
        std::size_t total = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
          ++total;
          if (mask & ((1u << c) - 1u)) ++hit;
        }
        worst = std::max(worst, std::abs(pass_at_k(n, c, k) -
                                         static_cast<double>(hit) / static_cast<double>(total)));
      }
    }
  }
  const double worked = pass_at_k(16, 4, 8);
  const double exact = 1.0 - 495.0 / 12870.0;
  verdict(8, worst <= 1e-10 && std::abs(worked - exact) <= 1e-10 &&
                 std::abs(worked - 0.9615) < 5e-5,
          fmt("max err vs enumeration %.3e; pass@8 (n=16, c=4) = %.10f", worst, worked));
}

void training_criteria(const std::string& config_path) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const std::exception& e) {
    verdict(7, false, e.what());
    verdict(9, false, e.what());
    return;
  }
  const auto task = generate_task(cfg.task);

  double lens_pass = 0.0;
  double grpo_pass = 0.0;
  double lens_hard = 0.0;
  double grpo_hard = 0.0;
  bool grpo_zero = true;
  double lens_first = 0.0;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    TrainConfig tc = cfg.train;
    tc.seed = static_cast<std::uint64_t>(s);
    const auto lens = train(task, tc, Algorithm::Lens);
    const auto grpo = train(task, tc, Algorithm::Grpo);
    lens_pass += lens.metrics.back().pass_at_k.at(8) / seeds;
    grpo_pass += grpo.metrics.back().pass_at_k.at(8) / seeds;
    lens_hard += lens.metrics.back().hard_accuracy.value_or(0.0) / seeds;
    grpo_hard += grpo.metrics.back().hard_accuracy.value_or(0.0) / seeds;
    if (s == 1) lens_first = lens.metrics.front().grad_norm_from_negative_groups;
    for (const auto& m : grpo.metrics) grpo_zero = grpo_zero && m.grad_norm_from_negative_groups == 0.0;
  }

  verdict(7, task.initial_negative_fraction >= 0.3 && grpo_zero && lens_first > 0.0,
          fmt("initial negative fraction %.3f; GRPO negative-group grad norm zero at every "
              "step: %.0f; LENS at step 1: %.3e",
              task.initial_negative_fraction, grpo_zero ? 1.0 : 0.0, lens_first));
  verdict(9, lens_pass >= grpo_pass && lens_hard > grpo_hard,
          fmt("mean pass@8 LENS %.4f vs GRPO %.4f; hard-subset accuracy LENS %.4f vs GRPO %.4f",
              lens_pass, grpo_pass, lens_hard, grpo_hard));
}

void cli_criterion(const std::string& cli, const std::string& data) {
  const auto cal = run("'" + cli + "' calibrate '" + data + "/calibrate_fixture.jsonl' 2>/dev/null");
  const bool golden = cal.code == 0 && cal.out == slurp(data + "/calibrate_golden.jsonl");
  const auto ver = run("'" + cli + "' verify --suite all 2>&1");
  verdict(10, golden && ver.code == 0,
          fmt("calibrate golden byte-exact: %.0f; verify --suite all exit %.0f", golden ? 1 : 0,
              ver.code));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli;
  std::string data;
  std::string config;
  app.add_option("--cli", cli)->required();
  app.add_option("--data", data)->required();
  app.add_option("--config", config)->required();
  CLI11_PARSE(app, argc, argv);

  theory_criteria();
  fuzz_criteria();
  pass_at_k_criterion();
  training_criteria(config);
  cli_criterion(cli, data);
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%s\n", failures == 0 ? "all criteria passed" : "some criteria FAILED");
  return failures == 0 ? 0 : 1;
}
