#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/policy.hpp"
#include "lens/types.hpp"

namespace lens {

/// Questions with fully enumerated answers and a question distribution.
struct EnumerableTask {
  std::vector<Question> questions;
  Vector question_weights;

  std::size_t size() const noexcept { return questions.size(); }
  void validate() const;
};

/// Uniform question weights.
EnumerableTask make_task(std::vector<Question> questions);

struct Datapoint {
  std::size_t question = 0;
  std::size_t answer = 0;
  double reward = 0.0;
};

/// 1 / |correct set|.
double true_difficulty(const Question& q);
Vector true_difficulties(const EnumerableTask& task);

/// Negative log-likelihood of the difficulty-reparameterized reward model,
/// averaged over the dataset.
double mle_loss(const PolicyModel& policy, std::span<const Datapoint> data,
                const Vector& difficulty);

/// Analytic gradient of mle_loss via the policy score function.
Vector mle_grad_analytic(const PolicyModel& policy, std::span<const Datapoint> data,
                         const Vector& difficulty);

/// w(z) = (1/z) log(1/(1-z)) - 1, with w(0) = 0.
double weight_function(double z);

/// J_+ - J_- with exact expectations over questions and answers.
double jmle_value(const PolicyModel& policy, const EnumerableTask& task);

/// On-policy population gradient of the log-likelihood (ascent direction):
///   sum_q xi(q) sum_o pi(o|q) [r* - (1 - r*) pi / (D - pi)] grad log pi(o|q)
Vector population_mle_gradient(const PolicyModel& policy, const EnumerableTask& task);

/// Expected likelihood gradient (ascent direction) when answers are drawn
/// from `sampler(q)` and rewards from Bernoulli(`p_star(q, o)`), with the
/// expectation over rewards taken analytically.
Vector expected_mle_gradient(
    const PolicyModel& policy, const EnumerableTask& task, const Vector& difficulty,
    const std::function<Vector(std::size_t)>& sampler,
    const std::function<double(std::size_t, std::size_t)>& p_star);

/// Preference-weighted likelihood gradient (descent direction of the loss).
/// `rho` supplies rho(q, o) for the DataDistribution mode; other modes derive
/// it from the spec.
Vector preference_gradient(
    const PolicyModel& policy, std::span<const Datapoint> data, const Vector& difficulty,
    const PreferenceSpec& spec,
    const std::function<double(std::size_t, std::size_t)>& rho = {});

// ---------------------------------------------------------------------------
// Numerical verification

/// Central-difference gradient of `f` at `x` with step `h`; with `richardson`
/// the h and h/2 estimates are combined to cancel the O(h^2) term.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h, bool richardson = false);

/// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-12).
double relative_error(const Vector& a, const Vector& b);

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct TheoryReport {
  std::optional<double> grad_mle_vs_autograd_relerr;
  std::optional<double> grad_jmle_vs_mle_relerr;
  std::optional<double> weight_identity_maxerr;
  std::optional<double> consistency_gradnorm;
  std::vector<CheckResult> checks;

  bool all_passed() const;
  std::string to_text() const;
  std::string to_json() const;
};

/// Loss-side check: analytic gradient versus finite differences of the loss.
CheckResult theorem1_check(const PolicyModel& policy, std::span<const Datapoint> data,
                           const Vector& difficulty, double tol);

/// Value-side check: on-policy population likelihood gradient versus finite
/// differences of J_MLE.
CheckResult theorem2_check(const PolicyModel& policy, const EnumerableTask& task,
                           double tol);

/// max |w(z) + z w'(z) - z / (1 - z)| over z = 0.001 ... 0.999, with w' by
/// central differences.
CheckResult weight_identity_check(double tol, std::size_t grid_points = 999);

enum class Sampler { Uniform, OnPolicy };

struct ConsistencyResult {
  CheckResult check;
  /// Same expectation with a binary {0,1} verifier in place of the smoothed
  /// ground truth; measured, not asserted (it is O(epsilon) at best).
  double binary_verifier_gradnorm = 0.0;
};

/// Expected gradient norm at the epsilon-smoothed realizable optimum.
ConsistencyResult consistency_check(const EnumerableTask& task, double tol,
                                    Sampler sampler, double epsilon = 1e-6,
                                    const Vector& perturbation = {});

/// Tabular policy at the epsilon-smoothed optimum: uniform over correct
/// answers, mixed with epsilon of the uniform distribution over all answers.
TabularSoftmax smoothed_optimal_policy(const EnumerableTask& task, double epsilon);

/// The six-answer, two-correct multiple-choice toy task.
EnumerableTask toy_task();

// ---------------------------------------------------------------------------
// Suite runner

enum class Suite { Theorem1, Theorem2, Weight, Consistency, All };

struct VerifyOptions {
  Suite suite = Suite::All;
  std::size_t trials = 100;
  std::uint64_t seed = 7;
  double tol_theorem1 = 1e-6;
  double tol_theorem1_autoregressive = 1e-5;
  double tol_theorem2 = 1e-4;
  double tol_weight = 1e-6;
  double tol_consistency = 1e-8;
};

TheoryReport run_verification(const VerifyOptions& options);

/// Random instances shared by the suite and the tests.
struct Theorem1Instance {
  PolicyModel policy;
  std::vector<Datapoint> data;
  Vector difficulty;
};

Theorem1Instance random_tabular_instance(Rng& rng, std::size_t max_questions = 20,
                                         std::size_t max_answers = 10,
                                         std::size_t max_data = 60);
Theorem1Instance random_autoregressive_instance(Rng& rng);

struct Theorem2Instance {
  PolicyModel policy;
  EnumerableTask task;
};

Theorem2Instance random_enumerable_instance(Rng& rng, std::size_t max_questions = 6,
                                            std::size_t max_answers = 10);

}  // namespace lens
