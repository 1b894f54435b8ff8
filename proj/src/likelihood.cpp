#include "lens/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "lens/calibration.hpp"

namespace lens {

void EnumerableTask::validate() const {
  if (questions.empty()) throw SpecError("task has no questions");
  if (question_weights.size() != static_cast<Eigen::Index>(questions.size())) {
    throw SpecError("question weights do not match the number of questions");
  }
  if ((question_weights.array() < 0.0).any() ||
      std::abs(question_weights.sum() - 1.0) > 1e-12) {
    throw SpecError("question weights must be a probability vector");
  }
  for (const auto& q : questions) {
    if (!q.enumerable()) throw SpecError("question '" + q.id + "' is not enumerable");
    if (q.correct_set.empty()) {
      throw EmptyCorrectSet("EmptyCorrectSet: question '" + q.id + "' has no correct answer");
    }
  }
}

EnumerableTask make_task(std::vector<Question> questions) {
  const auto n = static_cast<Eigen::Index>(questions.size());
  EnumerableTask task{std::move(questions),
                      Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0)};
  task.validate();
  return task;
}

double true_difficulty(const Question& q) {
  if (q.correct_set.empty()) {
    throw EmptyCorrectSet("EmptyCorrectSet: question '" + q.id + "' has no correct answer");
  }
  return 1.0 / static_cast<double>(q.correct_set.size());
}

Vector true_difficulties(const EnumerableTask& task) {
  Vector d(static_cast<Eigen::Index>(task.size()));
  for (std::size_t i = 0; i < task.size(); ++i) {
    d[static_cast<Eigen::Index>(i)] = true_difficulty(task.questions[i]);
  }
  return d;
}

double mle_loss(const PolicyModel& policy, std::span<const Datapoint> data,
                const Vector& difficulty) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& dp : data) {
    const double logp = policy.log_prob(dp.question, dp.answer);
    if (dp.reward == 1.0) {
      total += logp;
    } else {
      const double pi = std::exp(logp);
      const double d = difficulty[static_cast<Eigen::Index>(dp.question)];
      if (!(pi < d)) {
        throw DomainError("DomainError: policy probability reaches the difficulty on a "
                          "negative datapoint");
      }
      total += std::log1p(-pi / d);
    }
  }
  return -total / static_cast<double>(data.size());
}

namespace {

// -(1/n) sum [r - (1 - r) pi / (Dr - pi)] grad log pi, where Dr is the
// effective difficulty of each datapoint.
template <typename EffectiveOdds>
Vector likelihood_gradient(const PolicyModel& policy, std::span<const Datapoint> data,
                           EffectiveOdds&& odds) {
  Vector grad = Vector::Zero(policy.num_params());
  if (data.empty()) return grad;
  const double scale = -1.0 / static_cast<double>(data.size());
  for (const auto& dp : data) {
    const double coeff = dp.reward == 1.0 ? 1.0 : -odds(dp);
    policy.add_score(dp.question, dp.answer, scale * coeff, grad);
  }
  return grad;
}

}  // namespace

Vector mle_grad_analytic(const PolicyModel& policy, std::span<const Datapoint> data,
                         const Vector& difficulty) {
  return likelihood_gradient(policy, data, [&](const Datapoint& dp) {
    const double pi = std::exp(policy.log_prob(dp.question, dp.answer));
    return confidence_odds(pi, difficulty[static_cast<Eigen::Index>(dp.question)]);
  });
}

Vector preference_gradient(const PolicyModel& policy, std::span<const Datapoint> data,
                           const Vector& difficulty, const PreferenceSpec& spec,
                           const std::function<double(std::size_t, std::size_t)>& rho) {
  spec.validate();
  switch (spec.mode) {
    case PreferenceMode::None:
      return mle_grad_analytic(policy, data, difficulty);
    case PreferenceMode::PolicyItself:
      return likelihood_gradient(policy, data, [&](const Datapoint& dp) {
        const double d = difficulty[static_cast<Eigen::Index>(dp.question)];
        if (!(d > 1.0)) {
          throw DomainError("DomainError: policy preference needs difficulty > 1");
        }
        return 1.0 / (d - 1.0);
      });
    case PreferenceMode::DataDistribution:
      if (!rho) throw SpecError("data-distribution preference needs rho(q, o)");
      return likelihood_gradient(policy, data, [&](const Datapoint& dp) {
        const double pi = std::exp(policy.log_prob(dp.question, dp.answer));
        const double d = difficulty[static_cast<Eigen::Index>(dp.question)];
        return confidence_odds(pi, d * rho(dp.question, dp.answer));
      });
    case PreferenceMode::LengthGeometric:
      return likelihood_gradient(policy, data, [&](const Datapoint& dp) {
        const double pi = std::exp(policy.log_prob(dp.question, dp.answer));
        const double d = difficulty[static_cast<Eigen::Index>(dp.question)];
        const auto len = static_cast<double>(policy.answer_length(dp.question, dp.answer));
        return confidence_odds(pi, d * std::pow(*spec.gamma, len));
      });
  }
  throw SpecError("unknown preference mode");
}

double weight_function(double z) {
  if (!(z >= 0.0 && z < 1.0)) {
    throw DomainError("DomainError: w(z) needs 0 <= z < 1, got " + std::to_string(z));
  }
  // Series z/2 + z^2/3 + z^3/4 avoids the cancellation in log1p(-z)/z - 1.
  if (z < 1e-5) return z * (0.5 + z * (1.0 / 3.0 + z * 0.25));
  return -std::log1p(-z) / z - 1.0;
}

double jmle_value(const PolicyModel& policy, const EnumerableTask& task) {
  const Vector d = true_difficulties(task);
  double positive = 0.0;
  double negative = 0.0;
  for (std::size_t q = 0; q < task.size(); ++q) {
    const Vector pi = policy.distribution(q);
    const double xi = task.question_weights[static_cast<Eigen::Index>(q)];
    const double dq = d[static_cast<Eigen::Index>(q)];
    for (Eigen::Index o = 0; o < pi.size(); ++o) {
      if (task.questions[q].is_correct(static_cast<std::size_t>(o))) {
        positive += xi * pi[o];
      } else {
        negative += xi * pi[o] * weight_function(pi[o] / dq);
      }
    }
  }
  return positive - negative;
}

Vector expected_mle_gradient(const PolicyModel& policy, const EnumerableTask& task,
                             const Vector& difficulty,
                             const std::function<Vector(std::size_t)>& sampler,
                             const std::function<double(std::size_t, std::size_t)>& p_star) {
  Vector grad = Vector::Zero(policy.num_params());
  for (std::size_t q = 0; q < task.size(); ++q) {
    const Vector mu = sampler(q);
    const Vector pi = policy.distribution(q);
    const double xi = task.question_weights[static_cast<Eigen::Index>(q)];
    const double dq = difficulty[static_cast<Eigen::Index>(q)];
    for (Eigen::Index o = 0; o < pi.size(); ++o) {
      const double p = p_star(q, static_cast<std::size_t>(o));
      double bracket = p;
      if (p < 1.0) bracket -= (1.0 - p) * confidence_odds(pi[o], dq);
      if (bracket != 0.0) {
        policy.add_score(q, static_cast<std::size_t>(o), xi * mu[o] * bracket, grad);
      }
    }
  }
  return grad;
}

Vector population_mle_gradient(const PolicyModel& policy, const EnumerableTask& task) {
  const Vector d = true_difficulties(task);
  return expected_mle_gradient(
      policy, task, d, [&](std::size_t q) { return policy.distribution(q); },
      [&](std::size_t q, std::size_t o) {
        return task.questions[q].is_correct(o) ? 1.0 : 0.0;
      });
}

// ---------------------------------------------------------------------------

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h, bool richardson) {
  auto central = [&](double step) {
    Vector g(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      probe[i] = x[i] + step;
      const double up = f(probe);
      probe[i] = x[i] - step;
      const double down = f(probe);
      probe[i] = x[i];
      g[i] = (up - down) / (2.0 * step);
    }
    return g;
  };
  const Vector coarse = central(h);
  if (!richardson) return coarse;
  const Vector fine = central(h / 2.0);
  return (4.0 * fine - coarse) / 3.0;
}

double relative_error(const Vector& a, const Vector& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  const double scale =
      std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), 1e-12});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

namespace {

constexpr double kFdStep = 1e-5;

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Compares with h, then refines with Richardson extrapolation when the error
// is within 10x of the tolerance.
double compare_with_fd(const Vector& analytic,
                       const std::function<double(const Vector&)>& f, const Vector& x,
                       double tol) {
  double err = relative_error(analytic, finite_difference_gradient(f, x, kFdStep));
  if (err > tol / 10.0) {
    err = std::min(err, relative_error(analytic,
                                       finite_difference_gradient(f, x, kFdStep, true)));
  }
  return err;
}

}  // namespace

CheckResult theorem1_check(const PolicyModel& policy, std::span<const Datapoint> data,
                           const Vector& difficulty, double tol) {
  const Vector analytic = mle_grad_analytic(policy, data, difficulty);
  auto loss = [&](const Vector& theta) {
    PolicyModel probe = policy;
    probe.set_params(theta);
    return mle_loss(probe, data, difficulty);
  };
  const double err = compare_with_fd(analytic, loss, policy.params(), tol);
  return {"theorem1", err, tol, err <= tol, "analytic vs finite-difference loss gradient"};
}

CheckResult theorem2_check(const PolicyModel& policy, const EnumerableTask& task,
                           double tol) {
  const Vector population = population_mle_gradient(policy, task);
  auto value = [&](const Vector& theta) {
    PolicyModel probe = policy;
    probe.set_params(theta);
    return jmle_value(probe, task);
  };
  const double err = compare_with_fd(population, value, policy.params(), tol);
  return {"theorem2", err, tol, err <= tol,
          "on-policy likelihood gradient vs finite-difference J_MLE gradient"};
}

CheckResult weight_identity_check(double tol, std::size_t grid_points) {
  double max_err = 0.0;
  double worst_z = 0.0;
  for (std::size_t k = 1; k <= grid_points; ++k) {
    const double z = static_cast<double>(k) / static_cast<double>(grid_points + 1);
    // Shrink the step as z -> 1, where w''' grows like (1 - z)^-3.
    const double h = 1e-7 * std::min(1.0, 100.0 * (1.0 - z));
    const double up = z + h;
    const double down = z - h;
    const double dw = (weight_function(up) - weight_function(down)) / (up - down);
    const double err = std::abs(weight_function(z) + z * dw - z / (1.0 - z));
    if (err > max_err) {
      max_err = err;
      worst_z = z;
    }
  }
  return {"weight-identity", max_err, tol, max_err <= tol,
          "worst at z=" + format_g(worst_z)};
}

TabularSoftmax smoothed_optimal_policy(const EnumerableTask& task, double epsilon) {
  std::vector<std::size_t> sizes;
  for (const auto& q : task.questions) sizes.push_back(q.answer_space.size());
  TabularSoftmax policy(sizes);
  for (std::size_t q = 0; q < task.size(); ++q) {
    const auto& question = task.questions[q];
    const double n = static_cast<double>(question.answer_space.size());
    const double c = static_cast<double>(question.correct_set.size());
    auto logits = policy.mutable_logits(q);
    for (Eigen::Index o = 0; o < logits.size(); ++o) {
      const double target = question.is_correct(static_cast<std::size_t>(o))
                                ? (1.0 - epsilon) / c + epsilon / n
                                : epsilon / n;
      logits[o] = std::log(target);
    }
  }
  return policy;
}

ConsistencyResult consistency_check(const EnumerableTask& task, double tol, Sampler sampler,
                                    double epsilon, const Vector& perturbation) {
  const TabularSoftmax truth = smoothed_optimal_policy(task, epsilon);
  PolicyModel policy = truth;
  if (perturbation.size() > 0) policy.set_params(truth.params() + perturbation);
  const Vector d = true_difficulties(task);

  auto mu = [&](std::size_t q) -> Vector {
    if (sampler == Sampler::OnPolicy) return policy.distribution(q);
    const auto n = static_cast<Eigen::Index>(task.questions[q].answer_space.size());
    return Vector::Constant(n, 1.0 / static_cast<double>(n));
  };
  // Realizable ground truth: p* = pi_eps / D.
  auto smoothed = [&](std::size_t q, std::size_t o) {
    return std::exp(truth.log_prob(q, o)) / d[static_cast<Eigen::Index>(q)];
  };
  auto binary = [&](std::size_t q, std::size_t o) {
    return task.questions[q].is_correct(o) ? 1.0 : 0.0;
  };

  const double norm = expected_mle_gradient(policy, task, d, mu, smoothed).norm();
  ConsistencyResult out;
  out.check = {sampler == Sampler::OnPolicy ? "consistency-on-policy" : "consistency-uniform",
               norm, tol, norm <= tol, "expected gradient norm at smoothed optimum"};
  out.binary_verifier_gradnorm = expected_mle_gradient(policy, task, d, mu, binary).norm();
  return out;
}

EnumerableTask toy_task() {
  return make_task({make_question("toy", {"A", "B", "C", "D", "E", "F"}, {0, 1})});
}

// ---------------------------------------------------------------------------

bool TheoryReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

std::string TheoryReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    char line[256];
    std::snprintf(line, sizeof line, "%-28s error=%.3e  tol=%.1e  %s  (%s)\n",
                  c.name.c_str(), c.error, c.tolerance, c.passed ? "PASS" : "FAIL",
                  c.detail.c_str());
    os << line;
  }
  os << (all_passed() ? "all checks passed\n" : "some checks FAILED\n");
  return os.str();
}

std::string TheoryReport::to_json() const {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("grad_mle_vs_autograd_relerr", grad_mle_vs_autograd_relerr);
  put("grad_jmle_vs_mle_relerr", grad_jmle_vs_mle_relerr);
  put("weight_identity_maxerr", weight_identity_maxerr);
  put("consistency_gradnorm", consistency_gradnorm);
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"name", c.name},
                           {"error", c.error},
                           {"tolerance", c.tolerance},
                           {"passed", c.passed},
                           {"detail", c.detail}});
  }
  j["passed"] = all_passed();
  return j.dump();
}

// ---------------------------------------------------------------------------

namespace {

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
}

Vector random_normal(Rng& rng, Eigen::Index n, double scale) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal01(rng);
  return v;
}

// Per-question difficulty strictly above every answer probability, so the
// negative log-likelihood term stays finite under finite-difference probes.
Vector safe_difficulty(const PolicyModel& policy, Rng& rng) {
  Vector d(static_cast<Eigen::Index>(policy.num_questions()));
  for (std::size_t q = 0; q < policy.num_questions(); ++q) {
    d[static_cast<Eigen::Index>(q)] =
        policy.distribution(q).maxCoeff() * (1.25 + uniform01(rng));
  }
  return d;
}

std::vector<Datapoint> random_data(const PolicyModel& policy, Rng& rng,
                                   std::size_t max_data) {
  std::vector<Datapoint> data(draw_between(rng, 1, max_data));
  for (auto& dp : data) {
    dp.question = uniform_index(rng, policy.num_questions());
    dp.answer = uniform_index(rng, policy.num_answers(dp.question));
    dp.reward = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  }
  return data;
}

}  // namespace

Theorem1Instance random_tabular_instance(Rng& rng, std::size_t max_questions,
                                         std::size_t max_answers, std::size_t max_data) {
  std::vector<std::size_t> sizes(draw_between(rng, 1, max_questions));
  for (auto& s : sizes) s = draw_between(rng, 2, max_answers);
  TabularSoftmax tab(sizes);
  tab.set_params(random_normal(rng, tab.num_params(), 1.0));
  PolicyModel policy = tab;
  auto data = random_data(policy, rng, max_data);
  Vector d = safe_difficulty(policy, rng);
  return {std::move(policy), std::move(data), std::move(d)};
}

Theorem1Instance random_autoregressive_instance(Rng& rng) {
  const auto questions = static_cast<Eigen::Index>(draw_between(rng, 1, 3));
  const auto dim = static_cast<Eigen::Index>(draw_between(rng, 1, 3));
  Matrix emb(questions, dim);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = normal01(rng);
  LinearAutoregressive ar(emb, draw_between(rng, 2, 4), draw_between(rng, 1, 3));
  ar.set_params(random_normal(rng, ar.num_params(), 0.5));
  PolicyModel policy = ar;
  auto data = random_data(policy, rng, 30);
  Vector d = safe_difficulty(policy, rng);
  return {std::move(policy), std::move(data), std::move(d)};
}

Theorem2Instance random_enumerable_instance(Rng& rng, std::size_t max_questions,
                                            std::size_t max_answers) {
  const std::size_t nq = draw_between(rng, 1, max_questions);
  std::vector<Question> questions;
  std::vector<std::size_t> sizes;
  Vector weights(static_cast<Eigen::Index>(nq));
  for (std::size_t q = 0; q < nq; ++q) {
    const std::size_t na = draw_between(rng, 2, max_answers);
    const std::size_t nc = draw_between(rng, 1, na - 1);
    std::vector<std::size_t> order(na);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = na - 1; i > 0; --i) {
      std::swap(order[i], order[uniform_index(rng, i + 1)]);
    }
    std::vector<std::string> labels;
    for (std::size_t a = 0; a < na; ++a) labels.push_back("a" + std::to_string(a));
    questions.push_back(make_question("q" + std::to_string(q), std::move(labels),
                                      {order.begin(), order.begin() + static_cast<long>(nc)}));
    sizes.push_back(na);
    weights[static_cast<Eigen::Index>(q)] = 0.1 + uniform01(rng);
  }
  weights /= weights.sum();
  EnumerableTask task{std::move(questions), weights};

  TabularSoftmax tab(sizes);
  const Vector d = true_difficulties(task);
  double scale = 1.0;
  for (int attempt = 0;; ++attempt) {
    tab.set_params(random_normal(rng, tab.num_params(), scale));
    bool ok = true;
    for (std::size_t q = 0; q < nq && ok; ++q) {
      const Vector pi = tab.distribution(q);
      for (Eigen::Index o = 0; o < pi.size(); ++o) {
        if (!task.questions[q].is_correct(static_cast<std::size_t>(o)) &&
            pi[o] / d[static_cast<Eigen::Index>(q)] >= 0.9) {
          ok = false;
        }
      }
    }
    if (ok) break;
    if (attempt > 200) throw SpecError("could not draw an admissible policy");
    scale *= 0.9;
  }
  return {PolicyModel(tab), std::move(task)};
}

TheoryReport run_verification(const VerifyOptions& options) {
  TheoryReport report;
  const bool all = options.suite == Suite::All;

  if (all || options.suite == Suite::Theorem1) {
    double worst = 0.0;
    for (std::size_t t = 0; t < options.trials; ++t) {
      Rng rng = derive_rng(options.seed, {1, t});
      const auto inst = random_tabular_instance(rng);
      worst = std::max(worst, theorem1_check(inst.policy, inst.data, inst.difficulty,
                                             options.tol_theorem1)
                                  .error);
    }
    report.grad_mle_vs_autograd_relerr = worst;
    report.checks.push_back({"theorem1-tabular", worst, options.tol_theorem1,
                             worst <= options.tol_theorem1,
                             std::to_string(options.trials) + " random tabular instances"});

    double worst_ar = 0.0;
    const std::size_t ar_trials = std::min<std::size_t>(options.trials, 20);
    for (std::size_t t = 0; t < ar_trials; ++t) {
      Rng rng = derive_rng(options.seed, {2, t});
      const auto inst = random_autoregressive_instance(rng);
      worst_ar = std::max(worst_ar, theorem1_check(inst.policy, inst.data, inst.difficulty,
                                                   options.tol_theorem1_autoregressive)
                                        .error);
    }
    report.checks.push_back({"theorem1-autoregressive", worst_ar,
                             options.tol_theorem1_autoregressive,
                             worst_ar <= options.tol_theorem1_autoregressive,
                             std::to_string(ar_trials) + " random autoregressive instances"});
  }

  if (all || options.suite == Suite::Theorem2) {
    double worst = 0.0;
    for (std::size_t t = 0; t < options.trials; ++t) {
      Rng rng = derive_rng(options.seed, {3, t});
      const auto inst = random_enumerable_instance(rng);
      worst = std::max(worst, theorem2_check(inst.policy, inst.task, options.tol_theorem2).error);
    }
    report.grad_jmle_vs_mle_relerr = worst;
    report.checks.push_back({"theorem2", worst, options.tol_theorem2,
                             worst <= options.tol_theorem2,
                             std::to_string(options.trials) + " random enumerable tasks"});
  }

  if (all || options.suite == Suite::Theorem2 || options.suite == Suite::Weight) {
    auto check = weight_identity_check(options.tol_weight);
    report.weight_identity_maxerr = check.error;
    report.checks.push_back(std::move(check));
  }

  if (all || options.suite == Suite::Consistency) {
    const auto task = toy_task();
    double worst = 0.0;
    for (auto sampler : {Sampler::Uniform, Sampler::OnPolicy}) {
      auto result = consistency_check(task, options.tol_consistency, sampler);
      worst = std::max(worst, result.check.error);
      result.check.detail += "; binary-verifier residual " +
                             format_g(result.binary_verifier_gradnorm);
      report.checks.push_back(std::move(result.check));
    }
    report.consistency_gradnorm = worst;
  }
  return report;
}

}  // namespace lens
