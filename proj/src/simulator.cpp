#include "lens/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "lens/pass_at_k.hpp"

namespace lens {

namespace {

// Stream tags for derive_rng.
constexpr std::uint64_t kTaskTag = 0x7461736b;
constexpr std::uint64_t kProbeTag = 0x70726f62;
constexpr std::uint64_t kPickTag = 0x7069636b;
constexpr std::uint64_t kSampleTag = 0x73616d70;
constexpr std::uint64_t kEvalTag = 0x6576616c;

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
}

// First `count` entries of a seeded shuffle of `pool`.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  pool.resize(count);
  return pool;
}

// Contiguous static partition, so results never depend on the thread count.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t * n / threads; i < (t + 1) * n / threads; ++i) body(i);
    });
  }
}

PolicyModel fresh_policy(const SyntheticTaskSpec& spec, Rng& rng) {
  auto randomize = [&](auto policy) {
    Vector theta(policy.num_params());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = spec.init_scale * normal01(rng);
    policy.set_params(theta);
    return PolicyModel(std::move(policy));
  };
  if (spec.answer_space == Parameterization::TabularSoftmax) {
    return randomize(TabularSoftmax(
        std::vector<std::size_t>(spec.num_questions, spec.answers_per_question)));
  }
  return randomize(LinearAutoregressive::one_hot(spec.num_questions, spec.vocab, spec.max_len));
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (num_questions == 0) throw SpecError("SpecError: num_questions must be positive");
  std::size_t answers = answers_per_question;
  if (answer_space == Parameterization::LinearAutoregressive) {
    if (vocab < 2 || max_len < 1) throw SpecError("SpecError: invalid sequence space");
    answers = 0;
    std::size_t level = 1;
    for (std::size_t l = 0; l <= max_len; ++l, level *= vocab - 1) answers += level;
  }
  if (correct_min < 1 || correct_max < correct_min) {
    throw SpecError("SpecError: need 1 <= correct_min <= correct_max");
  }
  if (correct_max >= answers) {
    throw SpecError("SpecError: correct count must stay below the answer-space size");
  }
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) {
    throw SpecError("SpecError: hard_fraction must lie in [0, 1]");
  }
  if (!(hard_quantile > 0.0 && hard_quantile <= 1.0)) {
    throw SpecError("SpecError: hard_quantile must lie in (0, 1]");
  }
  if (profile == DifficultyProfile::HardTail &&
      static_cast<std::size_t>(std::ceil(hard_quantile * static_cast<double>(answers))) <
          correct_max) {
    throw SpecError("SpecError: hard_quantile leaves too few answers for correct_max");
  }
  if (!(init_scale >= 0.0)) throw SpecError("SpecError: init_scale must be non-negative");
  if (min_negative_fraction && probe_group_size < 1) {
    throw SpecError("SpecError: probe_group_size must be positive");
  }
}

double measure_negative_fraction(const PolicyModel& policy, const EnumerableTask& task,
                                 std::size_t group_size, std::size_t groups,
                                 std::uint64_t seed) {
  if (groups == 0) return 0.0;
  Rng rng = derive_rng(seed, {kProbeTag});
  std::size_t negative = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto q = static_cast<std::size_t>(uniform_index(rng, task.size()));
    bool any = false;
    for (std::size_t i = 0; i < group_size; ++i) {
      any |= task.questions[q].is_correct(policy.sample(q, rng).answer);
    }
    negative += any ? 0 : 1;
  }
  return static_cast<double>(negative) / static_cast<double>(groups);
}

SyntheticTask generate_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  constexpr int kMaxAttempts = 20;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed =
        attempt == 0 ? spec.seed : splitmix64(spec.seed + static_cast<std::uint64_t>(attempt));
    Rng rng = derive_rng(seed, {kTaskTag});
    PolicyModel policy = fresh_policy(spec, rng);

    std::vector<bool> hard(spec.num_questions, false);
    if (spec.profile == DifficultyProfile::HardTail) {
      const auto count = static_cast<std::size_t>(
          std::llround(spec.hard_fraction * static_cast<double>(spec.num_questions)));
      std::vector<std::size_t> all(spec.num_questions);
      std::iota(all.begin(), all.end(), 0);
      for (auto q : choose(all, count, rng)) hard[q] = true;
    }

    std::vector<Question> questions;
    questions.reserve(spec.num_questions);
    for (std::size_t q = 0; q < spec.num_questions; ++q) {
      const std::size_t answers = policy.num_answers(q);
      const std::size_t correct = draw_between(rng, spec.correct_min, spec.correct_max);
      std::vector<std::size_t> pool(answers);
      std::iota(pool.begin(), pool.end(), 0);
      if (hard[q]) {
        const Vector pi = policy.distribution(q);
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
          return pi[static_cast<Eigen::Index>(a)] < pi[static_cast<Eigen::Index>(b)];
        });
        pool.resize(static_cast<std::size_t>(
            std::ceil(spec.hard_quantile * static_cast<double>(answers))));
      }
      std::vector<std::string> labels(answers);
      for (std::size_t a = 0; a < answers; ++a) labels[a] = policy.answer_label(q, a);
      questions.push_back(make_question("q" + std::to_string(q), std::move(labels),
                                        choose(std::move(pool), correct, rng)));
    }

    SyntheticTask out{make_task(std::move(questions)), std::move(hard), std::move(policy), 0.0};
    if (!spec.min_negative_fraction) return out;
    out.initial_negative_fraction = measure_negative_fraction(
        out.initial_policy, out.task, spec.probe_group_size, spec.probe_groups, seed);
    if (out.initial_negative_fraction >= *spec.min_negative_fraction) return out;
  }
  throw SpecError("SpecError: no generated task reached the requested negative-group fraction");
}

SampledGroup sample_group(const PolicyModel& policy, const EnumerableTask& task,
                          std::size_t question_index, std::size_t group_size, Rng& rng,
                          const std::string& id_prefix) {
  if (group_size < 2) throw SizeError("SizeError: group size must be at least 2");
  const Question& question = task.questions.at(question_index);
  SampledGroup out;
  out.question_index = question_index;
  out.answers.reserve(group_size);
  std::vector<GroupSample> samples;
  samples.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    SampledAnswer s = policy.sample(question_index, rng);
    GroupSample gs;
    gs.response_id = id_prefix + "-" + std::to_string(i);
    gs.seq_logprob = s.seq_logprob;
    gs.length = s.length();
    gs.reward = question.is_correct(s.answer) ? 1.0 : 0.0;
    gs.token_logprobs = std::move(s.token_logprobs);
    samples.push_back(std::move(gs));
    out.answers.push_back(s.answer);
  }
  // Groups carry the question id only; the verifier has already run.
  out.group = make_group(Question{question.id, {}, {}}, std::move(samples));
  return out;
}

const char* to_string(Algorithm algorithm) noexcept {
  switch (algorithm) {
    case Algorithm::Lens:
      return "lens";
    case Algorithm::Grpo:
      return "grpo";
    case Algorithm::MixedOnly:
      return "mixed-only";
    case Algorithm::NegativeOnly:
      return "negative-only";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(const std::string& name) {
  for (auto a : {Algorithm::Lens, Algorithm::Grpo, Algorithm::MixedOnly,
                 Algorithm::NegativeOnly}) {
    if (name == to_string(a)) return a;
  }
  return std::nullopt;
}

AdvantageMode advantage_mode(Algorithm algorithm) noexcept {
  switch (algorithm) {
    case Algorithm::Lens:
      return AdvantageMode::Full;
    case Algorithm::Grpo:
      return AdvantageMode::GrpoBaseline;
    case Algorithm::MixedOnly:
      return AdvantageMode::MixedOnly;
    case Algorithm::NegativeOnly:
      return AdvantageMode::NegativeOnly;
  }
  return AdvantageMode::Full;
}

void TrainConfig::validate() const {
  if (group_size < 2) throw SpecError("SpecError: group_size must be at least 2");
  if (questions_per_batch < 1) throw SpecError("SpecError: questions_per_batch must be positive");
  if (inner_updates < 1) throw SpecError("SpecError: inner_updates must be at least 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw SpecError("SpecError: clip_epsilon must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0)) throw SpecError("SpecError: learning_rate must be positive");
  if (!(temperature > 0.0)) throw SpecError("SpecError: temperature must be positive");
  if (!(alpha >= 0.0)) throw SpecError("SpecError: alpha must be non-negative");
  if (eval_samples < 1) throw SpecError("SpecError: eval_samples must be positive");
  calibration.validate();
}

UpdateDiagnostics surrogate_update(PolicyModel& policy, std::span<const TrainingGroup> groups,
                                   const TrainConfig& cfg, long step) {
  UpdateDiagnostics diag;
  const Eigen::Index dim = policy.num_params();
  Vector total = Vector::Zero(dim);
  Vector total_negative = Vector::Zero(dim);
  Vector total_mixed = Vector::Zero(dim);
  const std::size_t n = groups.size();
  const std::size_t minibatches = std::min(cfg.inner_updates, std::max<std::size_t>(n, 1));

  for (std::size_t mb = 0; mb < minibatches; ++mb) {
    const std::size_t begin = mb * n / minibatches;
    const std::size_t end = (mb + 1) * n / minibatches;
    if (begin == end) continue;
    const double per_group = 1.0 / static_cast<double>(end - begin);
    Vector grad_negative = Vector::Zero(dim);
    Vector grad_other = Vector::Zero(dim);

    for (std::size_t g = begin; g < end; ++g) {
      const auto& tg = groups[g];
      const auto& cal = tg.calibrated;
      const auto& samples = cal.group.samples;
      const double per_sample = per_group / static_cast<double>(samples.size());
      Vector& target = cal.kind == GroupKind::Negative ? grad_negative : grad_other;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double adv = cal.advantages[static_cast<Eigen::Index>(i)];
        if (adv == 0.0) continue;
        const auto& old_lp = *samples[i].token_logprobs;
        const auto new_lp = policy.token_log_probs(tg.question_index, tg.answers[i]);
        const double per_token = per_sample / static_cast<double>(old_lp.size());
        for (std::size_t t = 0; t < old_lp.size(); ++t) {
          const double ratio = std::exp(new_lp[t] - old_lp[t]);
          // The min() picks the clipped constant exactly when the ratio has
          // left the trust region in the direction the advantage pushes it.
          const bool clipped = (adv > 0.0 && ratio > 1.0 + cfg.clip_epsilon) ||
                               (adv < 0.0 && ratio < 1.0 - cfg.clip_epsilon);
          if (clipped) {
            ++diag.clipped_tokens;
            continue;
          }
          policy.add_token_score(tg.question_index, tg.answers[i], t,
                                 per_token * adv * ratio, target);
        }
      }
    }

    const Vector grad = grad_negative + grad_other;
    if (!grad.allFinite()) {
      throw NonFiniteGradient("NonFiniteGradient: surrogate gradient is not finite at step " +
                                  std::to_string(step),
                              step);
    }
    Vector next = policy.params() + cfg.learning_rate * grad;
    if (!(next / cfg.temperature).allFinite()) {
      throw NonFiniteGradient("NonFiniteGradient: parameter update overflowed at step " +
                                  std::to_string(step),
                              step);
    }
    policy.set_params(std::move(next));
    total += grad;
    total_negative += grad_negative;
    total_mixed += grad_other;
  }
  diag.grad_norm = total.norm();
  diag.grad_norm_from_negative_groups = total_negative.norm();
  diag.grad_norm_from_mixed_groups = total_mixed.norm();
  return diag;
}

EvalResult evaluate(const PolicyModel& policy, const EnumerableTask& task,
                    const std::vector<bool>& hard, const TrainConfig& cfg, long step) {
  const std::size_t nq = task.size();
  std::vector<std::vector<bool>> results(nq);
  std::vector<double> accuracy(nq, 0.0);
  parallel_for(nq, cfg.threads, [&](std::size_t q) {
    Rng rng = derive_rng(cfg.seed, {kEvalTag, static_cast<std::uint64_t>(step), q});
    results[q].reserve(cfg.eval_samples);
    for (std::size_t i = 0; i < cfg.eval_samples; ++i) {
      results[q].push_back(task.questions[q].is_correct(policy.sample(q, rng).answer));
    }
    const Vector pi = policy.distribution(q);
    for (auto a : task.questions[q].correct_set) accuracy[q] += pi[static_cast<Eigen::Index>(a)];
  });

  EvalResult out;
  for (auto k : cfg.pass_ks) {
    if (k <= cfg.eval_samples) out.pass_at_k[k] = pass_at_k(results, k);
  }
  out.accuracy = std::accumulate(accuracy.begin(), accuracy.end(), 0.0) / static_cast<double>(nq);
  double hard_sum = 0.0;
  std::size_t hard_count = 0;
  for (std::size_t q = 0; q < nq && q < hard.size(); ++q) {
    if (hard[q]) {
      hard_sum += accuracy[q];
      ++hard_count;
    }
  }
  if (hard_count > 0) out.hard_accuracy = hard_sum / static_cast<double>(hard_count);
  return out;
}

TrainResult train(const SyntheticTask& task, const TrainConfig& cfg, Algorithm algorithm,
                  const std::function<void(const TrainMetrics&)>& on_step) {
  cfg.validate();
  PolicyModel policy = task.initial_policy;
  policy.set_temperature(cfg.temperature);
  AdvantageConfig adv_cfg = cfg.advantage;
  adv_cfg.alpha = cfg.alpha;
  adv_cfg.mode = advantage_mode(algorithm);

  TrainResult result{{}, policy};
  std::vector<TrainingGroup> groups(cfg.questions_per_batch);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto s = static_cast<std::uint64_t>(step);
    Rng pick = derive_rng(cfg.seed, {kPickTag, s});
    std::vector<std::size_t> questions(cfg.questions_per_batch);
    for (auto& q : questions) q = static_cast<std::size_t>(uniform_index(pick, task.task.size()));

    parallel_for(questions.size(), cfg.threads, [&](std::size_t b) {
      Rng rng = derive_rng(cfg.seed, {kSampleTag, s, b});
      SampledGroup sg = sample_group(policy, task.task, questions[b], cfg.group_size, rng,
                                     "s" + std::to_string(step) + "-" + std::to_string(b));
      groups[b] = TrainingGroup{
          sg.question_index, std::move(sg.answers),
          compute_advantages(calibrate_group(std::move(sg.group), cfg.calibration), adv_cfg)};
    });

    TrainMetrics m;
    m.step = static_cast<long>(step);
    double reward = 0.0;
    std::size_t negative = 0;
    for (const auto& g : groups) {
      reward += g.calibrated.group.rewards().sum();
      negative += g.calibrated.kind == GroupKind::Negative ? 1 : 0;
    }
    m.mean_reward = reward / static_cast<double>(groups.size() * cfg.group_size);
    m.negative_group_fraction =
        static_cast<double>(negative) / static_cast<double>(groups.size());

    const auto diag = surrogate_update(policy, groups, cfg, m.step);
    m.grad_norm = diag.grad_norm;
    m.grad_norm_from_negative_groups = diag.grad_norm_from_negative_groups;

    const bool eval_step =
        step == cfg.steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0);
    if (eval_step) {
      auto ev = evaluate(policy, task.task, task.hard, cfg, m.step);
      m.pass_at_k = std::move(ev.pass_at_k);
      m.accuracy = ev.accuracy;
      m.hard_accuracy = ev.hard_accuracy;
    }
    if (on_step) on_step(m);
    result.metrics.push_back(std::move(m));
  }
  result.final_policy = std::move(policy);
  return result;
}

}  // namespace lens
