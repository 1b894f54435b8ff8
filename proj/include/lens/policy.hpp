#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "lens/rng.hpp"
#include "lens/types.hpp"

namespace lens {

enum class Parameterization { TabularSoftmax, LinearAutoregressive };

/// A response drawn from a policy, with the per-token log-probabilities of
/// the sampling distribution recorded for later importance ratios.
struct SampledAnswer {
  std::size_t answer = 0;
  std::vector<double> token_logprobs;
  double seq_logprob = 0.0;

  std::size_t length() const noexcept { return token_logprobs.size(); }
};

/// One logit per (question, answer); every answer is a single token.
class TabularSoftmax {
 public:
  explicit TabularSoftmax(std::vector<std::size_t> answers_per_question,
                          double temperature = 1.0);

  std::size_t num_questions() const noexcept { return answers_.size(); }
  std::size_t num_answers(std::size_t q) const { return answers_.at(q); }
  Eigen::Index num_params() const noexcept { return params_.size(); }
  const Vector& params() const noexcept { return params_; }
  void set_params(const Vector& params);
  double temperature() const noexcept { return temperature_; }
  void set_temperature(double temperature);

  std::size_t answer_length(std::size_t, std::size_t) const noexcept { return 1; }
  std::string answer_label(std::size_t q, std::size_t a) const;

  /// Logits of question q (a view into the parameter vector).
  Eigen::Map<const Vector> logits(std::size_t q) const;
  /// Writable view, used when seeding initial logits.
  Eigen::Map<Vector> mutable_logits(std::size_t q);

  Vector distribution(std::size_t q) const;
  double log_prob(std::size_t q, std::size_t a) const;
  std::vector<double> token_log_probs(std::size_t q, std::size_t a) const;

  /// grad += coeff * d/dtheta log pi(a | q)
  void add_score(std::size_t q, std::size_t a, double coeff, Eigen::Ref<Vector> grad) const;
  void add_token_score(std::size_t q, std::size_t a, std::size_t t, double coeff,
                       Eigen::Ref<Vector> grad) const;

  SampledAnswer sample(std::size_t q, Rng& rng) const;

 private:
  std::vector<std::size_t> answers_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
  double temperature_;
};

/// Token-level softmax whose logits are linear in one-hot features:
///   z_t = W * phi(q) + P[t] + B[prev token]
/// over a vocabulary whose last token is end-of-sequence. Answers are all
/// token strings of at most `max_len` tokens; a string shorter than max_len
/// ends with EOS.
class LinearAutoregressive {
 public:
  LinearAutoregressive(Matrix question_embeddings, std::size_t vocab, std::size_t max_len,
                       double temperature = 1.0);

  /// One-hot question embeddings: an independent W column per question.
  static LinearAutoregressive one_hot(std::size_t num_questions, std::size_t vocab,
                                      std::size_t max_len, double temperature = 1.0);

  std::size_t num_questions() const noexcept {
    return static_cast<std::size_t>(embeddings_.rows());
  }
  std::size_t num_answers(std::size_t q) const;
  Eigen::Index num_params() const noexcept { return params_.size(); }
  const Vector& params() const noexcept { return params_; }
  void set_params(const Vector& params);
  double temperature() const noexcept { return temperature_; }
  void set_temperature(double temperature);
  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t max_len() const noexcept { return max_len_; }
  std::size_t eos() const noexcept { return vocab_ - 1; }

  /// Token sequence of answer index `a` (enumeration order: by number of
  /// content tokens, then lexicographic).
  std::vector<std::size_t> decode(std::size_t a) const;
  std::size_t encode(const std::vector<std::size_t>& tokens) const;

  std::size_t answer_length(std::size_t q, std::size_t a) const;
  std::string answer_label(std::size_t q, std::size_t a) const;

  Vector distribution(std::size_t q) const;
  double log_prob(std::size_t q, std::size_t a) const;
  std::vector<double> token_log_probs(std::size_t q, std::size_t a) const;

  void add_score(std::size_t q, std::size_t a, double coeff, Eigen::Ref<Vector> grad) const;
  void add_token_score(std::size_t q, std::size_t a, std::size_t t, double coeff,
                       Eigen::Ref<Vector> grad) const;

  SampledAnswer sample(std::size_t q, Rng& rng) const;

 private:
  std::size_t prev_slot(const std::vector<std::size_t>& tokens, std::size_t t) const;
  Vector step_log_probs(std::size_t q, std::size_t t, std::size_t prev) const;
  void add_step_score(std::size_t q, std::size_t t, std::size_t prev, std::size_t token,
                      double coeff, Eigen::Ref<Vector> grad) const;

  Eigen::Index w_offset() const noexcept { return 0; }
  Eigen::Index p_offset() const noexcept;
  Eigen::Index b_offset() const noexcept;

  Matrix embeddings_;  // questions x dim
  std::size_t vocab_;
  std::size_t max_len_;
  std::size_t answer_count_;
  std::vector<std::size_t> level_offsets_;  // first index of each content length
  Vector params_;
  double temperature_;
};

/// Runtime choice between the two policy families.
class PolicyModel {
 public:
  PolicyModel(TabularSoftmax policy) : impl_(std::move(policy)) {}  // NOLINT
  PolicyModel(LinearAutoregressive policy) : impl_(std::move(policy)) {}  // NOLINT

  Parameterization parameterization() const noexcept {
    return std::holds_alternative<TabularSoftmax>(impl_)
               ? Parameterization::TabularSoftmax
               : Parameterization::LinearAutoregressive;
  }

  template <typename F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), impl_);
  }
  template <typename F>
  decltype(auto) visit(F&& f) {
    return std::visit(std::forward<F>(f), impl_);
  }

  std::size_t num_questions() const {
    return visit([](const auto& p) { return p.num_questions(); });
  }
  std::size_t num_answers(std::size_t q) const {
    return visit([q](const auto& p) { return p.num_answers(q); });
  }
  Eigen::Index num_params() const {
    return visit([](const auto& p) { return p.num_params(); });
  }
  const Vector& params() const {
    return visit([](const auto& p) -> const Vector& { return p.params(); });
  }
  void set_params(const Vector& params) {
    visit([&](auto& p) { p.set_params(params); });
  }
  double temperature() const {
    return visit([](const auto& p) { return p.temperature(); });
  }
  void set_temperature(double temperature) {
    visit([=](auto& p) { p.set_temperature(temperature); });
  }
  std::size_t answer_length(std::size_t q, std::size_t a) const {
    return visit([=](const auto& p) { return p.answer_length(q, a); });
  }
  std::string answer_label(std::size_t q, std::size_t a) const {
    return visit([=](const auto& p) { return p.answer_label(q, a); });
  }
  Vector distribution(std::size_t q) const {
    return visit([q](const auto& p) { return p.distribution(q); });
  }
  double log_prob(std::size_t q, std::size_t a) const {
    return visit([=](const auto& p) { return p.log_prob(q, a); });
  }
  std::vector<double> token_log_probs(std::size_t q, std::size_t a) const {
    return visit([=](const auto& p) { return p.token_log_probs(q, a); });
  }
  void add_score(std::size_t q, std::size_t a, double coeff, Eigen::Ref<Vector> grad) const {
    visit([&](const auto& p) { p.add_score(q, a, coeff, grad); });
  }
  void add_token_score(std::size_t q, std::size_t a, std::size_t t, double coeff,
                       Eigen::Ref<Vector> grad) const {
    visit([&](const auto& p) { p.add_token_score(q, a, t, coeff, grad); });
  }
  /// d/dtheta log pi(a | q) as a dense vector.
  Vector score(std::size_t q, std::size_t a) const {
    Vector g = Vector::Zero(num_params());
    add_score(q, a, 1.0, g);
    return g;
  }
  SampledAnswer sample(std::size_t q, Rng& rng) const {
    return visit([&](const auto& p) { return p.sample(q, rng); });
  }

 private:
  std::variant<TabularSoftmax, LinearAutoregressive> impl_;
};

/// Numerically stable log-softmax.
Vector log_softmax(const Vector& logits);

/// Inverse-CDF draw from a probability vector.
std::size_t sample_categorical(const Vector& probs, Rng& rng);

}  // namespace lens
