#include "lens/policy.hpp"

#include <cmath>
#include <numeric>

namespace lens {

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

std::size_t sample_categorical(const Vector& probs, Rng& rng) {
  const double u = uniform01(rng) * probs.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<std::size_t>(i);
  }
  // Rounding can leave u just above the final partial sum.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return static_cast<std::size_t>(i);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// TabularSoftmax

TabularSoftmax::TabularSoftmax(std::vector<std::size_t> answers_per_question,
                               double temperature)
    : answers_(std::move(answers_per_question)), temperature_(temperature) {
  if (!(temperature_ > 0.0)) throw SpecError("temperature must be positive");
  offsets_.reserve(answers_.size());
  Eigen::Index total = 0;
  for (auto n : answers_) {
    if (n == 0) throw SpecError("question with an empty answer space");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(n);
  }
  params_ = Vector::Zero(total);
}

void TabularSoftmax::set_params(const Vector& params) {
  if (params.size() != params_.size()) throw SizeError("SizeError: parameter size mismatch");
  params_ = params;
}

void TabularSoftmax::set_temperature(double temperature) {
  if (!(temperature > 0.0)) throw SpecError("temperature must be positive");
  temperature_ = temperature;
}

std::string TabularSoftmax::answer_label(std::size_t, std::size_t a) const {
  return "a" + std::to_string(a);
}

Eigen::Map<const Vector> TabularSoftmax::logits(std::size_t q) const {
  return {params_.data() + offsets_.at(q), static_cast<Eigen::Index>(answers_[q])};
}

Eigen::Map<Vector> TabularSoftmax::mutable_logits(std::size_t q) {
  return {params_.data() + offsets_.at(q), static_cast<Eigen::Index>(answers_[q])};
}

Vector TabularSoftmax::distribution(std::size_t q) const {
  return log_softmax(logits(q) / temperature_).array().exp();
}

double TabularSoftmax::log_prob(std::size_t q, std::size_t a) const {
  return log_softmax(logits(q) / temperature_)[static_cast<Eigen::Index>(a)];
}

std::vector<double> TabularSoftmax::token_log_probs(std::size_t q, std::size_t a) const {
  return {log_prob(q, a)};
}

void TabularSoftmax::add_score(std::size_t q, std::size_t a, double coeff,
                               Eigen::Ref<Vector> grad) const {
  const Vector p = distribution(q);
  auto block = grad.segment(offsets_.at(q), static_cast<Eigen::Index>(answers_[q]));
  const double c = coeff / temperature_;
  block -= c * p;
  block[static_cast<Eigen::Index>(a)] += c;
}

void TabularSoftmax::add_token_score(std::size_t q, std::size_t a, std::size_t t,
                                     double coeff, Eigen::Ref<Vector> grad) const {
  if (t != 0) throw DomainError("tabular answers have a single token");
  add_score(q, a, coeff, grad);
}

SampledAnswer TabularSoftmax::sample(std::size_t q, Rng& rng) const {
  const Vector logp = log_softmax(logits(q) / temperature_);
  const std::size_t a = sample_categorical(logp.array().exp(), rng);
  const double lp = logp[static_cast<Eigen::Index>(a)];
  return SampledAnswer{a, {lp}, lp};
}

// ---------------------------------------------------------------------------
// LinearAutoregressive

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

LinearAutoregressive::LinearAutoregressive(Matrix question_embeddings, std::size_t vocab,
                                           std::size_t max_len, double temperature)
    : embeddings_(std::move(question_embeddings)),
      vocab_(vocab),
      max_len_(max_len),
      temperature_(temperature) {
  if (vocab_ < 2) throw SpecError("vocabulary needs at least one content token and EOS");
  if (max_len_ < 1) throw SpecError("max_len must be at least 1");
  if (!(temperature_ > 0.0)) throw SpecError("temperature must be positive");
  if (embeddings_.rows() == 0 || embeddings_.cols() == 0) {
    throw SpecError("question embeddings must be non-empty");
  }
  const std::size_t m = vocab_ - 1;
  level_offsets_.resize(max_len_ + 2);
  level_offsets_[0] = 0;
  for (std::size_t l = 0; l <= max_len_; ++l) {
    level_offsets_[l + 1] = level_offsets_[l] + ipow(m, l);
  }
  answer_count_ = level_offsets_[max_len_ + 1];
  const auto v = static_cast<Eigen::Index>(vocab_);
  params_ = Vector::Zero(v * embeddings_.cols() + static_cast<Eigen::Index>(max_len_) * v +
                         v * v);
}

LinearAutoregressive LinearAutoregressive::one_hot(std::size_t num_questions,
                                                   std::size_t vocab, std::size_t max_len,
                                                   double temperature) {
  const auto n = static_cast<Eigen::Index>(num_questions);
  return LinearAutoregressive(Matrix::Identity(n, n), vocab, max_len, temperature);
}

std::size_t LinearAutoregressive::num_answers(std::size_t q) const {
  if (q >= num_questions()) throw SizeError("SizeError: question index out of range");
  return answer_count_;
}

void LinearAutoregressive::set_params(const Vector& params) {
  if (params.size() != params_.size()) throw SizeError("SizeError: parameter size mismatch");
  params_ = params;
}

void LinearAutoregressive::set_temperature(double temperature) {
  if (!(temperature > 0.0)) throw SpecError("temperature must be positive");
  temperature_ = temperature;
}

Eigen::Index LinearAutoregressive::p_offset() const noexcept {
  return static_cast<Eigen::Index>(vocab_) * embeddings_.cols();
}

Eigen::Index LinearAutoregressive::b_offset() const noexcept {
  return p_offset() + static_cast<Eigen::Index>(max_len_ * vocab_);
}

std::vector<std::size_t> LinearAutoregressive::decode(std::size_t a) const {
  if (a >= answer_count_) throw SizeError("SizeError: answer index out of range");
  std::size_t level = 0;
  while (a >= level_offsets_[level + 1]) ++level;
  std::size_t rest = a - level_offsets_[level];
  const std::size_t m = vocab_ - 1;
  std::vector<std::size_t> tokens(level);
  for (std::size_t i = level; i-- > 0;) {
    tokens[i] = rest % m;
    rest /= m;
  }
  if (level < max_len_) tokens.push_back(eos());
  return tokens;
}

std::size_t LinearAutoregressive::encode(const std::vector<std::size_t>& tokens) const {
  std::size_t level = tokens.size();
  if (level > 0 && tokens.back() == eos()) --level;
  if (level > max_len_ || (level < max_len_ && tokens.size() != level + 1)) {
    throw DomainError("token sequence is not a valid answer");
  }
  const std::size_t m = vocab_ - 1;
  std::size_t index = 0;
  for (std::size_t i = 0; i < level; ++i) {
    if (tokens[i] >= m) throw DomainError("EOS inside an answer");
    index = index * m + tokens[i];
  }
  return level_offsets_[level] + index;
}

std::size_t LinearAutoregressive::answer_length(std::size_t, std::size_t a) const {
  return decode(a).size();
}

std::string LinearAutoregressive::answer_label(std::size_t, std::size_t a) const {
  std::string label;
  for (auto t : decode(a)) {
    if (!label.empty()) label += '-';
    label += t == eos() ? std::string("$") : std::to_string(t);
  }
  return label;
}

std::size_t LinearAutoregressive::prev_slot(const std::vector<std::size_t>& tokens,
                                            std::size_t t) const {
  return t == 0 ? 0 : tokens[t - 1] + 1;
}

Vector LinearAutoregressive::step_log_probs(std::size_t q, std::size_t t,
                                            std::size_t prev) const {
  const auto v = static_cast<Eigen::Index>(vocab_);
  const Eigen::Map<const Matrix> w(params_.data() + w_offset(), v, embeddings_.cols());
  const Eigen::Map<const Matrix> pos(params_.data() + p_offset(), v,
                                     static_cast<Eigen::Index>(max_len_));
  const Eigen::Map<const Matrix> bigram(params_.data() + b_offset(), v, v);
  const Vector z = w * embeddings_.row(static_cast<Eigen::Index>(q)).transpose() +
                   pos.col(static_cast<Eigen::Index>(t)) +
                   bigram.col(static_cast<Eigen::Index>(prev));
  return log_softmax(z / temperature_);
}

std::vector<double> LinearAutoregressive::token_log_probs(std::size_t q,
                                                          std::size_t a) const {
  const auto tokens = decode(a);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out[t] = step_log_probs(q, t, prev_slot(tokens, t))[static_cast<Eigen::Index>(tokens[t])];
  }
  return out;
}

double LinearAutoregressive::log_prob(std::size_t q, std::size_t a) const {
  const auto lps = token_log_probs(q, a);
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

Vector LinearAutoregressive::distribution(std::size_t q) const {
  Vector p(static_cast<Eigen::Index>(answer_count_));
  for (std::size_t a = 0; a < answer_count_; ++a) {
    p[static_cast<Eigen::Index>(a)] = std::exp(log_prob(q, a));
  }
  return p;
}

void LinearAutoregressive::add_step_score(std::size_t q, std::size_t t, std::size_t prev,
                                          std::size_t token, double coeff,
                                          Eigen::Ref<Vector> grad) const {
  const auto v = static_cast<Eigen::Index>(vocab_);
  Vector g = -step_log_probs(q, t, prev).array().exp().matrix();
  g[static_cast<Eigen::Index>(token)] += 1.0;
  g *= coeff / temperature_;
  Eigen::Map<Matrix> w(grad.data() + w_offset(), v, embeddings_.cols());
  Eigen::Map<Matrix> pos(grad.data() + p_offset(), v, static_cast<Eigen::Index>(max_len_));
  Eigen::Map<Matrix> bigram(grad.data() + b_offset(), v, v);
  w.noalias() += g * embeddings_.row(static_cast<Eigen::Index>(q));
  pos.col(static_cast<Eigen::Index>(t)) += g;
  bigram.col(static_cast<Eigen::Index>(prev)) += g;
}

void LinearAutoregressive::add_token_score(std::size_t q, std::size_t a, std::size_t t,
                                           double coeff, Eigen::Ref<Vector> grad) const {
  const auto tokens = decode(a);
  if (t >= tokens.size()) throw DomainError("token index past the end of the answer");
  add_step_score(q, t, prev_slot(tokens, t), tokens[t], coeff, grad);
}

void LinearAutoregressive::add_score(std::size_t q, std::size_t a, double coeff,
                                     Eigen::Ref<Vector> grad) const {
  const auto tokens = decode(a);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    add_step_score(q, t, prev_slot(tokens, t), tokens[t], coeff, grad);
  }
}

SampledAnswer LinearAutoregressive::sample(std::size_t q, Rng& rng) const {
  std::vector<std::size_t> tokens;
  SampledAnswer out;
  for (std::size_t t = 0; t < max_len_; ++t) {
    const Vector logp = step_log_probs(q, t, prev_slot(tokens, t));
    const std::size_t token = sample_categorical(logp.array().exp(), rng);
    tokens.push_back(token);
    out.token_logprobs.push_back(logp[static_cast<Eigen::Index>(token)]);
    if (token == eos()) break;
  }
  out.answer = encode(tokens);
  out.seq_logprob = std::accumulate(out.token_logprobs.begin(), out.token_logprobs.end(), 0.0);
  return out;
}

}  // namespace lens
