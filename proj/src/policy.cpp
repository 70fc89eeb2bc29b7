#include "sdpo/policy.hpp"

#include <cmath>
#include <sstream>

#include "sdpo/errors.hpp"
#include "sdpo/rng.hpp"

namespace sdpo {

Eigen::Index Architecture::parameter_count() const {
  const Eigen::Index k = context_window, d = embedding_dim, h = hidden_dim, V = vocab_size;
  return V * d + (k * d) * h + h + h * V + V;
}

void Architecture::validate() const {
  if (context_window < 1 || embedding_dim < 1 || hidden_dim < 1) {
    throw ConfigError("architecture dimensions must be >= 1");
  }
  if (vocab_size <= Vocabulary::kFirstContent) {
    throw ConfigError("vocab_size must exceed the 3 reserved special tokens, got " +
                      std::to_string(vocab_size));
  }
}

ParameterLayout::ParameterLayout(const Architecture& a) {
  const Eigen::Index k = a.context_window, d = a.embedding_dim, h = a.hidden_dim, V = a.vocab_size;
  embedding = 0;
  hidden_weight = embedding + d * V;
  hidden_bias = hidden_weight + h * k * d;
  output_weight = hidden_bias + h;
  output_bias = output_weight + V * h;
  total = output_bias + V;
}

PolicyModel init_policy(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  PolicyModel m{arch, seed, Eigen::VectorXd(arch.parameter_count())};
  const ParameterLayout layout(arch);
  Rng rng(seed);
  auto fill = [&](Eigen::Index from, Eigen::Index to, double fan_in) {
    const double scale = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = from; i < to; ++i) m.theta[i] = rng.uniform(-scale, scale);
  };
  const double hidden_fan_in = double(arch.context_window) * arch.embedding_dim;
  fill(layout.embedding, layout.hidden_weight, 1.0);
  fill(layout.hidden_weight, layout.output_weight, hidden_fan_in);
  fill(layout.output_weight, layout.total, double(arch.hidden_dim));
  return m;
}

PolicyModel init_policy(const Architecture& arch, std::uint64_t seed, const Vocabulary& vocab) {
  if (static_cast<std::size_t>(arch.vocab_size) != vocab.size()) {
    throw ConfigError("architecture vocab_size " + std::to_string(arch.vocab_size) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  return init_policy(arch, seed);
}

namespace {

// Activations of one teacher-forced pass over a (prompt, response) pair.
// Column i of every matrix belongs to scored position i.
struct Tape {
  std::vector<Token> contexts;  // k per position, oldest first
  std::vector<Token> targets;
  Eigen::MatrixXd inputs;       // k·d × n
  Eigen::MatrixXd hidden;       // h × n
  Eigen::MatrixXd probs;        // V × n
  double logprob = 0.0;
};

void check_tokens(std::span<const Token> tokens, int vocab_size, const char* what) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token t = tokens[i];
    if (t < Vocabulary::kFirstContent || t >= vocab_size) {
      throw EncodingError(std::string(what) + " token " + std::to_string(t) + " at position " +
                          std::to_string(i) + " is not a content token of a vocabulary of size " +
                          std::to_string(vocab_size));
    }
  }
}

void forward(const PolicyModel& model, std::span<const Token> prompt, std::span<const Token> response,
             Tape& tape) {
  if (response.empty()) throw DomainError("response must be non-empty");
  const Architecture& a = model.arch;
  check_tokens(prompt, a.vocab_size, "prompt");
  check_tokens(response, a.vocab_size, "response");

  const int k = a.context_window, d = a.embedding_dim;
  std::vector<Token> stream(static_cast<std::size_t>(k), Vocabulary::kPad);
  stream.insert(stream.end(), prompt.begin(), prompt.end());
  stream.push_back(Vocabulary::kBos);
  const std::size_t first = stream.size();
  stream.insert(stream.end(), response.begin(), response.end());
  stream.push_back(Vocabulary::kEos);

  const auto n = static_cast<Eigen::Index>(stream.size() - first);
  tape.targets.assign(stream.begin() + static_cast<std::ptrdiff_t>(first), stream.end());
  tape.contexts.resize(static_cast<std::size_t>(n * k));
  tape.inputs.resize(Eigen::Index{k} * d, n);

  const auto p = blocks(model);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t pos = first + static_cast<std::size_t>(i);
    for (int j = 0; j < k; ++j) {
      const Token t = stream[pos - static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
      tape.contexts[static_cast<std::size_t>(i * k + j)] = t;
      tape.inputs.col(i).segment(Eigen::Index{j} * d, d) = p.embedding.col(t);
    }
  }

  tape.hidden = ((p.hidden_weight * tape.inputs).colwise() + p.hidden_bias).array().tanh();
  tape.probs = (p.output_weight * tape.hidden).colwise() + p.output_bias;

  // Column-wise log-softmax; probs holds logits until normalized.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto col = tape.probs.col(i);
    const double max = col.maxCoeff();
    const double lse = max + std::log((col.array() - max).exp().sum());
    total += col[tape.targets[static_cast<std::size_t>(i)]] - lse;
    col = (col.array() - lse).exp();
  }
  tape.logprob = total;
}

}  // namespace

Eigen::VectorXd next_token_distribution(const PolicyModel& model, std::span<const Token> context) {
  const Architecture& a = model.arch;
  if (context.size() != static_cast<std::size_t>(a.context_window)) {
    throw DomainError("context must hold exactly " + std::to_string(a.context_window) + " tokens");
  }
  const auto p = blocks(model);
  Eigen::VectorXd x(Eigen::Index{a.context_window} * a.embedding_dim);
  for (int j = 0; j < a.context_window; ++j) {
    const Token t = context[static_cast<std::size_t>(j)];
    if (t < 0 || t >= a.vocab_size) throw EncodingError("context token " + std::to_string(t) + " out of range");
    x.segment(Eigen::Index{j} * a.embedding_dim, a.embedding_dim) = p.embedding.col(t);
  }
  const Eigen::VectorXd hidden = (p.hidden_weight * x + p.hidden_bias).array().tanh();
  Eigen::VectorXd logits = p.output_weight * hidden + p.output_bias;
  const double max = logits.maxCoeff();
  const double lse = max + std::log((logits.array() - max).exp().sum());
  return (logits.array() - lse).exp();
}

SequenceLogProb sequence_logprob(const PolicyModel& model, std::span<const Token> prompt,
                                 std::span<const Token> response) {
  Tape tape;
  forward(model, prompt, response, tape);
  return {tape.logprob, static_cast<int>(tape.targets.size())};
}

SequenceLogProb accumulate_logprob_gradient(const PolicyModel& model, std::span<const Token> prompt,
                                            std::span<const Token> response, double scale,
                                            Eigen::Ref<Eigen::VectorXd> gradient) {
  if (gradient.size() != model.theta.size()) throw DomainError("gradient buffer has the wrong length");
  Tape tape;
  forward(model, prompt, response, tape);

  const Architecture& a = model.arch;
  const auto p = blocks(model);
  ParameterBlocks<double> g(gradient.data(), a);

  // d logP / d logits = onehot(target) − probs
  Eigen::MatrixXd delta = -tape.probs;
  for (Eigen::Index i = 0; i < delta.cols(); ++i) delta(tape.targets[static_cast<std::size_t>(i)], i) += 1.0;
  delta *= scale;

  g.output_weight.noalias() += delta * tape.hidden.transpose();
  g.output_bias += delta.rowwise().sum();

  const Eigen::MatrixXd pre =
      ((p.output_weight.transpose() * delta).array() * (1.0 - tape.hidden.array().square())).matrix();
  g.hidden_weight.noalias() += pre * tape.inputs.transpose();
  g.hidden_bias += pre.rowwise().sum();

  const Eigen::MatrixXd d_inputs = p.hidden_weight.transpose() * pre;
  const int k = a.context_window, d = a.embedding_dim;
  for (Eigen::Index i = 0; i < d_inputs.cols(); ++i) {
    for (int j = 0; j < k; ++j) {
      const Token t = tape.contexts[static_cast<std::size_t>(i * k + j)];
      g.embedding.col(t) += d_inputs.col(i).segment(Eigen::Index{j} * d, d);
    }
  }
  return {tape.logprob, static_cast<int>(tape.targets.size())};
}

Eigen::VectorXd logprob_gradient(const PolicyModel& model, std::span<const Token> prompt,
                                 std::span<const Token> response) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.theta.size());
  accumulate_logprob_gradient(model, prompt, response, 1.0, grad);
  return grad;
}

void SftConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sft learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("sft batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("sft epochs must be >= 0");
}

double mean_nll(const PolicyModel& model, std::span<const SftExample> corpus) {
  if (corpus.empty()) throw DomainError("corpus must be non-empty");
  double total = 0.0;
  for (const auto& ex : corpus) total -= sequence_logprob(model, ex.prompt, ex.response).value;
  return total / static_cast<double>(corpus.size());
}

PolicyModel sft_train(PolicyModel model, std::span<const SftExample> corpus, const SftConfig& config) {
  if (corpus.empty()) throw DomainError("sft corpus must be non-empty");
  config.validate();

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed);
  Eigen::VectorXd grad(model.theta.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      grad.setZero();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = corpus[order[i]];
        loss -= weight * accumulate_logprob_gradient(model, ex.prompt, ex.response, weight, grad).value;
      }
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream dump;
        dump << "non-finite SFT loss " << loss << " at epoch " << epoch << ", batch starting at "
             << start << "; members:";
        for (std::size_t i = start; i < end; ++i) {
          const auto& ex = corpus[order[i]];
          dump << "\n  id=" << ex.id << " prompt_len=" << ex.prompt.size()
               << " response_len=" << ex.response.size();
        }
        throw NumericalError(dump.str(), corpus[order[start]].id);
      }
      // grad holds ∇ mean logP; descend on the NLL.
      model.theta.noalias() += config.learning_rate * grad;
    }
  }
  return model;
}

}  // namespace sdpo
