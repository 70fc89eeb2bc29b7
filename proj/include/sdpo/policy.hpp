#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sdpo/vocabulary.hpp"

namespace sdpo {

/// Shape of the fixed-window language model.
struct Architecture {
  int context_window = 8;   // k
  int embedding_dim = 16;   // d
  int hidden_dim = 64;      // h
  int vocab_size = 73;      // V

  /// V·d + (k·d)·h + h + h·V + V.
  Eigen::Index parameter_count() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

/// Offsets of each parameter block inside the flat theta vector. Blocks are
/// stored column-major in this order:
///   embedding  d × V   (column v is the embedding of token v)
///   hidden W   h × k·d (context slot j occupies columns j·d .. j·d+d-1;
///                       slot 0 is the oldest token of the window)
///   hidden b   h
///   output W   V × h
///   output b   V
struct ParameterLayout {
  explicit ParameterLayout(const Architecture& arch);

  Eigen::Index embedding = 0;
  Eigen::Index hidden_weight = 0;
  Eigen::Index hidden_bias = 0;
  Eigen::Index output_weight = 0;
  Eigen::Index output_bias = 0;
  Eigen::Index total = 0;
};

/// Parameters θ plus the architecture metadata needed to interpret them.
struct PolicyModel {
  Architecture arch;
  std::uint64_t seed = 0;
  Eigen::VectorXd theta;
};

/// Block views over a theta-shaped vector. `Scalar` is `double` for mutable
/// access and `const double` for read-only access.
template <typename Scalar>
struct ParameterBlocks {
  using Mat = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Eigen::MatrixXd, Eigen::MatrixXd>>;
  using Vec = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd, Eigen::VectorXd>>;

  ParameterBlocks(Scalar* data, const Architecture& a)
      : ParameterBlocks(data, a, ParameterLayout(a)) {}

  ParameterBlocks(Scalar* data, const Architecture& a, const ParameterLayout& l)
      : embedding(data + l.embedding, a.embedding_dim, a.vocab_size),
        hidden_weight(data + l.hidden_weight, a.hidden_dim, Eigen::Index{a.context_window} * a.embedding_dim),
        hidden_bias(data + l.hidden_bias, a.hidden_dim),
        output_weight(data + l.output_weight, a.vocab_size, a.hidden_dim),
        output_bias(data + l.output_bias, a.vocab_size) {}

  Mat embedding;
  Mat hidden_weight;
  Vec hidden_bias;
  Mat output_weight;
  Vec output_bias;
};

inline ParameterBlocks<const double> blocks(const PolicyModel& m) {
  return {m.theta.data(), m.arch};
}

/// Log-probability of a response given a prompt, in nats.
struct SequenceLogProb {
  double value = 0.0;
  int token_count = 0;
};

/// Initializes θ from `seed`: every parameter is drawn uniformly from
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)], with fan_in = 1 for the embedding,
/// k·d for the hidden layer and h for the output layer. Draws are taken from
/// Rng(seed) in theta order.
PolicyModel init_policy(const Architecture& arch, std::uint64_t seed);
/// As above, additionally checking arch.vocab_size against `vocab`.
PolicyModel init_policy(const Architecture& arch, std::uint64_t seed, const Vocabulary& vocab);

/// Next-token distribution after `context` (exactly k tokens, oldest first).
Eigen::VectorXd next_token_distribution(const PolicyModel& model, std::span<const Token> context);

/// Σ log P(response_i | preceding k tokens) under teacher forcing, with EOS
/// scored after the last response token (token_count = |response| + 1).
/// The scored stream is PAD·k ‖ prompt ‖ BOS ‖ response ‖ EOS.
/// Throws DomainError for an empty response and EncodingError for tokens
/// that are specials or outside [0, V).
SequenceLogProb sequence_logprob(const PolicyModel& model, std::span<const Token> prompt,
                                 std::span<const Token> response);

/// ∂/∂θ of sequence_logprob, length |θ|.
Eigen::VectorXd logprob_gradient(const PolicyModel& model, std::span<const Token> prompt,
                                 std::span<const Token> response);

/// Adds `scale · ∂/∂θ log P(response | prompt)` to `gradient` and returns the
/// log-probability. Training loops use this to avoid one allocation per
/// sequence.
SequenceLogProb accumulate_logprob_gradient(const PolicyModel& model, std::span<const Token> prompt,
                                            std::span<const Token> response, double scale,
                                            Eigen::Ref<Eigen::VectorXd> gradient);

struct SftExample {
  std::string id;
  std::vector<Token> prompt;
  std::vector<Token> response;
};

/// Defaults leave S deliberately under-trained: stronger SFT saturates reward
/// accuracy at 1.0 on every synthetic source and erases the difficulty ladder.
struct SftConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean of −log P(response | prompt) over the corpus.
double mean_nll(const PolicyModel& model, std::span<const SftExample> corpus);

/// Maximum-likelihood fine-tuning with mini-batch SGD on the mean sequence
/// NLL. The corpus is reshuffled every epoch by Rng(config.seed). A non-finite
/// batch loss throws NumericalError whose message lists the batch members.
PolicyModel sft_train(PolicyModel model, std::span<const SftExample> corpus, const SftConfig& config);

}  // namespace sdpo
