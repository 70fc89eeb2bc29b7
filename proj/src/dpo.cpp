#include "sdpo/dpo.hpp"

#include "sdpo/errors.hpp"
#include "sdpo/parallel.hpp"

namespace sdpo {

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("dpo beta must be > 0");
  if (batch_size < 1) throw ConfigError("dpo batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("dpo learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("dpo epochs must be >= 0");
  if (optimizer.kind == OptimizerConfig::Kind::adam) {
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  }
}

namespace {

void require_finite(double value, const std::string& id, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite ") + what + " (" + std::to_string(value) + ") for sample " + id, id);
  }
}

void require_non_empty(std::size_t n, const char* what) {
  if (n == 0) throw DomainError(std::string(what) + " must be non-empty");
}

}  // namespace

GammaValue gamma(const PolicyModel& policy, const TokenizedTriple& triple) {
  const double chosen = sequence_logprob(policy, triple.prompt, triple.chosen).value;
  const double rejected = sequence_logprob(policy, triple.prompt, triple.rejected).value;
  const double g = chosen - rejected;
  require_finite(g, triple.id, "gamma");
  return {g, triple.id};
}

GammaValue gamma(const PolicyModel& policy, const PreferenceTriple& triple) {
  return gamma(policy, tokenize(triple));
}

std::vector<double> gammas(const PolicyModel& policy, std::span<const TokenizedTriple> triples) {
  std::vector<double> out(triples.size());
  parallel_for(triples.size(), [&](std::size_t i) { out[i] = gamma(policy, triples[i]).value; });
  return out;
}

double dpo_loss(const PolicyModel& target, const PolicyModel& reference,
                std::span<const TokenizedTriple> batch, double beta) {
  require_non_empty(batch.size(), "dpo batch");
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  double total = 0.0;
  for (const auto& t : batch) {
    const double delta = gamma(target, t).value - gamma(reference, t).value;
    const double loss = dpo_sample_loss(delta, beta);
    require_finite(loss, t.id, "dpo loss");
    total += loss;
  }
  return total / static_cast<double>(batch.size());
}

double dpo_loss_and_gradient(const PolicyModel& target, std::span<const TokenizedTriple> batch,
                             std::span<const double> reference_gammas, double beta,
                             Eigen::Ref<Eigen::VectorXd> gradient) {
  require_non_empty(batch.size(), "dpo batch");
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  if (reference_gammas.size() != batch.size()) throw DomainError("one reference gamma per triple required");
  if (gradient.size() != target.theta.size()) throw DomainError("gradient buffer has the wrong length");

  gradient.setZero();
  Eigen::VectorXd gamma_grad(target.theta.size());
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    gamma_grad.setZero();
    const double chosen = accumulate_logprob_gradient(target, t.prompt, t.chosen, 1.0, gamma_grad).value;
    const double rejected = accumulate_logprob_gradient(target, t.prompt, t.rejected, -1.0, gamma_grad).value;
    const double delta = (chosen - rejected) - reference_gammas[i];
    const double loss = dpo_sample_loss(delta, beta);
    require_finite(loss, t.id, "dpo loss");
    total += loss;
    // d/dΔ softplus(−βΔ) = −β·σ(−βΔ)
    gradient.noalias() += (-beta * sigmoid(-beta * delta) / n) * gamma_grad;
  }
  return total / n;
}

Eigen::VectorXd dpo_loss_gradient(const PolicyModel& target, const PolicyModel& reference,
                                  std::span<const TokenizedTriple> batch, double beta) {
  require_non_empty(batch.size(), "dpo batch");
  std::vector<double> ref(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) ref[i] = gamma(reference, batch[i]).value;
  Eigen::VectorXd grad(target.theta.size());
  dpo_loss_and_gradient(target, batch, ref, beta, grad);
  return grad;
}

double reward_accuracy(const PolicyModel& policy, std::span<const TokenizedTriple> dataset) {
  require_non_empty(dataset.size(), "reward accuracy dataset");
  const auto g = gammas(policy, dataset);
  std::size_t wins = 0;
  for (double v : g) wins += v > 0.0 ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(g.size());
}

double reward_accuracy(const PolicyModel& policy, std::span<const PreferenceTriple> dataset) {
  require_non_empty(dataset.size(), "reward accuracy dataset");
  return reward_accuracy(policy, tokenize(dataset));
}

double mean_gamma(const PolicyModel& policy, std::span<const TokenizedTriple> dataset) {
  require_non_empty(dataset.size(), "mean gamma dataset");
  const auto g = gammas(policy, dataset);
  double total = 0.0;
  for (double v : g) total += v;
  return total / static_cast<double>(g.size());
}

double mean_gamma(const PolicyModel& policy, std::span<const PreferenceTriple> dataset) {
  require_non_empty(dataset.size(), "mean gamma dataset");
  return mean_gamma(policy, tokenize(dataset));
}

}  // namespace sdpo
