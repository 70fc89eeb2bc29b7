#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sdpo/data.hpp"
#include "sdpo/policy.hpp"

namespace sdpo {

/// softplus(x) = log(1 + e^x), evaluated without overflow for either sign.
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

/// Logistic function without overflow for either sign.
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// Per-sample DPO loss −log σ(β·Δγ) = softplus(−β·Δγ).
template <typename Scalar>
Scalar dpo_sample_loss(Scalar delta_gamma, Scalar beta) {
  return softplus(-beta * delta_gamma);
}

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct DpoConfig {
  double beta = 0.1;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int epochs = 3;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const;
};

/// γ_π(x, y_w, y_l) = log π(y_w|x) − log π(y_l|x) for one triple.
struct GammaValue {
  double value = 0.0;
  std::string sample_id;
};

/// Throws NumericalError (carrying the sample id) if γ is not finite.
GammaValue gamma(const PolicyModel& policy, const TokenizedTriple& triple);
GammaValue gamma(const PolicyModel& policy, const PreferenceTriple& triple);

/// γ for every triple, in order. Evaluation may fan out over
/// SDPO_LAB_THREADS workers; the result does not depend on the count.
std::vector<double> gammas(const PolicyModel& policy, std::span<const TokenizedTriple> triples);

/// Mean over the batch of −log σ(β(γ_target − γ_reference)).
double dpo_loss(const PolicyModel& target, const PolicyModel& reference,
                std::span<const TokenizedTriple> batch, double beta);

/// Exact gradient of dpo_loss with respect to target.theta:
/// mean over the batch of −β·σ(−β·Δγ)·∇γ_target.
Eigen::VectorXd dpo_loss_gradient(const PolicyModel& target, const PolicyModel& reference,
                                  std::span<const TokenizedTriple> batch, double beta);

/// Loss and gradient in one pass given precomputed reference γ values
/// (`reference_gammas[i]` belongs to `batch[i]`). `gradient` is overwritten.
double dpo_loss_and_gradient(const PolicyModel& target, std::span<const TokenizedTriple> batch,
                             std::span<const double> reference_gammas, double beta,
                             Eigen::Ref<Eigen::VectorXd> gradient);

/// Fraction of triples with γ > 0. Ties count as failures.
double reward_accuracy(const PolicyModel& policy, std::span<const TokenizedTriple> dataset);
double reward_accuracy(const PolicyModel& policy, std::span<const PreferenceTriple> dataset);

/// Arithmetic mean of γ, summed sequentially in dataset order.
double mean_gamma(const PolicyModel& policy, std::span<const TokenizedTriple> dataset);
double mean_gamma(const PolicyModel& policy, std::span<const PreferenceTriple> dataset);

}  // namespace sdpo
