#pragma once

#include <Eigen/Core>

#include "sdpo/dpo.hpp"

namespace sdpo {

/// Plain SGD or Adam over a flat parameter vector. State is created fresh
/// for every sDPO step.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, double learning_rate, Eigen::Index size);

  /// Descends: theta ← theta − update(gradient).
  void step(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::VectorXd& gradient);

  long steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  double learning_rate_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace sdpo
