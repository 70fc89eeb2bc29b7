#include "sdpo/optimizer.hpp"

#include <cmath>

namespace sdpo {

Optimizer::Optimizer(const OptimizerConfig& config, double learning_rate, Eigen::Index size)
    : config_(config), learning_rate_(learning_rate) {
  if (config_.kind == OptimizerConfig::Kind::adam) {
    m_ = Eigen::VectorXd::Zero(size);
    v_ = Eigen::VectorXd::Zero(size);
  }
}

void Optimizer::step(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::VectorXd& gradient) {
  ++t_;
  if (config_.kind == OptimizerConfig::Kind::sgd) {
    theta.noalias() -= learning_rate_ * gradient;
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * gradient;
  v_ = b2 * v_ + (1.0 - b2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  theta.array() -= learning_rate_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace sdpo
