#pragma once

// Test-only reference implementations. Nothing here calls the library's
// scoring code: the forward pass below is written with explicit loops in long
// double and reads theta through the documented parameter layout only.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sdpo/policy.hpp"

namespace oracle {

using Real = long double;

inline std::vector<Real> widen(const Eigen::VectorXd& theta) {
  std::vector<Real> out(static_cast<std::size_t>(theta.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta[static_cast<Eigen::Index>(i)];
  return out;
}

/// log P(next | context) for every token, brute force.
inline std::vector<Real> log_softmax_at(const std::vector<Real>& th, const sdpo::Architecture& a,
                                        const std::vector<int>& context) {
  const std::size_t k = a.context_window, d = a.embedding_dim, h = a.hidden_dim, V = a.vocab_size;
  const std::size_t emb = 0, w1 = emb + d * V, b1 = w1 + h * k * d, w2 = b1 + h, b2 = w2 + V * h;

  std::vector<Real> x(k * d);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t e = 0; e < d; ++e) x[j * d + e] = th[emb + e + static_cast<std::size_t>(context[j]) * d];

  std::vector<Real> hidden(h);
  for (std::size_t r = 0; r < h; ++r) {
    Real acc = th[b1 + r];
    for (std::size_t c = 0; c < k * d; ++c) acc += th[w1 + r + c * h] * x[c];
    hidden[r] = std::tanh(acc);
  }
  std::vector<Real> logits(V);
  Real max = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) {
    Real acc = th[b2 + v];
    for (std::size_t r = 0; r < h; ++r) acc += th[w2 + v + r * V] * hidden[r];
    logits[v] = acc;
    if (acc > max) max = acc;
  }
  Real z = 0;
  for (Real l : logits) z += std::exp(l - max);
  const Real lse = max + std::log(z);
  for (Real& l : logits) l -= lse;
  return logits;
}

/// Σ log P over response tokens and the trailing EOS (token 2); stream is
/// PAD(0)·k, prompt, BOS(1), response, EOS.
inline Real sequence_logprob(const std::vector<Real>& th, const sdpo::Architecture& a,
                             const std::vector<int>& prompt, const std::vector<int>& response) {
  std::vector<int> stream(static_cast<std::size_t>(a.context_window), 0);
  stream.insert(stream.end(), prompt.begin(), prompt.end());
  stream.push_back(1);
  const std::size_t first = stream.size();
  stream.insert(stream.end(), response.begin(), response.end());
  stream.push_back(2);
  Real total = 0;
  for (std::size_t pos = first; pos < stream.size(); ++pos) {
    std::vector<int> ctx(stream.begin() + static_cast<std::ptrdiff_t>(pos - a.context_window),
                         stream.begin() + static_cast<std::ptrdiff_t>(pos));
    total += log_softmax_at(th, a, ctx)[static_cast<std::size_t>(stream[pos])];
  }
  return total;
}

inline Real softplus(Real x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct Triple {
  std::vector<int> prompt, chosen, rejected;
};

inline Real gamma(const std::vector<Real>& th, const sdpo::Architecture& a, const Triple& t) {
  return sequence_logprob(th, a, t.prompt, t.chosen) - sequence_logprob(th, a, t.prompt, t.rejected);
}

inline Real dpo_loss(const std::vector<Real>& target, const std::vector<Real>& reference, const sdpo::Architecture& a,
                     const std::vector<Triple>& batch, Real beta) {
  Real total = 0;
  for (const auto& t : batch) total += softplus(-beta * (gamma(target, a, t) - gamma(reference, a, t)));
  return total / static_cast<Real>(batch.size());
}

/// Central difference of f at coordinate i with step h.
template <typename F>
Real central_difference(std::vector<Real> th, std::size_t i, Real h, F&& f) {
  const Real x = th[i];
  th[i] = x + h;
  const Real plus = f(th);
  th[i] = x - h;
  const Real minus = f(th);
  return (plus - minus) / (2 * h);
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace oracle
