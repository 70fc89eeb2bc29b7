#include "sdpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "sdpo/errors.hpp"
#include "sdpo/optimizer.hpp"
#include "sdpo/rng.hpp"

namespace sdpo {

std::string to_string(TargetInit t) { return t == TargetInit::previous ? "previous" : "sft_base"; }

TargetInit parse_target_init(const std::string& s) {
  if (s == "previous") return TargetInit::previous;
  if (s == "sft_base") return TargetInit::sft_base;
  throw ConfigError("unknown target_init \"" + s + "\"");
}

std::uint64_t step_seed(std::uint64_t seed, std::int64_t step) {
  return step <= 1 ? seed : derive_seed(seed, static_cast<std::uint64_t>(step));
}

namespace {

struct StepContext {
  std::int64_t step = 1;
  std::string chunk_id;
  std::uint64_t seed = 0;
  std::filesystem::path snapshot_dir;
  std::string config_hash;
  bool verify_reference_freeze = false;
};

double mean_of(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

[[noreturn]] void abort_step(const StepContext& ctx, const PolicyModel& last_good, const std::string& why) {
  std::filesystem::path persisted;
  if (!ctx.snapshot_dir.empty()) {
    persisted = snapshot_store(ctx.snapshot_dir / "aborted",
                               StepSnapshot{ctx.step, last_good, ctx.chunk_id, ctx.config_hash});
  }
  throw TrainingAborted("training aborted at step " + std::to_string(ctx.step) + " (chunk " + ctx.chunk_id +
                            "): " + why,
                        persisted);
}

/// One DPO training pass of `config.epochs` over `chunk`.
PolicyModel train_chunk(PolicyModel target, const PolicyModel& reference, std::span<const PreferenceTriple> chunk,
                        std::span<const PreferenceTriple> eval_set, const DpoConfig& config,
                        const StepContext& ctx, RunLedger& ledger) {
  const auto started = std::chrono::steady_clock::now();
  if (chunk.empty()) throw ConfigError("chunk " + ctx.chunk_id + " has no triples");
  if (target.arch != reference.arch) throw ConfigError("target and reference architectures differ");

  std::vector<PreferenceTriple> sorted(chunk.begin(), chunk.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  const auto tokens = tokenize(sorted);
  const std::size_t n = tokens.size();
  const std::uint64_t reference_hash = content_hash(reference);

  std::vector<double> ref_gammas;
  try {
    ref_gammas = gammas(reference, tokens);
  } catch (const NumericalError& e) {
    abort_step(ctx, target, e.what());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(ctx.seed);
  rng.shuffle(std::span(order));  // epoch 0 order

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<TokenizedTriple> epoch_tokens(n);
  std::vector<double> epoch_ref(n);
  auto arrange = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      epoch_tokens[i] = tokens[order[i]];
      epoch_ref[i] = ref_gammas[order[i]];
    }
  };

  StepReport report;
  report.step = ctx.step;
  report.chunk_id = ctx.chunk_id;

  Optimizer optimizer(config.optimizer, config.learning_rate, target.theta.size());
  Eigen::VectorXd grad(target.theta.size());
  std::int64_t batch_index = 0;

  if (config.epochs == 0) {
    arrange();
    const std::size_t end = std::min(n, batch);
    try {
      report.first_batch_loss = dpo_loss_and_gradient(target, std::span(epoch_tokens).first(end),
                                                      std::span(epoch_ref).first(end), config.beta, grad);
    } catch (const NumericalError& e) {
      abort_step(ctx, target, e.what());
    }
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) rng.shuffle(std::span(order));
    arrange();
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t len = std::min(n, start + batch) - start;
      double loss = 0.0;
      try {
        loss = dpo_loss_and_gradient(target, std::span(epoch_tokens).subspan(start, len),
                                     std::span(epoch_ref).subspan(start, len), config.beta, grad);
      } catch (const NumericalError& e) {
        abort_step(ctx, target, e.what());
      }
      if (!grad.allFinite()) abort_step(ctx, target, "non-finite gradient at batch " + std::to_string(batch_index));
      if (batch_index == 0) report.first_batch_loss = loss;
      ledger.losses.push_back(LossPoint{ctx.step, ctx.chunk_id, batch_index, loss});
      report.samples_seen += len;

      const Eigen::VectorXd last_good = target.theta;
      optimizer.step(target.theta, grad);
      if (!target.theta.allFinite()) {
        PolicyModel previous = target;
        previous.theta = last_good;
        abort_step(ctx, previous, "non-finite parameters after batch " + std::to_string(batch_index));
      }
      if (ctx.verify_reference_freeze && content_hash(reference) != reference_hash) {
        throw Error("reference model changed during step " + std::to_string(ctx.step));
      }
    }
  }

  std::vector<double> target_gammas;
  try {
    target_gammas = gammas(target, tokens);
  } catch (const NumericalError& e) {
    abort_step(ctx, target, e.what());
  }
  double loss_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss_total += dpo_sample_loss(target_gammas[i] - ref_gammas[i], config.beta);
  report.final_train_loss = loss_total / static_cast<double>(n);
  report.mean_gamma_ref_chunk = mean_of(ref_gammas);
  report.mean_gamma_target_chunk = mean_of(target_gammas);

  const auto eval_tokens = eval_set.empty() ? tokens : tokenize(eval_set);
  const auto eval_ref = gammas(reference, eval_tokens);
  const auto eval_target = gammas(target, eval_tokens);
  report.mean_gamma_ref_holdout = mean_of(eval_ref);
  report.mean_gamma_target_holdout = mean_of(eval_target);
  std::size_t wins = 0;
  for (double g : eval_target) wins += g > 0.0 ? 1 : 0;
  report.reward_accuracy_holdout = static_cast<double>(wins) / static_cast<double>(eval_target.size());

  if (content_hash(reference) != reference_hash) {
    throw Error("reference model changed during step " + std::to_string(ctx.step));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ledger.steps.push_back(std::move(report));
  return target;
}

}  // namespace

DpoResult run_dpo(const PolicyModel& base, std::span<const PreferenceTriple> dataset, const DpoConfig& config,
                  std::span<const PreferenceTriple> holdout, const std::filesystem::path& snapshot_dir) {
  if (dataset.empty()) throw DomainError("dpo dataset must be non-empty");
  config.validate();
  StepContext ctx;
  ctx.step = 1;
  ctx.chunk_id = "all";
  ctx.seed = step_seed(config.seed, 1);
  ctx.snapshot_dir = snapshot_dir;
  DpoResult result;
  result.model = train_chunk(base, base, dataset, holdout, config, ctx, result.ledger);
  return result;
}

SdpoResult run_sdpo(const PolicyModel& base, const SdpoConfig& config) {
  config.dpo.validate();
  const auto& chunks = config.chunk_plan.chunks;
  if (chunks.empty()) throw ConfigError("chunk plan has no chunks");
  for (const auto& c : chunks) {
    if (c.triples.empty()) throw ConfigError("chunk " + c.id + " has no triples");
  }

  SdpoResult result;
  result.snapshots.push_back(StepSnapshot{0, base, "", config.config_hash});
  if (!config.snapshot_dir.empty()) snapshot_store(config.snapshot_dir, result.snapshots.back());

  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto t = static_cast<std::int64_t>(i + 1);
    const PolicyModel reference = result.snapshots.back().model;
    const PolicyModel& init = config.target_init == TargetInit::previous ? reference : base;

    StepContext ctx;
    ctx.step = t;
    ctx.chunk_id = chunks[i].id;
    ctx.seed = step_seed(config.dpo.seed, t);
    ctx.snapshot_dir = config.snapshot_dir;
    ctx.config_hash = config.config_hash;
    ctx.verify_reference_freeze = config.verify_reference_freeze;

    PolicyModel trained = train_chunk(init, reference, chunks[i].triples, config.holdout, config.dpo, ctx,
                                      result.ledger);
    result.snapshots.push_back(StepSnapshot{t, std::move(trained), chunks[i].id, config.config_hash});
    if (!config.snapshot_dir.empty()) snapshot_store(config.snapshot_dir, result.snapshots.back());
  }
  result.model = result.snapshots.back().model;
  return result;
}

}  // namespace sdpo
