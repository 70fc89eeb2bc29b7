#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sdpo/data.hpp"
#include "sdpo/dpo.hpp"
#include "sdpo/policy.hpp"
#include "sdpo/snapshot.hpp"

namespace sdpo {

/// Per-step metrics. "holdout" fields are measured on the evaluation set
/// passed to the trainer (the training chunk itself when none is given);
/// "chunk" fields on the step's own training chunk after training.
struct StepReport {
  std::int64_t step = 0;
  std::string chunk_id;
  double mean_gamma_ref_holdout = 0.0;
  double mean_gamma_target_holdout = 0.0;
  double reward_accuracy_holdout = 0.0;
  double final_train_loss = 0.0;  // dpo_loss over the whole chunk after training
  double first_batch_loss = 0.0;  // loss of the first batch at the step's initial parameters
  double mean_gamma_ref_chunk = 0.0;
  double mean_gamma_target_chunk = 0.0;
  std::size_t samples_seen = 0;
  double wall_seconds = 0.0;
};

/// Loss of one optimizer step, measured before the update.
struct LossPoint {
  std::int64_t step = 0;
  std::string chunk_id;
  std::int64_t batch = 0;
  double loss = 0.0;
};

struct RunLedger {
  std::vector<StepReport> steps;
  std::vector<LossPoint> losses;
};

enum class TargetInit { previous, sft_base };

std::string to_string(TargetInit t);
TargetInit parse_target_init(const std::string& s);

struct SdpoConfig {
  DpoConfig dpo;
  TargetInit target_init = TargetInit::previous;
  ChunkPlan chunk_plan;
  std::vector<PreferenceTriple> holdout;
  /// Where M_0..M_T are stored; nothing is written when empty.
  std::filesystem::path snapshot_dir;
  /// Stamped on every snapshot.
  std::string config_hash;
  /// Re-hash the reference after every optimizer step and fail on change.
  bool verify_reference_freeze = false;
};

struct DpoResult {
  PolicyModel model;
  RunLedger ledger;
};

struct SdpoResult {
  PolicyModel model;
  RunLedger ledger;
  std::vector<StepSnapshot> snapshots;
};

/// Conventional DPO: reference frozen at `base`, target initialized at
/// `base`, one pass of `config.epochs` over `dataset`. Recorded as step 1
/// with chunk id "all".
///
/// Batches are drawn from the dataset sorted by id and reshuffled each epoch
/// by Rng(config.seed), so training depends on the set of triples and the
/// seed, not on input order. On a non-finite loss the pre-update parameters
/// are written to `snapshot_dir` (if set) and TrainingAborted is thrown.
DpoResult run_dpo(const PolicyModel& base, std::span<const PreferenceTriple> dataset, const DpoConfig& config,
                  std::span<const PreferenceTriple> holdout = {},
                  const std::filesystem::path& snapshot_dir = {});

/// Stepwise DPO over config.chunk_plan. For t = 1..T the reference is a
/// frozen copy of M_{t-1}, the target starts from M_{t-1} (or from `base`
/// under TargetInit::sft_base) and trains on chunk t only; optimizer state is
/// reset at each step. Step t shuffles with a seed derived from
/// (config.dpo.seed, t), equal to config.dpo.seed for t = 1, so a
/// single-chunk run reproduces run_dpo exactly.
///
/// Throws ConfigError before training if any chunk is empty.
SdpoResult run_sdpo(const PolicyModel& base, const SdpoConfig& config);

/// Seed used by step t (1-based).
std::uint64_t step_seed(std::uint64_t seed, std::int64_t step);

}  // namespace sdpo
