#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdpo/data.hpp"
#include "sdpo/diagnostics.hpp"
#include "sdpo/dpo.hpp"
#include "sdpo/policy.hpp"
#include "sdpo/trainer.hpp"

namespace sdpo {

enum class RunMode { dpo, sdpo };

struct PartitionConfig {
  PartitionStrategy strategy = PartitionStrategy::easy_to_hard;
  int chunks = 0;  // random only; 0 = number of training sources
  std::uint64_t seed = 1;
};

/// Fully resolved experiment configuration. Every field is explicit after
/// parse_run_config, so the JSON form is hash-stable.
struct RunConfig {
  std::uint64_t seed = 1;
  std::optional<SyntheticSpec> synthetic;
  std::vector<std::filesystem::path> jsonl;
  SplitSpec split;
  Architecture arch;
  std::optional<std::filesystem::path> base_snapshot;
  SftConfig sft;
  DpoConfig dpo;
  RunMode mode = RunMode::sdpo;
  PartitionConfig partition;
  TargetInit target_init = TargetInit::previous;
  std::filesystem::path output_dir;
};

/// The configuration used by the default synthetic experiment: 3 sources of
/// 500 triples, 80/20 split, k=8, d=16, h=64, every seed set to `seed`.
RunConfig default_run_config(std::uint64_t seed);

/// Strict parse: unknown keys at any level throw ConfigError. Missing keys
/// take the defaults of default_run_config; nested seeds default to the
/// top-level "seed". Relative data/snapshot paths resolve against `base_dir`.
/// A run record (the config.json written into a run directory) is accepted
/// and its "config" member parsed.
RunConfig parse_run_config(const nlohmann::json& json, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

nlohmann::ordered_json to_json(const RunConfig& config);
/// Hash of the resolved configuration excluding output_dir.
std::string config_hash(const RunConfig& config);

/// Data split and SFT base model of an experiment.
struct PreparedExperiment {
  std::vector<DatasetSource> train;
  std::vector<PreferenceTriple> holdout;
  PolicyModel base;
};

/// Loads or generates data, splits it and produces S (SFT from a fresh
/// init, or the configured base snapshot). Performs no file writes.
PreparedExperiment prepare_experiment(const RunConfig& config);

ChunkPlan make_chunk_plan(const RunConfig& config, const PreparedExperiment& prepared);

struct RunOutcome {
  std::filesystem::path out_dir;
  std::string config_hash;
  std::vector<StepSnapshot> snapshots;
  std::vector<std::string> snapshot_hashes;
  RunLedger ledger;
};

/// Full pipeline into `out_dir`: config.json, chunk_plan.json,
/// snapshots/step_<t>_<hash>.bin, ledger.csv, report.csv, gamma_sweep.csv.
/// All validation and data loading happens before the directory is
/// created; an existing non-empty directory is refused unless `force`.
RunOutcome execute_run(const RunConfig& config, const std::filesystem::path& out_dir, bool force);

/// Four-arm comparison over seeds config.seed, config.seed+1, ...; writes
/// comparison.csv and summary.txt into `out_dir`.
ComparisonReport execute_compare(const RunConfig& config, int seeds, const std::filesystem::path& out_dir,
                                 bool force);

/// Writes one "<source>.jsonl" per synthetic source into `out_dir`. Refuses
/// to overwrite existing files unless `force`.
std::vector<std::filesystem::path> generate_data_files(const SyntheticSpec& spec,
                                                       const std::filesystem::path& out_dir, bool force);

}  // namespace sdpo
