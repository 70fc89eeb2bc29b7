#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sdpo/data.hpp"
#include "sdpo/dpo.hpp"
#include "sdpo/snapshot.hpp"
#include "sdpo/trainer.hpp"

namespace sdpo {

struct GammaSweepRow {
  std::int64_t step = 0;
  std::string chunk_id;
  double mean_gamma = 0.0;
  double std_gamma = 0.0;  // population standard deviation
  double reward_accuracy = 0.0;
};

/// Evaluates every snapshot on the same dataset, in snapshot order.
std::vector<GammaSweepRow> gamma_sweep(std::span<const StepSnapshot> snapshots,
                                       std::span<const PreferenceTriple> dataset);

enum class Arm { dpo, sdpo_easy_to_hard, sdpo_random, sft_only };

inline constexpr Arm kAllArms[] = {Arm::dpo, Arm::sdpo_easy_to_hard, Arm::sdpo_random, Arm::sft_only};

std::string to_string(Arm arm);

struct ArmResult {
  Arm arm = Arm::dpo;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double holdout_reward_accuracy = 0.0;
  double holdout_mean_gamma = 0.0;
};

struct ArmSummary {
  Arm arm = Arm::dpo;
  std::size_t succeeded = 0;
  double median_reward_accuracy = 0.0;
  double median_mean_gamma = 0.0;
};

struct ComparisonReport {
  std::vector<std::uint64_t> seeds;
  /// Row order: seed-major, arms in kAllArms order.
  std::vector<ArmResult> rows;
  std::vector<ArmSummary> medians;  // kAllArms order
  /// Holdout ids every arm was scored on.
  std::vector<std::string> holdout_ids;

  const ArmSummary& summary(Arm arm) const;
};

/// Runs dpo, sDPO with easy-to-hard chunks, sDPO with random chunks
/// (T = number of sources) and the untrained base on identical data, once per
/// seed. The seed sets the DPO shuffle seed and the random-partition seed.
/// An arm that throws is marked failed; the others still run.
ComparisonReport compare_arms(const PolicyModel& base, std::span<const DatasetSource> train,
                              std::span<const PreferenceTriple> holdout, const DpoConfig& dpo,
                              std::span<const std::uint64_t> seeds);

/// Median of a non-empty list (mean of the middle pair for even sizes).
double median(std::vector<double> values);

/// "easy_to_hard >= random: true" and the other arm-order claims.
std::vector<std::string> verdict_lines(const ComparisonReport& report);

/// Median block followed by verdict lines, as printed by the CLI.
std::string comparison_summary(const ComparisonReport& report);

// ---------------------------------------------------------------------------
// CSV export. RFC 4180: CRLF line ends, fields quoted when they contain
// commas, quotes or line breaks. Floats use 17 significant digits.
//
//   ledger.csv      step,chunk_id,batch,loss
//   report.csv      step,chunk_id,mean_gamma_ref,mean_gamma_target,reward_acc,
//                   first_batch_loss,final_train_loss
//   comparison.csv  arm,seed,holdout_reward_acc,holdout_mean_gamma
//                   (failed arms leave both metrics empty)
//   gamma_sweep.csv step,chunk_id,mean_gamma,std_gamma,reward_acc

std::string format_double(double v);
double parse_double(const std::string& text);

void emit_ledger_csv(const RunLedger& ledger, const std::filesystem::path& path);
void emit_report_csv(const RunLedger& ledger, const std::filesystem::path& path);
void emit_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path);
void emit_gamma_sweep_csv(std::span<const GammaSweepRow> rows, const std::filesystem::path& path);

/// Parses an RFC 4180 file into rows of fields (header included).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace sdpo
