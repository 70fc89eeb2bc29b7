// sdpo-lab: batch entry point for the DPO / stepwise-DPO experiments.
//
//   sdpo-lab generate-data --out DIR [--sources N] [--per-source M] [--seed S] [--force]
//   sdpo-lab run --config PATH [--out DIR] [--seed S] [--force]
//   sdpo-lab compare --config PATH [--seeds K] [--out DIR] [--seed S] [--force]
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime abort.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdpo/errors.hpp"
#include "sdpo/experiment.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kAbort = 3;

int cmd_generate(const sdpo::SyntheticSpec& spec, const std::filesystem::path& out, bool force) {
  const auto paths = sdpo::generate_data_files(spec, out, force);
  const auto ladder = spec.resolved_swaps();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const double difficulty = spec.num_sources == 1 ? 0.0 : double(i) / double(spec.num_sources - 1);
    std::cout << paths[i].string() << " source=" << sdpo::synthetic_source_name(static_cast<int>(i), spec.num_sources)
              << " swaps=" << ladder[i] << " declared_difficulty=" << difficulty << "\n";
  }
  return 0;
}

sdpo::RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed,
                            const std::string& out) {
  sdpo::RunConfig config = sdpo::load_run_config(path, seed);
  if (!out.empty()) config.output_dir = out;
  return config;
}

int cmd_run(const sdpo::RunConfig& config, bool force) {
  const auto outcome = sdpo::execute_run(config, config.output_dir, force);
  std::cout << "run directory: " << outcome.out_dir.string() << "\nconfig hash: " << outcome.config_hash << "\n";
  for (std::size_t i = 0; i < outcome.snapshots.size(); ++i) {
    std::cout << "step " << outcome.snapshots[i].step << " " << outcome.snapshot_hashes[i] << "\n";
  }
  return 0;
}

int cmd_compare(const sdpo::RunConfig& config, int seeds, bool force) {
  const auto report = sdpo::execute_compare(config, seeds, config.output_dir, force);
  for (const auto& row : report.rows) {
    if (row.failed) std::cerr << sdpo::to_string(row.arm) << " seed " << row.seed << " failed: " << row.error << "\n";
  }
  std::cout << sdpo::comparison_summary(report);
  for (std::uint64_t seed : report.seeds) {
    bool any = false;
    for (const auto& row : report.rows) any = any || (row.seed == seed && !row.failed);
    if (!any) return kAbort;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-optimization lab: DPO and stepwise DPO on a small character policy"};
  app.require_subcommand(1);

  sdpo::SyntheticSpec spec;
  std::string gen_out;
  bool gen_force = false;
  auto* gen = app.add_subcommand("generate-data", "Write synthetic preference sources as JSONL");
  gen->add_option("--sources", spec.num_sources, "Number of sources")->check(CLI::PositiveNumber);
  gen->add_option("--per-source", spec.triples_per_source, "Triples per source")->check(CLI::PositiveNumber);
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--swaps", spec.swaps, "Swap count per source, easiest first")->delimiter(',');
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--force", gen_force, "Overwrite existing files");

  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  int seeds = 1;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--out", out, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", seed, "Override the top-level seed");
    cmd->add_flag("--force", force, "Write into a non-empty output directory");
  };
  auto* run = app.add_subcommand("run", "SFT, partition, train and export diagnostics");
  add_common(run);
  auto* compare = app.add_subcommand("compare", "Four-arm comparison: dpo, sdpo easy-to-hard, sdpo random, sft only");
  add_common(compare);
  compare->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(spec, gen_out, gen_force);
    const auto config = load_config(config_path, seed, out);
    if (*run) return cmd_run(config, force);
    return cmd_compare(config, seeds, force);
  } catch (const sdpo::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.last_good().empty()) std::cerr << "last good snapshot: " << e.last_good().string() << "\n";
    return kAbort;
  } catch (const sdpo::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAbort;
  } catch (const sdpo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAbort;
  }
}
