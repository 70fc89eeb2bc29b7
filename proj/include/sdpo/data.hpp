#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdpo/vocabulary.hpp"

namespace sdpo {

struct PolicyModel;

/// One (prompt, chosen, rejected) preference record.
struct PreferenceTriple {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string source;

  /// chosen == rejected. Such triples are kept; they score γ = 0.
  bool degenerate() const { return chosen == rejected; }
  bool operator==(const PreferenceTriple&) const = default;
};

struct DatasetSource {
  std::string name;
  std::vector<PreferenceTriple> triples;
  std::optional<double> declared_difficulty;
};

/// A triple encoded against a vocabulary, ready for scoring.
struct TokenizedTriple {
  std::string id;
  std::vector<Token> prompt;
  std::vector<Token> chosen;
  std::vector<Token> rejected;
};

TokenizedTriple tokenize(const PreferenceTriple& triple, const Vocabulary& vocab = Vocabulary::standard());
std::vector<TokenizedTriple> tokenize(std::span<const PreferenceTriple> triples,
                                      const Vocabulary& vocab = Vocabulary::standard());

/// All triples of the given sources, in source order.
std::vector<PreferenceTriple> pool(std::span<const DatasetSource> sources);

/// Ids of degenerate (chosen == rejected) triples.
std::vector<std::string> degenerate_ids(std::span<const PreferenceTriple> triples);

// ---------------------------------------------------------------------------
// JSONL

/// Reads one preference object per line: required string fields "prompt",
/// "chosen", "rejected"; optional "source" (default: the file stem) and "id"
/// (default: "<file name>:<line>"). Other fields are ignored; blank lines are
/// skipped. Sources are returned in order of first appearance.
///
/// Throws ParseError naming the line for malformed lines, missing fields,
/// empty responses or duplicate ids, DomainError for a file with no triples
/// and IoError when the file cannot be read.
std::vector<DatasetSource> load_jsonl(const std::filesystem::path& path);

/// Writes one line per triple with keys id, prompt, chosen, rejected, source.
void write_jsonl(const std::filesystem::path& path, std::span<const PreferenceTriple> triples);

// ---------------------------------------------------------------------------
// Synthetic "sort the characters" task

struct SyntheticSpec {
  int num_sources = 3;
  int triples_per_source = 500;
  /// Swaps applied to the chosen response to build the rejected one, one
  /// entry per source. Empty selects the default ladder.
  std::vector<int> swaps;
  int min_length = 10;
  int max_length = 14;
  std::uint64_t seed = 1;

  void validate() const;
  /// swaps when given, otherwise min(2^(N-1-i), min_length/2) for source i.
  std::vector<int> resolved_swaps() const;
};

/// Source name for position i of an N-source ladder: "easy", "medium",
/// "hard" when N = 3, "level<i>" otherwise.
std::string synthetic_source_name(int index, int num_sources);

/// Prompt: distinct random lowercase letters. Chosen: the prompt sorted.
/// Rejected: chosen with m disjoint position pairs swapped, so it differs in
/// exactly 2m positions; source i uses m = resolved_swaps()[i]. Declared
/// difficulty of source i is i / (N - 1) (0 for N = 1).
std::vector<DatasetSource> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Chunk plans

enum class PartitionStrategy { easy_to_hard, random, single };

std::string to_string(PartitionStrategy s);
PartitionStrategy parse_partition_strategy(const std::string& s);

struct Chunk {
  std::string id;
  std::vector<std::string> sources;
  /// Scorer reward accuracy; set for easy_to_hard chunks only.
  std::optional<double> reward_accuracy;
  std::vector<PreferenceTriple> triples;
};

struct ChunkPlan {
  PartitionStrategy strategy = PartitionStrategy::single;
  std::uint64_t seed = 0;  // random strategy only
  std::vector<Chunk> chunks;

  std::size_t triple_count() const;
};

/// One chunk per source, ordered by reward_accuracy(scorer, source)
/// descending, ties broken by source name ascending. Chunk ids equal source
/// names.
ChunkPlan partition_easy_to_hard(std::span<const DatasetSource> sources, const PolicyModel& scorer);

/// Ordering step of partition_easy_to_hard, exposed for precomputed scores.
ChunkPlan order_by_accuracy(std::span<const DatasetSource> sources, std::span<const double> accuracies);

/// Pools every triple, shuffles with Rng(seed) and deals T contiguous chunks
/// whose sizes differ by at most one (larger chunks first). Ids "random_<t>".
ChunkPlan partition_random(std::span<const DatasetSource> sources, int chunks, std::uint64_t seed);

/// Everything in one chunk with id "all".
ChunkPlan partition_single(std::span<const DatasetSource> sources);

/// JSON text: {"strategy", "seed", "chunks": [{"id", "sources",
/// "reward_accuracy" (number or null), "size", "members": [ids]}]}.
std::string chunk_plan_to_json(const ChunkPlan& plan);

// ---------------------------------------------------------------------------
// Holdout split

struct SplitSpec {
  double train_fraction = 0.8;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SplitResult {
  std::vector<DatasetSource> train;
  std::vector<PreferenceTriple> holdout;
};

/// Per-source stratified split. Each source contributes
/// round(n · holdout_fraction) holdout triples chosen by a shuffle seeded
/// from (seed, source name); both sides keep the original relative order.
/// Throws DomainError when a source has < 2 triples or a side would be empty.
SplitResult split_holdout(std::span<const DatasetSource> sources, const SplitSpec& spec);

}  // namespace sdpo
