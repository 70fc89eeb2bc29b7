#include "sdpo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"
#include "sdpo/dpo.hpp"
#include "sdpo/errors.hpp"
#include "sdpo/hash.hpp"
#include "sdpo/rng.hpp"

namespace sdpo {

TokenizedTriple tokenize(const PreferenceTriple& t, const Vocabulary& vocab) {
  try {
    return {t.id, vocab.encode(t.prompt), vocab.encode(t.chosen), vocab.encode(t.rejected)};
  } catch (const EncodingError& e) {
    throw EncodingError("triple " + t.id + ": " + e.what());
  }
}

std::vector<TokenizedTriple> tokenize(std::span<const PreferenceTriple> triples, const Vocabulary& vocab) {
  std::vector<TokenizedTriple> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(tokenize(t, vocab));
  return out;
}

std::vector<PreferenceTriple> pool(std::span<const DatasetSource> sources) {
  std::vector<PreferenceTriple> out;
  for (const auto& s : sources) out.insert(out.end(), s.triples.begin(), s.triples.end());
  return out;
}

std::vector<std::string> degenerate_ids(std::span<const PreferenceTriple> triples) {
  std::vector<std::string> out;
  for (const auto& t : triples) {
    if (t.degenerate()) out.push_back(t.id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::vector<DatasetSource> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  const std::string stem = path.stem().string();
  const std::string file = path.filename().string();
  std::vector<DatasetSource> sources;
  std::map<std::string, std::size_t> source_index;
  std::set<std::string> ids;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(file + ":" + std::to_string(line_no) + ": " + why, line_no);
    };
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("expected a JSON object");

    auto field = [&](const char* key, bool required) -> std::optional<std::string> {
      const auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) throw fail(std::string("missing field \"") + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string()) throw fail(std::string("field \"") + key + "\" must be a string");
      return it->get<std::string>();
    };

    PreferenceTriple t;
    t.prompt = *field("prompt", true);
    t.chosen = *field("chosen", true);
    t.rejected = *field("rejected", true);
    t.source = field("source", false).value_or(stem);
    t.id = field("id", false).value_or(file + ":" + std::to_string(line_no));
    if (t.chosen.empty() || t.rejected.empty()) throw fail("chosen and rejected must be non-empty");
    if (!ids.insert(t.id).second) throw fail("duplicate id \"" + t.id + "\"");

    auto [it, inserted] = source_index.try_emplace(t.source, sources.size());
    if (inserted) sources.push_back(DatasetSource{t.source, {}, std::nullopt});
    sources[it->second].triples.push_back(std::move(t));
  }
  if (in.bad()) throw IoError("error reading " + path.string());
  if (sources.empty()) throw DomainError(path.string() + " contains no preference triples");
  return sources;
}

void write_jsonl(const std::filesystem::path& path, std::span<const PreferenceTriple> triples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& t : triples) {
    nlohmann::ordered_json obj;
    obj["id"] = t.id;
    obj["prompt"] = t.prompt;
    obj["chosen"] = t.chosen;
    obj["rejected"] = t.rejected;
    obj["source"] = t.source;
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("error writing " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (num_sources < 1) throw ConfigError("num_sources must be >= 1");
  if (triples_per_source < 1) throw ConfigError("triples_per_source must be >= 1");
  if (min_length < 2 || max_length > 26 || min_length > max_length) {
    throw ConfigError("prompt lengths must satisfy 2 <= min_length <= max_length <= 26");
  }
  if (!swaps.empty() && swaps.size() != static_cast<std::size_t>(num_sources)) {
    throw ConfigError("swaps ladder needs one entry per source");
  }
  for (int m : swaps) {
    if (m < 1 || 2 * m > min_length) {
      throw ConfigError("each swap count must satisfy 1 <= m <= min_length / 2, got " + std::to_string(m));
    }
  }
}

std::vector<int> SyntheticSpec::resolved_swaps() const {
  if (!swaps.empty()) return swaps;
  std::vector<int> out;
  for (int i = 0; i < num_sources; ++i) {
    const int shift = std::min(num_sources - 1 - i, 20);
    out.push_back(std::min(1 << shift, min_length / 2));
  }
  return out;
}

std::string synthetic_source_name(int index, int num_sources) {
  static const char* kThree[] = {"easy", "medium", "hard"};
  if (num_sources == 3) return kThree[index];
  return "level" + std::to_string(index);
}

std::vector<DatasetSource> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto ladder = spec.resolved_swaps();
  std::vector<DatasetSource> sources;
  for (int s = 0; s < spec.num_sources; ++s) {
    DatasetSource src;
    src.name = synthetic_source_name(s, spec.num_sources);
    src.declared_difficulty = spec.num_sources == 1 ? 0.0 : double(s) / double(spec.num_sources - 1);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(s)));
    const int swaps = ladder[static_cast<std::size_t>(s)];

    for (int j = 0; j < spec.triples_per_source; ++j) {
      const auto span_len = static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1);
      const auto len = static_cast<std::size_t>(spec.min_length) + static_cast<std::size_t>(rng.below(span_len));
      std::string letters = "abcdefghijklmnopqrstuvwxyz";
      rng.shuffle(std::span(letters));
      PreferenceTriple t;
      t.prompt = letters.substr(0, len);
      t.chosen = t.prompt;
      std::sort(t.chosen.begin(), t.chosen.end());

      std::vector<std::size_t> positions(len);
      std::iota(positions.begin(), positions.end(), std::size_t{0});
      rng.shuffle(std::span(positions));
      t.rejected = t.chosen;
      for (int m = 0; m < swaps; ++m) {
        std::swap(t.rejected[positions[2 * static_cast<std::size_t>(m)]],
                  t.rejected[positions[2 * static_cast<std::size_t>(m) + 1]]);
      }
      t.id = src.name + "-" + std::to_string(j);
      t.source = src.name;
      src.triples.push_back(std::move(t));
    }
    sources.push_back(std::move(src));
  }
  return sources;
}

// ---------------------------------------------------------------------------
// Chunk plans

std::string to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::easy_to_hard: return "easy_to_hard";
    case PartitionStrategy::random: return "random";
    case PartitionStrategy::single: return "single";
  }
  return "?";
}

PartitionStrategy parse_partition_strategy(const std::string& s) {
  if (s == "easy_to_hard") return PartitionStrategy::easy_to_hard;
  if (s == "random") return PartitionStrategy::random;
  if (s == "single") return PartitionStrategy::single;
  throw ConfigError("unknown partition strategy \"" + s + "\"");
}

std::size_t ChunkPlan::triple_count() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c.triples.size();
  return n;
}

namespace {

void require_sources(std::span<const DatasetSource> sources) {
  if (sources.empty()) throw DomainError("at least one dataset source is required");
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (s.triples.empty()) throw DomainError("dataset source \"" + s.name + "\" is empty");
    if (!names.insert(s.name).second) throw DomainError("duplicate source name \"" + s.name + "\"");
  }
}

}  // namespace

ChunkPlan order_by_accuracy(std::span<const DatasetSource> sources, std::span<const double> accuracies) {
  require_sources(sources);
  if (accuracies.size() != sources.size()) throw DomainError("one accuracy per source required");
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (accuracies[a] != accuracies[b]) return accuracies[a] > accuracies[b];
    return sources[a].name < sources[b].name;
  });
  ChunkPlan plan;
  plan.strategy = PartitionStrategy::easy_to_hard;
  for (std::size_t i : order) {
    plan.chunks.push_back(Chunk{sources[i].name, {sources[i].name}, accuracies[i], sources[i].triples});
  }
  return plan;
}

ChunkPlan partition_easy_to_hard(std::span<const DatasetSource> sources, const PolicyModel& scorer) {
  require_sources(sources);
  std::vector<double> accuracies;
  for (const auto& s : sources) accuracies.push_back(reward_accuracy(scorer, std::span<const PreferenceTriple>(s.triples)));
  return order_by_accuracy(sources, accuracies);
}

ChunkPlan partition_random(std::span<const DatasetSource> sources, int chunks, std::uint64_t seed) {
  require_sources(sources);
  if (chunks < 1) throw DomainError("random partition needs T >= 1");
  auto triples = pool(sources);
  if (static_cast<std::size_t>(chunks) > triples.size()) {
    throw DomainError("T = " + std::to_string(chunks) + " exceeds the " + std::to_string(triples.size()) +
                      " available triples");
  }
  Rng rng(seed);
  rng.shuffle(std::span(triples));

  ChunkPlan plan;
  plan.strategy = PartitionStrategy::random;
  plan.seed = seed;
  const std::size_t T = static_cast<std::size_t>(chunks);
  const std::size_t base = triples.size() / T, extra = triples.size() % T;
  std::size_t next = 0;
  for (std::size_t t = 0; t < T; ++t) {
    Chunk c;
    c.id = "random_" + std::to_string(t + 1);
    const std::size_t size = base + (t < extra ? 1 : 0);
    std::set<std::string> names;
    for (std::size_t i = 0; i < size; ++i, ++next) {
      names.insert(triples[next].source);
      c.triples.push_back(std::move(triples[next]));
    }
    c.sources.assign(names.begin(), names.end());
    plan.chunks.push_back(std::move(c));
  }
  return plan;
}

ChunkPlan partition_single(std::span<const DatasetSource> sources) {
  require_sources(sources);
  Chunk c;
  c.id = "all";
  for (const auto& s : sources) c.sources.push_back(s.name);
  c.triples = pool(sources);
  ChunkPlan plan;
  plan.strategy = PartitionStrategy::single;
  plan.chunks.push_back(std::move(c));
  return plan;
}

std::string chunk_plan_to_json(const ChunkPlan& plan) {
  nlohmann::ordered_json out;
  out["strategy"] = to_string(plan.strategy);
  out["seed"] = plan.seed;
  out["chunks"] = nlohmann::ordered_json::array();
  for (const auto& c : plan.chunks) {
    nlohmann::ordered_json chunk;
    chunk["id"] = c.id;
    chunk["sources"] = c.sources;
    chunk["reward_accuracy"] = c.reward_accuracy ? nlohmann::ordered_json(*c.reward_accuracy) : nullptr;
    chunk["size"] = c.triples.size();
    auto members = nlohmann::ordered_json::array();
    for (const auto& t : c.triples) members.push_back(t.id);
    chunk["members"] = std::move(members);
    out["chunks"].push_back(std::move(chunk));
  }
  return out.dump(2);
}

// ---------------------------------------------------------------------------
// Holdout split

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0) || !(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::abs(train_fraction + holdout_fraction - 1.0) > 1e-9) {
    throw ConfigError("train_fraction + holdout_fraction must equal 1");
  }
}

SplitResult split_holdout(std::span<const DatasetSource> sources, const SplitSpec& spec) {
  spec.validate();
  require_sources(sources);
  SplitResult result;
  for (const auto& src : sources) {
    const std::size_t n = src.triples.size();
    if (n < 2) throw DomainError("source \"" + src.name + "\" needs at least 2 triples to split");
    const auto held = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.holdout_fraction));
    if (held == 0 || held == n) {
      throw DomainError("holdout fraction " + std::to_string(spec.holdout_fraction) + " leaves source \"" +
                        src.name + "\" with an empty side");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(spec.seed, fnv1a64(src.name)));
    rng.shuffle(std::span(order));
    std::vector<bool> is_holdout(n, false);
    for (std::size_t i = 0; i < held; ++i) is_holdout[order[i]] = true;

    DatasetSource train{src.name, {}, src.declared_difficulty};
    for (std::size_t i = 0; i < n; ++i) {
      (is_holdout[i] ? result.holdout : train.triples).push_back(src.triples[i]);
    }
    result.train.push_back(std::move(train));
  }
  return result;
}

}  // namespace sdpo
