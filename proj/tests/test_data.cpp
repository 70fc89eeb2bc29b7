#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "oracle.hpp"
#include "sdpo/data.hpp"
#include "sdpo/dpo.hpp"
#include "sdpo/errors.hpp"
#include "sdpo/policy.hpp"
#include "temp_dir.hpp"

using namespace sdpo;
using testing_support::TempDir;

namespace {

int differing_positions(const std::string& a, const std::string& b) {
  int n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

DatasetSource make_source(const std::string& name, int n) {
  DatasetSource s{name, {}, std::nullopt};
  for (int i = 0; i < n; ++i) {
    s.triples.push_back({name + "-" + std::to_string(i), "cab", "abc", "bac", name});
  }
  return s;
}

std::vector<std::string> chunk_ids(const ChunkPlan& plan) {
  std::vector<std::string> ids;
  for (const auto& c : plan.chunks) ids.push_back(c.id);
  return ids;
}

double oracle_accuracy(const PolicyModel& m, const DatasetSource& s) {
  const auto th = oracle::widen(m.theta);
  int wins = 0;
  for (const auto& t : s.triples) {
    const auto tok = tokenize(t);
    const oracle::Triple o{{tok.prompt.begin(), tok.prompt.end()},
                           {tok.chosen.begin(), tok.chosen.end()},
                           {tok.rejected.begin(), tok.rejected.end()}};
    wins += oracle::gamma(th, m.arch, o) > 0;
  }
  return static_cast<double>(wins) / static_cast<double>(s.triples.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// JSONL

TEST_CASE("load_jsonl groups by source in order of first appearance") {
  TempDir dir;
  const auto p = dir.write("prefs.jsonl",
                           R"({"id":"a1","prompt":"p","chosen":"ab","rejected":"ba","source":"beta"})"
                           "\n"
                           R"({"id":"a2","prompt":"p","chosen":"ab","rejected":"ab","source":"alpha"})"
                           "\r\n\n"
                           R"({"id":"a3","prompt":"q","chosen":"x","rejected":"y","source":"beta","extra":5})"
                           "\n");
  const auto sources = load_jsonl(p);
  REQUIRE(sources.size() == 2);
  CHECK(sources[0].name == "beta");
  CHECK(sources[0].triples.size() == 2);
  CHECK(sources[1].name == "alpha");
  CHECK(sources[1].triples[0].degenerate());
  const auto all = pool(sources);
  CHECK(degenerate_ids(all) == std::vector<std::string>{"a2"});
}

TEST_CASE("load_jsonl defaults source and id") {
  TempDir dir;
  const auto p = dir.write("stem.jsonl", R"({"prompt":"p","chosen":"a","rejected":"b"})" "\n"
                                         R"({"prompt":"p","chosen":"c","rejected":"b"})" "\n");
  const auto sources = load_jsonl(p);
  REQUIRE(sources.size() == 1);
  CHECK(sources[0].name == "stem");
  CHECK(sources[0].triples[0].id == "stem.jsonl:1");
  CHECK(sources[0].triples[1].id == "stem.jsonl:2");
}

TEST_CASE("load_jsonl reports the offending line") {
  TempDir dir;
  auto expect_line = [&](const std::string& content, std::size_t line) {
    const auto p = dir.write("bad.jsonl", content);
    try {
      load_jsonl(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == line);
    }
  };
  const std::string good = R"({"prompt":"p","chosen":"a","rejected":"b"})" "\n";
  expect_line(good + R"({"prompt":"p","rejected":"b"})" "\n", 2);           // missing chosen
  expect_line(good + good + "{not json\n", 3);                                // malformed
  expect_line(good + R"({"prompt":"p","chosen":"","rejected":"b"})" "\n", 2);  // empty response
  expect_line(good + R"({"prompt":"p","chosen":1,"rejected":"b"})" "\n", 2);   // wrong type
  expect_line(R"({"id":"x","prompt":"p","chosen":"a","rejected":"b"})" "\n"
              R"({"id":"x","prompt":"p","chosen":"a","rejected":"b"})" "\n", 2);  // duplicate id

  CHECK_THROWS_AS(load_jsonl(dir.write("empty.jsonl", "\n\n")), DomainError);
  CHECK_THROWS_AS(load_jsonl(dir / "missing.jsonl"), IoError);
}

TEST_CASE("write_jsonl round-trips") {
  TempDir dir;
  SyntheticSpec spec;
  spec.triples_per_source = 20;
  const auto sources = generate_synthetic(spec);
  const auto all = pool(sources);
  write_jsonl(dir / "out.jsonl", all);
  const auto back = load_jsonl(dir / "out.jsonl");
  CHECK(pool(back) == all);
  const auto first_line = testing_support::read_file(dir / "out.jsonl").substr(0, 6);
  CHECK(first_line == R"({"id":)");
}

// ---------------------------------------------------------------------------
// Generator

TEST_CASE("synthetic generator contracts") {
  SyntheticSpec spec;
  spec.triples_per_source = 200;
  const auto sources = generate_synthetic(spec);
  REQUIRE(sources.size() == 3);
  CHECK(sources[0].name == "easy");
  CHECK(sources[1].name == "medium");
  CHECK(sources[2].name == "hard");
  CHECK(sources[0].declared_difficulty == 0.0);
  CHECK(sources[1].declared_difficulty == 0.5);
  CHECK(sources[2].declared_difficulty == 1.0);

  std::set<std::string> ids;
  for (const auto& s : sources) {
    CHECK(s.triples.size() == 200);
    for (const auto& t : s.triples) {
      ids.insert(t.id);
      CHECK(t.source == s.name);
      CHECK(t.prompt.size() >= 10);
      CHECK(t.prompt.size() <= 14);
      CHECK(std::set<char>(t.prompt.begin(), t.prompt.end()).size() == t.prompt.size());
      CHECK(std::is_sorted(t.chosen.begin(), t.chosen.end()));
      CHECK(std::is_permutation(t.prompt.begin(), t.prompt.end(), t.chosen.begin()));
      CHECK(std::is_permutation(t.chosen.begin(), t.chosen.end(), t.rejected.begin()));
    }
  }
  CHECK(ids.size() == 600);
  for (const auto& t : sources[0].triples) CHECK(differing_positions(t.chosen, t.rejected) >= 4);
  for (const auto& t : sources[0].triples) CHECK(differing_positions(t.chosen, t.rejected) == 8);
  for (const auto& t : sources[1].triples) CHECK(differing_positions(t.chosen, t.rejected) == 4);
  for (const auto& t : sources[2].triples) CHECK(differing_positions(t.chosen, t.rejected) == 2);
}

TEST_CASE("synthetic generator is deterministic and seed sensitive") {
  SyntheticSpec a;
  a.triples_per_source = 50;
  auto b = a;
  b.seed = 2;
  CHECK(pool(generate_synthetic(a)) == pool(generate_synthetic(a)));
  CHECK(pool(generate_synthetic(a)) != pool(generate_synthetic(b)));
}

TEST_CASE("synthetic generator options") {
  SyntheticSpec spec;
  spec.num_sources = 4;
  spec.triples_per_source = 5;
  spec.swaps = {3, 2, 1, 1};
  const auto sources = generate_synthetic(spec);
  CHECK(sources[0].name == "level0");
  CHECK(sources[3].name == "level3");
  CHECK(differing_positions(sources[0].triples[0].chosen, sources[0].triples[0].rejected) == 6);

  CHECK(SyntheticSpec{}.resolved_swaps() == std::vector<int>{4, 2, 1});
  spec.swaps = {1, 2};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.num_sources = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.swaps = {8, 2, 1};  // 16 positions cannot fit in 10 characters
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Partitioning

TEST_CASE("order_by_accuracy sorts descending with name tie-break") {
  std::vector<DatasetSource> sources{make_source("zeta", 2), make_source("mid", 2), make_source("alpha", 2)};
  const std::vector<double> acc{0.5, 0.9, 0.5};
  const auto plan = order_by_accuracy(sources, acc);
  CHECK(plan.strategy == PartitionStrategy::easy_to_hard);
  CHECK(chunk_ids(plan) == std::vector<std::string>{"mid", "alpha", "zeta"});
  CHECK(plan.chunks[0].reward_accuracy == 0.9);
  CHECK(plan.chunks[0].sources == std::vector<std::string>{"mid"});
  CHECK(plan.triple_count() == 6);
}

TEST_CASE("partition_easy_to_hard on an exact tie uses names") {
  // Identical content in every source gives identical accuracies.
  std::vector<DatasetSource> sources{make_source("c", 3), make_source("a", 3), make_source("b", 3)};
  const auto scorer = init_policy(Architecture{2, 3, 4, 73}, 1);
  const auto plan = partition_easy_to_hard(sources, scorer);
  CHECK(chunk_ids(plan) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("partition_easy_to_hard matches an independent sort of oracle accuracies") {
  SyntheticSpec spec;
  spec.triples_per_source = 40;
  spec.num_sources = 4;
  spec.swaps = {4, 3, 2, 1};
  const auto sources = generate_synthetic(spec);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto scorer = init_policy(Architecture{2, 3, 4, 73}, seed);
    std::vector<std::pair<double, std::string>> expected;
    for (const auto& s : sources) expected.emplace_back(oracle_accuracy(scorer, s), s.name);
    std::sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    const auto plan = partition_easy_to_hard(sources, scorer);
    REQUIRE(plan.chunks.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(plan.chunks[i].id == expected[i].second);
      CHECK(*plan.chunks[i].reward_accuracy == expected[i].first);
    }
  }
}

TEST_CASE("partition_random") {
  std::vector<DatasetSource> sources{make_source("a", 4), make_source("b", 6)};
  const auto plan = partition_random(sources, 3, 9);
  CHECK(chunk_ids(plan) == std::vector<std::string>{"random_1", "random_2", "random_3"});
  CHECK(plan.chunks[0].triples.size() == 4);
  CHECK(plan.chunks[1].triples.size() == 3);
  CHECK(plan.chunks[2].triples.size() == 3);
  CHECK_FALSE(plan.chunks[0].reward_accuracy.has_value());

  std::multiset<std::string> seen;
  for (const auto& c : plan.chunks)
    for (const auto& t : c.triples) seen.insert(t.id);
  std::multiset<std::string> all;
  for (const auto& t : pool(sources)) all.insert(t.id);
  CHECK(seen == all);

  const auto again = partition_random(sources, 3, 9);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.chunks[i].triples == plan.chunks[i].triples);
  const auto other = partition_random(sources, 3, 10);
  bool differs = false;
  for (std::size_t i = 0; i < 3; ++i) differs |= other.chunks[i].triples != plan.chunks[i].triples;
  CHECK(differs);

  const auto one = partition_random(sources, 1, 9);
  REQUIRE(one.chunks.size() == 1);
  CHECK(one.chunks[0].triples.size() == 10);

  CHECK_THROWS_AS(partition_random(sources, 0, 9), DomainError);
  CHECK_THROWS_AS(partition_random(sources, 11, 9), DomainError);
}

TEST_CASE("partition_single and strategy names") {
  std::vector<DatasetSource> sources{make_source("a", 2), make_source("b", 3)};
  const auto plan = partition_single(sources);
  REQUIRE(plan.chunks.size() == 1);
  CHECK(plan.chunks[0].id == "all");
  CHECK(plan.chunks[0].triples == pool(sources));
  for (auto s : {PartitionStrategy::easy_to_hard, PartitionStrategy::random, PartitionStrategy::single})
    CHECK(parse_partition_strategy(to_string(s)) == s);
  CHECK_THROWS_AS(parse_partition_strategy("hard_to_easy"), ConfigError);

  const auto json = nlohmann::json::parse(chunk_plan_to_json(plan));
  CHECK(json["strategy"] == "single");
  CHECK(json["chunks"][0]["size"] == 5);
  CHECK(json["chunks"][0]["reward_accuracy"].is_null());
  CHECK(json["chunks"][0]["members"].size() == 5);
}

// ---------------------------------------------------------------------------
// Split

TEST_CASE("split_holdout is stratified, disjoint and deterministic") {
  SyntheticSpec spec;
  spec.triples_per_source = 50;
  const auto sources = generate_synthetic(spec);
  const auto split = split_holdout(sources, SplitSpec{});
  REQUIRE(split.train.size() == 3);
  CHECK(split.holdout.size() == 30);
  std::map<std::string, int> per_source;
  for (const auto& t : split.holdout) ++per_source[t.source];
  for (const auto& s : split.train) {
    CHECK(s.triples.size() == 40);
    CHECK(per_source[s.name] == 10);
  }

  std::set<std::string> train_ids, hold_ids, all_ids;
  for (const auto& s : split.train)
    for (const auto& t : s.triples) train_ids.insert(t.id);
  for (const auto& t : split.holdout) hold_ids.insert(t.id);
  for (const auto& t : pool(sources)) all_ids.insert(t.id);
  std::vector<std::string> common;
  std::set_intersection(train_ids.begin(), train_ids.end(), hold_ids.begin(), hold_ids.end(),
                        std::back_inserter(common));
  CHECK(common.empty());
  train_ids.insert(hold_ids.begin(), hold_ids.end());
  CHECK(train_ids == all_ids);

  const auto again = split_holdout(sources, SplitSpec{});
  CHECK(again.holdout == split.holdout);
  SplitSpec other;
  other.seed = 2;
  CHECK(split_holdout(sources, other).holdout != split.holdout);
}

TEST_CASE("split_holdout errors") {
  std::vector<DatasetSource> tiny{make_source("a", 1)};
  CHECK_THROWS_AS(split_holdout(tiny, SplitSpec{}), DomainError);
  SplitSpec bad;
  bad.train_fraction = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.train_fraction = 1.0;
  bad.holdout_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("tokenize uses the standard vocabulary") {
  const PreferenceTriple t{"x", "ba", "ab", "ba", "s"};
  const auto tok = tokenize(t);
  CHECK(tok.id == "x");
  CHECK(tok.prompt == Vocabulary::standard().encode("ba"));
  CHECK(tok.chosen == Vocabulary::standard().encode("ab"));
  CHECK_THROWS_AS(tokenize(PreferenceTriple{"y", "p", "\x01", "a", "s"}), EncodingError);
}
