#include "sdpo/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "sdpo/errors.hpp"
#include "sdpo/hash.hpp"
#include "sdpo/snapshot.hpp"

namespace sdpo {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  T get(const char* key, T fallback) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return fallback;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError("unknown configuration key " + where_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

fs::path resolve_path(const std::string& p, const fs::path& base_dir) {
  fs::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return path.lexically_normal();
}

OptimizerConfig parse_optimizer(const json& j, const OptimizerConfig& d) {
  Fields f(j, "dpo.optimizer");
  OptimizerConfig o = d;
  const std::string kind = f.get<std::string>("kind", d.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd");
  if (kind == "adam") {
    o.kind = OptimizerConfig::Kind::adam;
  } else if (kind == "sgd") {
    o.kind = OptimizerConfig::Kind::sgd;
  } else {
    throw ConfigError("dpo.optimizer.kind must be \"adam\" or \"sgd\"");
  }
  o.beta1 = f.get("beta1", d.beta1);
  o.beta2 = f.get("beta2", d.beta2);
  o.epsilon = f.get("epsilon", d.epsilon);
  f.finish();
  return o;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void prepare_out_dir(const fs::path& out_dir, bool force) {
  if (out_dir.empty()) throw ConfigError("no output directory given (use --out or output_dir)");
  std::error_code ec;
  if (fs::exists(out_dir, ec) && !fs::is_empty(out_dir, ec) && !force) {
    throw ConfigError("output directory " + out_dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
}

void merge_sources(std::vector<DatasetSource> incoming, std::vector<DatasetSource>& into,
                   std::set<std::string>& ids) {
  for (auto& src : incoming) {
    for (const auto& t : src.triples) {
      if (!ids.insert(t.id).second) throw ConfigError("duplicate triple id \"" + t.id + "\" across data files");
    }
    auto it = std::find_if(into.begin(), into.end(), [&](const auto& s) { return s.name == src.name; });
    if (it == into.end()) {
      into.push_back(std::move(src));
    } else {
      it->triples.insert(it->triples.end(), src.triples.begin(), src.triples.end());
    }
  }
}

}  // namespace

RunConfig default_run_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.synthetic = SyntheticSpec{};
  c.synthetic->seed = seed;
  c.split.seed = seed;
  c.arch = Architecture{8, 16, 64, static_cast<int>(Vocabulary::standard().size())};
  c.sft.seed = seed;
  c.dpo.seed = seed;
  c.partition.seed = seed;
  return c;
}

RunConfig parse_run_config(const json& input, const fs::path& base_dir) {
  const json& j = input.is_object() && input.contains("config") && input.contains("config_hash")
                      ? input.at("config")
                      : input;
  Fields top(j, "config");
  const auto seed = top.get<std::uint64_t>("seed", 1);
  RunConfig c = default_run_config(seed);

  if (const json* data = top.child("data")) {
    Fields f(*data, "config.data");
    const json* synthetic = f.child("synthetic");
    const json* jsonl = f.child("jsonl");
    f.finish();
    if ((synthetic != nullptr) == (jsonl != nullptr)) {
      throw ConfigError("config.data needs exactly one of \"synthetic\" or \"jsonl\"");
    }
    if (synthetic) {
      Fields s(*synthetic, "config.data.synthetic");
      SyntheticSpec spec;
      spec.num_sources = s.get("num_sources", spec.num_sources);
      spec.triples_per_source = s.get("triples_per_source", spec.triples_per_source);
      spec.swaps = s.get("swaps", spec.swaps);
      spec.min_length = s.get("min_length", spec.min_length);
      spec.max_length = s.get("max_length", spec.max_length);
      spec.seed = s.get("seed", seed);
      s.finish();
      c.synthetic = spec;
    } else {
      c.synthetic.reset();
      if (!jsonl->is_array() || jsonl->empty()) throw ConfigError("config.data.jsonl must be a non-empty array");
      for (const auto& p : *jsonl) {
        if (!p.is_string()) throw ConfigError("config.data.jsonl entries must be strings");
        c.jsonl.push_back(resolve_path(p.get<std::string>(), base_dir));
      }
    }
  }
  if (c.synthetic) c.synthetic->validate();

  if (const json* split = top.child("split")) {
    Fields f(*split, "config.split");
    c.split.train_fraction = f.get("train_fraction", c.split.train_fraction);
    c.split.holdout_fraction = f.get("holdout_fraction", 1.0 - c.split.train_fraction);
    c.split.seed = f.get("seed", seed);
    f.finish();
  }
  c.split.validate();

  if (const json* model = top.child("model")) {
    Fields f(*model, "config.model");
    c.arch.context_window = f.get("context_window", c.arch.context_window);
    c.arch.embedding_dim = f.get("embedding_dim", c.arch.embedding_dim);
    c.arch.hidden_dim = f.get("hidden_dim", c.arch.hidden_dim);
    c.arch.vocab_size = f.get("vocab_size", c.arch.vocab_size);
    f.finish();
  }
  c.arch.validate();
  if (static_cast<std::size_t>(c.arch.vocab_size) != Vocabulary::standard().size()) {
    throw ConfigError("config.model.vocab_size must equal the vocabulary size " +
                      std::to_string(Vocabulary::standard().size()));
  }

  if (const json* snap = top.child("base_snapshot")) {
    if (!snap->is_string()) throw ConfigError("config.base_snapshot must be a string");
    c.base_snapshot = resolve_path(snap->get<std::string>(), base_dir);
  }

  if (const json* sft = top.child("sft")) {
    Fields f(*sft, "config.sft");
    c.sft.learning_rate = f.get("learning_rate", c.sft.learning_rate);
    c.sft.batch_size = f.get("batch_size", c.sft.batch_size);
    c.sft.epochs = f.get("epochs", c.sft.epochs);
    c.sft.seed = f.get("seed", seed);
    f.finish();
  }
  c.sft.validate();

  if (const json* dpo = top.child("dpo")) {
    Fields f(*dpo, "config.dpo");
    c.dpo.beta = f.get("beta", c.dpo.beta);
    c.dpo.batch_size = f.get("batch_size", c.dpo.batch_size);
    c.dpo.learning_rate = f.get("learning_rate", c.dpo.learning_rate);
    c.dpo.epochs = f.get("epochs", c.dpo.epochs);
    if (const json* opt = f.child("optimizer")) c.dpo.optimizer = parse_optimizer(*opt, c.dpo.optimizer);
    c.dpo.seed = f.get("seed", seed);
    f.finish();
  }
  c.dpo.validate();

  const std::string mode = top.get<std::string>("mode", "sdpo");
  if (mode == "sdpo") {
    c.mode = RunMode::sdpo;
  } else if (mode == "dpo") {
    c.mode = RunMode::dpo;
  } else {
    throw ConfigError("config.mode must be \"dpo\" or \"sdpo\"");
  }

  c.partition.strategy = c.mode == RunMode::dpo ? PartitionStrategy::single : PartitionStrategy::easy_to_hard;
  if (const json* part = top.child("partition")) {
    Fields f(*part, "config.partition");
    c.partition.strategy = parse_partition_strategy(f.get<std::string>("strategy", to_string(c.partition.strategy)));
    c.partition.chunks = f.get("chunks", 0);
    c.partition.seed = f.get("seed", seed);
    f.finish();
  }
  if (c.partition.chunks < 0) throw ConfigError("config.partition.chunks must be >= 0");
  if (c.partition.strategy != PartitionStrategy::random && c.partition.chunks != 0) {
    throw ConfigError("config.partition.chunks only applies to the random strategy");
  }
  if (c.mode == RunMode::dpo && c.partition.strategy != PartitionStrategy::single) {
    throw ConfigError("mode \"dpo\" trains on pooled data; partition.strategy must be \"single\"");
  }

  c.target_init = parse_target_init(top.get<std::string>("target_init", "previous"));
  if (const json* out = top.child("output_dir")) {
    if (!out->is_string()) throw ConfigError("config.output_dir must be a string");
    c.output_dir = resolve_path(out->get<std::string>(), base_dir);
  }
  top.finish();
  return c;
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  if (seed_override) {
    json& target = j.is_object() && j.contains("config") && j.contains("config_hash") ? j["config"] : j;
    if (!target.is_object()) throw ConfigError(path.string() + ": configuration must be a JSON object");
    target["seed"] = *seed_override;
  }
  return parse_run_config(j, path.parent_path());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  nlohmann::ordered_json data;
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    data["synthetic"] = {{"num_sources", s.num_sources}, {"triples_per_source", s.triples_per_source},
                         {"swaps", s.resolved_swaps()}, {"min_length", s.min_length},
                         {"max_length", s.max_length}, {"seed", s.seed}};
  } else {
    auto paths = nlohmann::ordered_json::array();
    for (const auto& p : c.jsonl) paths.push_back(p.string());
    data["jsonl"] = paths;
  }
  j["data"] = data;
  j["split"] = {{"train_fraction", c.split.train_fraction},
                {"holdout_fraction", c.split.holdout_fraction},
                {"seed", c.split.seed}};
  j["model"] = {{"context_window", c.arch.context_window}, {"embedding_dim", c.arch.embedding_dim},
                {"hidden_dim", c.arch.hidden_dim}, {"vocab_size", c.arch.vocab_size}};
  j["base_snapshot"] = c.base_snapshot ? nlohmann::ordered_json(c.base_snapshot->string()) : nullptr;
  j["sft"] = {{"learning_rate", c.sft.learning_rate}, {"batch_size", c.sft.batch_size},
              {"epochs", c.sft.epochs}, {"seed", c.sft.seed}};
  nlohmann::ordered_json opt;
  opt["kind"] = c.dpo.optimizer.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd";
  opt["beta1"] = c.dpo.optimizer.beta1;
  opt["beta2"] = c.dpo.optimizer.beta2;
  opt["epsilon"] = c.dpo.optimizer.epsilon;
  j["dpo"] = {{"beta", c.dpo.beta},
              {"batch_size", c.dpo.batch_size},
              {"learning_rate", c.dpo.learning_rate},
              {"epochs", c.dpo.epochs},
              {"optimizer", opt},
              {"seed", c.dpo.seed}};
  j["mode"] = c.mode == RunMode::dpo ? "dpo" : "sdpo";
  j["partition"] = {{"strategy", to_string(c.partition.strategy)},
                    {"chunks", c.partition.chunks},
                    {"seed", c.partition.seed}};
  j["target_init"] = to_string(c.target_init);
  j["output_dir"] = c.output_dir.string();
  return j;
}

std::string config_hash(const RunConfig& config) {
  auto j = to_json(config);
  j.erase("output_dir");
  return to_hex(fnv1a64(j.dump()));
}

PreparedExperiment prepare_experiment(const RunConfig& config) {
  std::vector<DatasetSource> sources;
  if (config.synthetic) {
    sources = generate_synthetic(*config.synthetic);
  } else {
    std::set<std::string> ids;
    for (const auto& path : config.jsonl) {
      if (!fs::exists(path)) throw ConfigError("data file " + path.string() + " does not exist");
      merge_sources(load_jsonl(path), sources, ids);
    }
  }
  auto split = split_holdout(sources, config.split);

  PreparedExperiment out;
  if (config.base_snapshot) {
    out.base = snapshot_load(*config.base_snapshot).model;
    if (out.base.arch != config.arch) throw ConfigError("base snapshot architecture differs from config.model");
  } else {
    std::vector<SftExample> corpus;
    for (const auto& t : pool(split.train)) {
      const auto tok = tokenize(t);
      corpus.push_back({t.id, tok.prompt, tok.chosen});
    }
    out.base = sft_train(init_policy(config.arch, config.seed, Vocabulary::standard()), corpus, config.sft);
  }
  out.train = std::move(split.train);
  out.holdout = std::move(split.holdout);
  // Surface encoding problems before any training starts.
  tokenize(out.holdout);
  return out;
}

ChunkPlan make_chunk_plan(const RunConfig& config, const PreparedExperiment& prepared) {
  switch (config.partition.strategy) {
    case PartitionStrategy::easy_to_hard:
      return partition_easy_to_hard(prepared.train, prepared.base);
    case PartitionStrategy::random: {
      const int T = config.partition.chunks > 0 ? config.partition.chunks : static_cast<int>(prepared.train.size());
      return partition_random(prepared.train, T, config.partition.seed);
    }
    case PartitionStrategy::single:
      return partition_single(prepared.train);
  }
  throw ConfigError("unknown partition strategy");
}

RunOutcome execute_run(const RunConfig& config, const fs::path& out_dir, bool force) {
  const PreparedExperiment prepared = prepare_experiment(config);
  const ChunkPlan plan = make_chunk_plan(config, prepared);
  const std::string hash = config_hash(config);
  const auto all_train = pool(prepared.train);
  for (const auto& id : degenerate_ids(all_train)) {
    std::cerr << "warning: degenerate triple (chosen == rejected): " << id << "\n";
  }

  prepare_out_dir(out_dir, force);
  const fs::path snapshot_dir = out_dir / "snapshots";
  write_text(out_dir / "chunk_plan.json", chunk_plan_to_json(plan) + "\n");

  RunOutcome outcome;
  outcome.out_dir = out_dir;
  outcome.config_hash = hash;
  if (config.mode == RunMode::dpo) {
    StepSnapshot s0{0, prepared.base, "", hash};
    snapshot_store(snapshot_dir, s0);
    auto result = run_dpo(prepared.base, all_train, config.dpo, prepared.holdout, snapshot_dir);
    StepSnapshot s1{1, std::move(result.model), "all", hash};
    snapshot_store(snapshot_dir, s1);
    outcome.snapshots = {std::move(s0), std::move(s1)};
    outcome.ledger = std::move(result.ledger);
  } else {
    SdpoConfig sdpo;
    sdpo.dpo = config.dpo;
    sdpo.target_init = config.target_init;
    sdpo.chunk_plan = plan;
    sdpo.holdout = prepared.holdout;
    sdpo.snapshot_dir = snapshot_dir;
    sdpo.config_hash = hash;
    auto result = run_sdpo(prepared.base, sdpo);
    outcome.snapshots = std::move(result.snapshots);
    outcome.ledger = std::move(result.ledger);
  }

  emit_ledger_csv(outcome.ledger, out_dir / "ledger.csv");
  emit_report_csv(outcome.ledger, out_dir / "report.csv");
  emit_gamma_sweep_csv(gamma_sweep(outcome.snapshots, prepared.holdout), out_dir / "gamma_sweep.csv");

  nlohmann::ordered_json record;
  record["config"] = to_json(config);
  record["config_hash"] = hash;
  auto snaps = nlohmann::ordered_json::array();
  for (const auto& s : outcome.snapshots) {
    const std::string h = content_hash_hex(s.model);
    outcome.snapshot_hashes.push_back(h);
    snaps.push_back({{"step", s.step},
                     {"chunk_id", s.chunk_id},
                     {"file", (fs::path("snapshots") / snapshot_file_name(s)).string()},
                     {"content_hash", h}});
  }
  record["snapshots"] = snaps;
  auto holdout_ids = nlohmann::ordered_json::array();
  for (const auto& t : prepared.holdout) holdout_ids.push_back(t.id);
  record["holdout_ids"] = holdout_ids;
  record["degenerate_triples"] = degenerate_ids(all_train);
  write_text(out_dir / "config.json", record.dump(2) + "\n");
  return outcome;
}

ComparisonReport execute_compare(const RunConfig& config, int seeds, const fs::path& out_dir, bool force) {
  if (seeds < 1) throw ConfigError("--seeds must be >= 1");
  const PreparedExperiment prepared = prepare_experiment(config);
  prepare_out_dir(out_dir, force);
  std::vector<std::uint64_t> seed_list;
  for (int i = 0; i < seeds; ++i) seed_list.push_back(config.seed + static_cast<std::uint64_t>(i));
  ComparisonReport report = compare_arms(prepared.base, prepared.train, prepared.holdout, config.dpo, seed_list);
  emit_comparison_csv(report, out_dir / "comparison.csv");
  write_text(out_dir / "summary.txt", comparison_summary(report));
  return report;
}

std::vector<fs::path> generate_data_files(const SyntheticSpec& spec, const fs::path& out_dir, bool force) {
  const auto sources = generate_synthetic(spec);
  std::vector<fs::path> paths;
  for (const auto& s : sources) paths.push_back(out_dir / (s.name + ".jsonl"));
  if (!force) {
    for (const auto& p : paths) {
      if (fs::exists(p)) throw ConfigError(p.string() + " already exists (use --force)");
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < sources.size(); ++i) write_jsonl(paths[i], sources[i].triples);
  return paths;
}

}  // namespace sdpo
