#include "sdpo/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sdpo/errors.hpp"

namespace sdpo {

std::vector<GammaSweepRow> gamma_sweep(std::span<const StepSnapshot> snapshots,
                                       std::span<const PreferenceTriple> dataset) {
  if (dataset.empty()) throw DomainError("gamma sweep dataset must be non-empty");
  const auto tokens = tokenize(dataset);
  std::vector<GammaSweepRow> rows;
  for (const auto& snap : snapshots) {
    const auto g = gammas(snap.model, tokens);
    const double n = static_cast<double>(g.size());
    double sum = 0.0;
    std::size_t wins = 0;
    for (double v : g) {
      sum += v;
      wins += v > 0.0 ? 1 : 0;
    }
    const double mean = sum / n;
    double sq = 0.0;
    for (double v : g) sq += (v - mean) * (v - mean);
    rows.push_back({snap.step, snap.chunk_id, mean, std::sqrt(sq / n), static_cast<double>(wins) / n});
  }
  return rows;
}

std::string to_string(Arm arm) {
  switch (arm) {
    case Arm::dpo: return "dpo";
    case Arm::sdpo_easy_to_hard: return "sdpo_easy_to_hard";
    case Arm::sdpo_random: return "sdpo_random";
    case Arm::sft_only: return "sft_only";
  }
  return "?";
}

const ArmSummary& ComparisonReport::summary(Arm arm) const {
  for (const auto& s : medians) {
    if (s.arm == arm) return s;
  }
  throw DomainError("no summary for arm " + to_string(arm));
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ComparisonReport compare_arms(const PolicyModel& base, std::span<const DatasetSource> train,
                              std::span<const PreferenceTriple> holdout, const DpoConfig& dpo,
                              std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw DomainError("compare_arms needs at least one seed");
  if (holdout.empty()) throw DomainError("compare_arms needs a non-empty holdout set");
  dpo.validate();

  ComparisonReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& t : holdout) report.holdout_ids.push_back(t.id);
  const auto holdout_tokens = tokenize(holdout);
  const auto pooled = pool(train);

  auto evaluate = [&](const PolicyModel& m, ArmResult& row) {
    row.holdout_reward_accuracy = reward_accuracy(m, holdout_tokens);
    row.holdout_mean_gamma = mean_gamma(m, holdout_tokens);
  };

  for (std::uint64_t seed : seeds) {
    DpoConfig cfg = dpo;
    cfg.seed = seed;
    for (Arm arm : kAllArms) {
      ArmResult row;
      row.arm = arm;
      row.seed = seed;
      try {
        switch (arm) {
          case Arm::sft_only:
            evaluate(base, row);
            break;
          case Arm::dpo:
            evaluate(run_dpo(base, pooled, cfg).model, row);
            break;
          case Arm::sdpo_easy_to_hard:
          case Arm::sdpo_random: {
            SdpoConfig sdpo;
            sdpo.dpo = cfg;
            sdpo.chunk_plan = arm == Arm::sdpo_easy_to_hard
                                  ? partition_easy_to_hard(train, base)
                                  : partition_random(train, static_cast<int>(train.size()), seed);
            sdpo.holdout.assign(holdout.begin(), holdout.end());
            evaluate(run_sdpo(base, sdpo).model, row);
            break;
          }
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      report.rows.push_back(std::move(row));
    }
  }

  for (Arm arm : kAllArms) {
    ArmSummary s;
    s.arm = arm;
    std::vector<double> acc, gam;
    for (const auto& row : report.rows) {
      if (row.arm == arm && !row.failed) {
        acc.push_back(row.holdout_reward_accuracy);
        gam.push_back(row.holdout_mean_gamma);
      }
    }
    s.succeeded = acc.size();
    if (!acc.empty()) {
      s.median_reward_accuracy = median(acc);
      s.median_mean_gamma = median(gam);
    } else {
      s.median_reward_accuracy = s.median_mean_gamma = std::nan("");
    }
    report.medians.push_back(s);
  }
  return report;
}

std::vector<std::string> verdict_lines(const ComparisonReport& report) {
  auto at_least = [&](Arm a, Arm b) {
    const auto& x = report.summary(a);
    const auto& y = report.summary(b);
    return x.succeeded > 0 && y.succeeded > 0 && x.median_reward_accuracy >= y.median_reward_accuracy;
  };
  auto line = [](const char* claim, bool v) { return std::string(claim) + ": " + (v ? "true" : "false"); };
  return {
      line("easy_to_hard >= random", at_least(Arm::sdpo_easy_to_hard, Arm::sdpo_random)),
      line("easy_to_hard >= sft_only", at_least(Arm::sdpo_easy_to_hard, Arm::sft_only)),
      line("random >= sft_only", at_least(Arm::sdpo_random, Arm::sft_only)),
      line("easy_to_hard >= dpo", at_least(Arm::sdpo_easy_to_hard, Arm::dpo)),
  };
}

std::string comparison_summary(const ComparisonReport& report) {
  std::ostringstream out;
  out << "median over " << report.seeds.size() << " seed(s):\n";
  for (const auto& s : report.medians) {
    out << "  " << to_string(s.arm) << " holdout_reward_acc=" << format_double(s.median_reward_accuracy)
        << " holdout_mean_gamma=" << format_double(s.median_mean_gamma) << " succeeded=" << s.succeeded << "\n";
  }
  for (const auto& v : verdict_lines(report)) out << v << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan" || text == "-nan") return std::nan("");
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) throw ParseError("not a number: \"" + text + "\"", 0);
  return v;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<const char*> header) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    std::vector<std::string> h(header.begin(), header.end());
    row(h);
  }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
  }
  ~CsvWriter() noexcept(false) {
    out_.close();
    if (!out_ && std::uncaught_exceptions() == 0) throw IoError("error writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace

void emit_ledger_csv(const RunLedger& ledger, const std::filesystem::path& path) {
  CsvWriter csv(path, {"step", "chunk_id", "batch", "loss"});
  for (const auto& p : ledger.losses) {
    csv.row({std::to_string(p.step), p.chunk_id, std::to_string(p.batch), format_double(p.loss)});
  }
}

void emit_report_csv(const RunLedger& ledger, const std::filesystem::path& path) {
  CsvWriter csv(path, {"step", "chunk_id", "mean_gamma_ref", "mean_gamma_target", "reward_acc", "first_batch_loss",
                       "final_train_loss"});
  for (const auto& s : ledger.steps) {
    csv.row({std::to_string(s.step), s.chunk_id, format_double(s.mean_gamma_ref_holdout),
             format_double(s.mean_gamma_target_holdout), format_double(s.reward_accuracy_holdout),
             format_double(s.first_batch_loss), format_double(s.final_train_loss)});
  }
}

void emit_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path) {
  CsvWriter csv(path, {"arm", "seed", "holdout_reward_acc", "holdout_mean_gamma"});
  for (const auto& r : report.rows) {
    csv.row({to_string(r.arm), std::to_string(r.seed), r.failed ? "" : format_double(r.holdout_reward_accuracy),
             r.failed ? "" : format_double(r.holdout_mean_gamma)});
  }
}

void emit_gamma_sweep_csv(std::span<const GammaSweepRow> rows, const std::filesystem::path& path) {
  CsvWriter csv(path, {"step", "chunk_id", "mean_gamma", "std_gamma", "reward_acc"});
  for (const auto& r : rows) {
    csv.row({std::to_string(r.step), r.chunk_id, format_double(r.mean_gamma), format_double(r.std_gamma),
             format_double(r.reward_accuracy)});
  }
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw ParseError("quote inside unquoted field", line);
        quoted = any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
        ++line;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line);
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sdpo
