#include "sdpo/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>

#include "sdpo/errors.hpp"
#include "sdpo/hash.hpp"

namespace sdpo {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'P', 'O', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw CorruptionError("snapshot truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t content_hash(const PolicyModel& model) {
  Fnv1a64 h;
  for (int dim : {model.arch.context_window, model.arch.embedding_dim, model.arch.hidden_dim,
                  model.arch.vocab_size}) {
    const auto v = static_cast<std::uint32_t>(dim);
    const std::uint8_t le[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                                static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    h.update(le);
  }
  for (Eigen::Index i = 0; i < model.theta.size(); ++i) h.update_u64(std::bit_cast<std::uint64_t>(model.theta[i]));
  return h.digest();
}

std::string content_hash_hex(const PolicyModel& model) { return to_hex(content_hash(model)); }

std::vector<std::uint8_t> serialize_snapshot(const StepSnapshot& s) {
  const Architecture& a = s.model.arch;
  if (s.model.theta.size() != a.parameter_count()) {
    throw DomainError("theta length does not match the architecture");
  }
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.i64(s.step);
  w.str(s.chunk_id);
  w.str(s.config_hash);
  w.u32(static_cast<std::uint32_t>(a.context_window));
  w.u32(static_cast<std::uint32_t>(a.embedding_dim));
  w.u32(static_cast<std::uint32_t>(a.hidden_dim));
  w.u32(static_cast<std::uint32_t>(a.vocab_size));
  w.u64(s.model.seed);
  w.u64(static_cast<std::uint64_t>(s.model.theta.size()));
  for (Eigen::Index i = 0; i < s.model.theta.size(); ++i) w.f64(s.model.theta[i]);
  w.u64(content_hash(s.model));
  return w.take();
}

StepSnapshot deserialize_snapshot(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.raw(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw CorruptionError("bad snapshot magic");
  if (const auto v = r.u32(); v != kVersion) {
    throw CorruptionError("unsupported snapshot version " + std::to_string(v));
  }
  StepSnapshot s;
  s.step = r.i64();
  s.chunk_id = r.str();
  s.config_hash = r.str();
  Architecture& a = s.model.arch;
  a.context_window = static_cast<int>(r.u32());
  a.embedding_dim = static_cast<int>(r.u32());
  a.hidden_dim = static_cast<int>(r.u32());
  a.vocab_size = static_cast<int>(r.u32());
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("snapshot architecture invalid: ") + e.what());
  }
  s.model.seed = r.u64();
  const std::uint64_t count = r.u64();
  if (count != static_cast<std::uint64_t>(a.parameter_count())) {
    throw CorruptionError("snapshot parameter count does not match its architecture");
  }
  if (r.remaining() < count * 8 + 8) throw CorruptionError("snapshot truncated");
  s.model.theta.resize(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < s.model.theta.size(); ++i) s.model.theta[i] = r.f64();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after snapshot hash");
  if (stored != content_hash(s.model)) throw CorruptionError("snapshot content hash mismatch");
  return s;
}

std::string snapshot_file_name(const StepSnapshot& s) {
  return "step_" + std::to_string(s.step) + "_" + content_hash_hex(s.model) + ".bin";
}

std::filesystem::path snapshot_store(const std::filesystem::path& dir, const StepSnapshot& s) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create snapshot directory " + dir.string() + ": " + ec.message());
  const auto path = dir / snapshot_file_name(s);
  const auto bytes = serialize_snapshot(s);
  // Write then rename so a crash never leaves a half-written snapshot under the final name.
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move snapshot into place at " + path.string() + ": " + ec.message());
  return path;
}

StepSnapshot snapshot_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open snapshot " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  StepSnapshot s = deserialize_snapshot(bytes);

  static const std::regex kNamed(R"(step_-?\d+_([0-9a-f]{16})\.bin)");
  std::smatch m;
  const std::string name = path.filename().string();
  if (std::regex_match(name, m, kNamed) && m[1].str() != content_hash_hex(s.model)) {
    throw CorruptionError("snapshot file name hash " + m[1].str() + " does not match content hash " +
                          content_hash_hex(s.model));
  }
  return s;
}

}  // namespace sdpo
