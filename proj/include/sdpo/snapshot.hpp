#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sdpo/policy.hpp"

namespace sdpo {

/// Frozen parameters of M_t with provenance. Step 0 is the SFT base model
/// and carries an empty chunk id.
struct StepSnapshot {
  std::int64_t step = 0;
  PolicyModel model;
  std::string chunk_id;
  std::string config_hash;
};

/// FNV-1a-64 over the little-endian bytes of (k, d, h, V) as uint32 followed
/// by every theta entry as IEEE-754 binary64.
std::uint64_t content_hash(const PolicyModel& model);
std::string content_hash_hex(const PolicyModel& model);

/// Snapshot file layout, version 1, all integers little-endian:
///
///   offset  size  field
///   0       8     magic "SDPOSNAP"
///   8       4     u32 format version (1)
///   12      8     i64 step index
///   20      4     u32 chunk id length L1, then L1 bytes
///   ..      4     u32 config hash length L2, then L2 bytes
///   ..      16    u32 context_window, embedding_dim, hidden_dim, vocab_size
///   ..      8     u64 init seed
///   ..      8     u64 parameter count P (must equal the arch-derived count)
///   ..      8·P   theta, binary64
///   ..      8     u64 content hash (see content_hash)
///
/// Nothing may follow the hash.
std::vector<std::uint8_t> serialize_snapshot(const StepSnapshot& snapshot);
/// Throws CorruptionError on truncation, trailing bytes, bad magic, version
/// or hash mismatch.
StepSnapshot deserialize_snapshot(std::span<const std::uint8_t> bytes);

/// File name used by snapshot_store: "step_<t>_<16 hex hash>.bin".
std::string snapshot_file_name(const StepSnapshot& snapshot);

/// Writes the snapshot into `dir` (created if needed) and returns its path.
std::filesystem::path snapshot_store(const std::filesystem::path& dir, const StepSnapshot& snapshot);
/// Reads and verifies a snapshot. When the file name carries a hash in the
/// snapshot_file_name pattern it must match the embedded one.
StepSnapshot snapshot_load(const std::filesystem::path& path);

}  // namespace sdpo
