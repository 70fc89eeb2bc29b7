#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdpo {

using Token = std::int32_t;

/// Character vocabulary. Indices 0..2 are reserved for PAD, BOS and EOS in
/// every vocabulary (and every policy); content characters follow in the
/// order given at construction.
class Vocabulary {
 public:
  static constexpr Token kPad = 0;
  static constexpr Token kBos = 1;
  static constexpr Token kEos = 2;
  static constexpr Token kFirstContent = 3;

  /// `characters` must be non-empty and free of duplicates.
  explicit Vocabulary(std::string_view characters);

  /// 26 + 26 letters, 10 digits and " .,!?'-:" (70 characters, size 73).
  static const Vocabulary& standard();

  std::size_t size() const { return symbols_.size(); }

  /// Symbol text of an index: the character itself, or "<pad>", "<bos>",
  /// "<eos>" for the specials.
  const std::string& symbol(Token t) const;
  /// Inverse of symbol(). Throws EncodingError for unknown symbols.
  Token index_of(std::string_view symbol) const;

  /// Encodes content text. Throws EncodingError naming the offending
  /// character and its offset.
  std::vector<Token> encode(std::string_view text) const;
  /// Decodes content tokens; throws EncodingError on specials or
  /// out-of-range indices.
  std::string decode(std::span<const Token> tokens) const;

  bool contains(char c) const { return lookup_[static_cast<unsigned char>(c)] >= 0; }

 private:
  std::vector<std::string> symbols_;
  std::array<Token, 256> lookup_{};
};

}  // namespace sdpo
