#include "sdpo/vocabulary.hpp"

#include "sdpo/errors.hpp"

namespace sdpo {

Vocabulary::Vocabulary(std::string_view characters) {
  if (characters.empty()) throw ConfigError("vocabulary needs at least one content character");
  lookup_.fill(-1);
  symbols_ = {"<pad>", "<bos>", "<eos>"};
  for (char c : characters) {
    auto& slot = lookup_[static_cast<unsigned char>(c)];
    if (slot >= 0) throw ConfigError(std::string("duplicate vocabulary character '") + c + "'");
    slot = static_cast<Token>(symbols_.size());
    symbols_.emplace_back(1, c);
  }
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(
      "abcdefghijklmnopqrstuvwxyz"
      "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
      "0123456789"
      " .,!?'-:");
  return vocab;
}

const std::string& Vocabulary::symbol(Token t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= symbols_.size()) {
    throw EncodingError("token index " + std::to_string(t) + " outside vocabulary of size " +
                        std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(t)];
}

Token Vocabulary::index_of(std::string_view symbol) const {
  if (symbol == "<pad>") return kPad;
  if (symbol == "<bos>") return kBos;
  if (symbol == "<eos>") return kEos;
  if (symbol.size() == 1 && contains(symbol[0])) return lookup_[static_cast<unsigned char>(symbol[0])];
  throw EncodingError("unknown symbol '" + std::string(symbol) + "'");
}

std::vector<Token> Vocabulary::encode(std::string_view text) const {
  std::vector<Token> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Token t = lookup_[static_cast<unsigned char>(text[i])];
    if (t < 0) {
      throw EncodingError("byte " + std::to_string(static_cast<unsigned char>(text[i])) +
                          " at offset " + std::to_string(i) + " is not in the vocabulary");
    }
    out.push_back(t);
  }
  return out;
}

std::string Vocabulary::decode(std::span<const Token> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t < kFirstContent) throw EncodingError("cannot decode special token " + std::to_string(t));
    out += symbol(t);
  }
  return out;
}

}  // namespace sdpo
