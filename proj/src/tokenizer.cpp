#include "gcoco/tokenizer.hpp"

namespace gcoco {

int Vocab::id_of(char c) const {
  if (c < kLowChar || c > kHighChar) return kUnk;
  return kFirstChar + (c - kLowChar);
}

TokenIds Vocab::encode_raw(std::string_view text) const {
  TokenIds ids;
  ids.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    if (lead < 0x80) {
      ids.push_back(id_of(static_cast<char>(lead)));
      ++i;
      continue;
    }
    // Multi-byte code point: one UNK for the whole sequence.
    size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    size_t j = 1;
    while (j < len && i + j < text.size() && (static_cast<unsigned char>(text[i + j]) & 0xC0) == 0x80) ++j;
    ids.push_back(kUnk);
    i += j;
  }
  return ids;
}

TokenIds Vocab::encode(std::string_view text) const {
  TokenIds ids = encode_raw(text);
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(const TokenIds& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kUnk) {
      out += "\xEF\xBF\xBD";
    } else if (id >= kFirstChar && id < size()) {
      out += static_cast<char>(kLowChar + (id - kFirstChar));
    }
  }
  return out;
}

}  // namespace gcoco
