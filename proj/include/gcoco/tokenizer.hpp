#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gcoco {

using TokenIds = std::vector<int>;

// Character-level vocabulary over printable ASCII.
//
// Layout: PAD=0, EOS=1, UNK=2, then 2 * kMaxGist placeholder ids reserved for
// gist-token initialization (instruction block first, then passage block),
// then one id per printable character.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kMaxGist = 20;
  static constexpr int kFirstGist = 3;
  static constexpr int kFirstChar = kFirstGist + 2 * kMaxGist;
  static constexpr char kLowChar = ' ';
  static constexpr char kHighChar = '~';

  static constexpr int size() { return kFirstChar + (kHighChar - kLowChar + 1); }

  // Placeholder id backing row `i` of the instruction / passage gist pool.
  static int instruction_gist_id(int i) { return kFirstGist + i; }
  static int passage_gist_id(int i) { return kFirstGist + kMaxGist + i; }

  static bool is_special(int id) { return id < kFirstChar; }

  // UTF-8 text to ids; unknown code points map to UNK and EOS is appended.
  TokenIds encode(std::string_view text) const;
  // Same, without the trailing EOS.
  TokenIds encode_raw(std::string_view text) const;
  // Drops PAD, EOS and gist placeholders; UNK becomes U+FFFD.
  std::string decode(const TokenIds& ids) const;

  int id_of(char c) const;
};

}  // namespace gcoco
