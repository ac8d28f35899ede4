#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace bagg {

/// Lowercase word tokens. Every token is non-empty and whitespace-free.
using TokenSeq = std::vector<std::string>;
using TokenIds = std::vector<int>;

/// Lowercases ASCII letters, splits on Unicode whitespace (UTF-8 input) and
/// strips leading/trailing ASCII punctuation from each token. Tokens that
/// become empty are dropped.
TokenSeq tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string detokenize(std::span<const std::string> tokens);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();

  /// Rebuilds a vocabulary from tokens listed in id order. The first two
  /// entries must be the PAD and UNK tokens.
  static Vocab from_tokens(std::vector<std::string> tokens, int min_count = 1);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  int min_count() const { return min_count_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Stable digest of the id assignment (hex), stored in checkpoints.
  std::string hash() const;

 private:
  friend Vocab build_vocab(std::span<const TokenSeq> corpus, int min_count);

  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int min_count_ = 1;
};

/// Ids are assigned by descending frequency, ties broken lexicographically.
/// Throws std::invalid_argument if min_count < 1.
Vocab build_vocab(std::span<const TokenSeq> corpus, int min_count = 1);

TokenIds encode(std::span<const std::string> seq, const Vocab& vocab);

using WordSet = std::unordered_set<std::string>;

/// One lowercase word per line; blank lines and '#' comment lines ignored.
WordSet load_word_list(const std::filesystem::path& path);
WordSet parse_word_list(std::string_view contents);

}  // namespace bagg
