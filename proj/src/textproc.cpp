#include "bagg/textproc.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bagg/random.hpp"

namespace bagg {
namespace {

// Length in bytes of a whitespace code point starting at text[pos], 0 if the
// code point is not whitespace.
std::size_t whitespace_length(std::string_view text, std::size_t pos) {
  const auto byte = [&](std::size_t k) {
    return pos + k < text.size() ? static_cast<unsigned char>(text[pos + k]) : 0u;
  };
  unsigned char c0 = byte(0);
  if (c0 == ' ' || (c0 >= 0x09 && c0 <= 0x0d)) return 1;
  if (c0 == 0xc2 && (byte(1) == 0x85 || byte(1) == 0xa0)) return 2;
  if (c0 == 0xe1 && byte(1) == 0x9a && byte(2) == 0x80) return 3;  // U+1680
  if (c0 == 0xe2 && byte(1) == 0x80) {
    unsigned char c2 = byte(2);
    // U+2000..U+200A, U+2028, U+2029, U+202F
    if ((c2 >= 0x80 && c2 <= 0x8a) || c2 == 0xa8 || c2 == 0xa9 || c2 == 0xaf) return 3;
  }
  if (c0 == 0xe2 && byte(1) == 0x81 && byte(2) == 0x9f) return 3;  // U+205F
  if (c0 == 0xe3 && byte(1) == 0x80 && byte(2) == 0x80) return 3;  // U+3000
  return 0;
}

bool is_ascii_punct(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return (u >= 0x21 && u <= 0x2f) || (u >= 0x3a && u <= 0x40) || (u >= 0x5b && u <= 0x60) ||
         (u >= 0x7b && u <= 0x7e);
}

void flush_token(std::string& raw, TokenSeq& out) {
  std::size_t b = 0, e = raw.size();
  while (b < e && is_ascii_punct(raw[b])) ++b;
  while (e > b && is_ascii_punct(raw[e - 1])) --e;
  if (b < e) {
    std::string token = raw.substr(b, e - b);
    for (char& c : token) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    out.push_back(std::move(token));
  }
  raw.clear();
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string raw;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (std::size_t ws = whitespace_length(text, pos)) {
      flush_token(raw, out);
      pos += ws;
    } else {
      raw.push_back(text[pos++]);
    }
  }
  flush_token(raw, out);
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  append(std::string(kPadToken));
  append(std::string(kUnkToken));
}

void Vocab::append(std::string token) {
  int next = static_cast<int>(tokens_.size());
  if (!ids_.emplace(token, next).second) {
    throw std::invalid_argument("duplicate vocabulary token: " + token);
  }
  tokens_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, int min_count) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw std::invalid_argument("vocabulary must start with <pad>, <unk>");
  }
  Vocab v;
  v.min_count_ = min_count;
  for (std::size_t i = 2; i < tokens.size(); ++i) v.append(std::move(tokens[i]));
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::string Vocab::hash() const {
  SeedKey key(0);
  for (const auto& t : tokens_) key.add(t);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(key.value()));
  return buf;
}

Vocab build_vocab(std::span<const TokenSeq> corpus, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [word, n] : counts) {
    if (n >= static_cast<std::size_t>(min_count)) entries.emplace_back(word, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  v.min_count_ = min_count;
  for (auto& e : entries) {
    // Corpus words that collide with the special markers stay UNK.
    if (e.first == Vocab::kPadToken || e.first == Vocab::kUnkToken) continue;
    v.append(std::move(e.first));
  }
  return v;
}

TokenIds encode(std::span<const std::string> seq, const Vocab& vocab) {
  TokenIds ids;
  ids.reserve(seq.size());
  for (const auto& t : seq) ids.push_back(vocab.id(t));
  return ids;
}

WordSet parse_word_list(std::string_view contents) {
  WordSet words;
  std::istringstream in{std::string(contents)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t");
    words.insert(line.substr(b, e - b + 1));
  }
  return words;
}

WordSet load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open word list: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_word_list(buf.str());
}

}  // namespace bagg
