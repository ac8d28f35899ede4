#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bagg/observation.hpp"
#include "bagg/random.hpp"
#include "bagg/textproc.hpp"

namespace bagg {

/// word -> synonyms. A word is eligible for replacement/insertion only if its
/// list is non-empty.
class Thesaurus {
 public:
  /// Appends synonyms for a head-word; duplicates and self-references are dropped.
  void add(const std::string& word, const std::vector<std::string>& synonyms);

  const std::vector<std::string>* find(const std::string& word) const;
  bool has_entry(const std::string& word) const { return find(word) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

/// Lines `word<TAB>syn1,syn2,...`; repeated head-words merge. Blank lines and
/// '#' comments are skipped. Throws std::runtime_error naming the bad line.
Thesaurus parse_thesaurus(std::string_view contents);
Thesaurus load_thesaurus(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// EDA operations

TokenSeq synonym_replace(const TokenSeq& seq, std::size_t n, const Thesaurus& thesaurus,
                         const WordSet& stopwords, Rng& rng);

/// `inserted`, when given, receives the number of successful insertions.
TokenSeq random_insert(const TokenSeq& seq, std::size_t n, const Thesaurus& thesaurus, Rng& rng,
                       std::size_t* inserted = nullptr);

TokenSeq random_swap(const TokenSeq& seq, std::size_t n, Rng& rng);

/// Deletes each token with probability p; never empties a non-empty input.
TokenSeq random_delete(const TokenSeq& seq, double p, Rng& rng);

inline constexpr double kDefaultEdaAlpha = 0.1;

/// Variant 0..3 selects synonym replacement, insertion, swap, deletion.
std::string eda_variant(std::string_view text, int variant_index, double alpha,
                        const Thesaurus& thesaurus, const WordSet& stopwords, Rng& rng);

// ---------------------------------------------------------------------------
// Back-translation

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A translation backend. Implementations must be safe to call concurrently.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string translate(const std::string& text, const std::string& source,
                                const std::string& target) = 0;
};

class IdentityTranslator final : public Translator {
 public:
  std::string translate(const std::string& text, const std::string&, const std::string&) override {
    return text;
  }
};

/// Offline stand-in for a real MT service. The outbound leg tags the text with
/// the pivot language; the return leg strips the tag and rotates the tokens by
/// an offset in [1, L) keyed on (text, route), so every route yields a fixed
/// paraphrase-like reordering.
class MockTranslator final : public Translator {
 public:
  std::string translate(const std::string& text, const std::string& source,
                        const std::string& target) override;
};

struct HttpTranslatorOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/translate
  std::chrono::milliseconds timeout{10000};
};

/// POSTs {"text","source","target"} JSON and reads {"text"} back.
class HttpTranslator final : public Translator {
 public:
  explicit HttpTranslator(HttpTranslatorOptions options);
  std::string translate(const std::string& text, const std::string& source,
                        const std::string& target) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  HttpTranslatorOptions options_;
};

/// Raised after all retries for one round trip are exhausted.
class BackTranslationError : public std::runtime_error {
 public:
  BackTranslationError(std::string route, std::string origin_id, const std::string& cause);
  const std::string& route() const { return route_; }
  const std::string& origin_id() const { return origin_id_; }

 private:
  std::string route_;
  std::string origin_id_;
};

/// en -> route -> en. `retries` extra attempts are made on TransportError.
std::string back_translate(const std::string& text, const std::string& route, Translator& client,
                           int retries = 0, const std::string& origin_id = {});

// ---------------------------------------------------------------------------
// Plans and provenance

struct AugMethod {
  enum class Kind { Eda, BackTranslate };

  Kind kind = Kind::Eda;
  std::string name;  // tag written into AugRecord::method, e.g. "eda", "bt_a"
  double eda_alpha = kDefaultEdaAlpha;
  std::vector<std::string> routes;

  static AugMethod eda(std::string name = "eda", double alpha = kDefaultEdaAlpha);
  static AugMethod back_translate(std::string name, std::vector<std::string> routes);

  /// Throws std::invalid_argument when the kind-specific fields are invalid.
  void validate() const;
};

struct AugRecord {
  std::string origin_id;
  std::string method;
  int variant_index = 0;
  std::string text;

  bool operator==(const AugRecord&) const = default;
};

struct AugmentationPlan {
  struct Entry {
    AugMethod method;
    int count = 4;
  };
  std::vector<Entry> methods;

  void validate() const;
  /// 1 (the original) + sum of counts.
  std::size_t group_size() const;
};

/// Everything augmentation needs besides the plan. `translators` maps a
/// back-translation method name to its client.
struct AugmentDeps {
  const Thesaurus* thesaurus = nullptr;
  const WordSet* stopwords = nullptr;
  std::unordered_map<std::string, Translator*> translators;
  std::uint64_t master_seed = 0;
  int retries = 2;
};

struct AugmentationResult {
  std::vector<AugmentedText> augmented;
  std::vector<AugRecord> records;  // one per augmented text, same order
  std::vector<std::string> warnings;
};

/// The RNG stream used for one variant.
Rng variant_rng(std::uint64_t master_seed, const std::string& origin_id, const std::string& method,
                int variant_index);

/// Produces the augmented part of one group. Failed or empty back-translations
/// are skipped with a warning; the original is never dropped.
AugmentationResult augment_text(const std::string& origin_id, const std::string& text,
                                const AugmentationPlan& plan, const AugmentDeps& deps);

/// Wraps augment_text into a full group. The label is copied unchanged.
Observation augment_observation(const std::string& id, const std::string& text, int label,
                                const AugmentationPlan& plan, const AugmentDeps& deps,
                                std::vector<AugRecord>* records = nullptr,
                                std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Cache files (JSON lines)

std::vector<AugRecord> read_aug_cache(const std::filesystem::path& path);
/// Rejects duplicate (origin_id, method, variant_index) keys.
void write_aug_cache(const std::filesystem::path& path, const std::vector<AugRecord>& records);

std::string aug_record_to_json(const AugRecord& record);
AugRecord aug_record_from_json(std::string_view line);

}  // namespace bagg
