#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bagg/augment.hpp"
#include "bagg/observation.hpp"
#include "bagg/random.hpp"

namespace bagg {

struct LabeledCorpus {
  std::vector<Observation> observations;
  std::vector<std::string> categories;
  /// Source path followed by the filters applied, in order.
  std::vector<std::string> provenance;

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
  std::size_t num_categories() const { return categories.size(); }

  /// Observation counts per label index.
  std::vector<std::size_t> category_counts() const;

  /// Throws std::invalid_argument if names repeat or a label is out of range.
  void validate() const;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Each line: {"id": string, "text": string, "label": string}. Labels are
/// indexed by first appearance; unknown fields are ignored.
LabeledCorpus load_jsonl(const std::filesystem::path& path);
LabeledCorpus parse_jsonl(std::string_view contents, const std::string& source = "<memory>");

/// Writes the corpus back in the JSONL ingestion schema.
void write_jsonl(const std::filesystem::path& path, const LabeledCorpus& corpus);

/// CSV with header `id,text,label` (RFC 4180 quoting).
LabeledCorpus parse_csv(std::string_view contents, const std::string& source = "<memory>");
LabeledCorpus load_csv(const std::filesystem::path& path);

/// Keeps the k most populous categories (ties by name) relabelled to [0, k).
LabeledCorpus select_categories(const LabeledCorpus& corpus, std::size_t k);

/// Draws exactly n observations, spread evenly over categories; deficits of
/// small categories move to the others.
LabeledCorpus stratified_sample(const LabeledCorpus& corpus, std::size_t n, Rng& rng);

/// Per-category quotas used by stratified_sample (exposed for testing).
std::vector<std::size_t> stratified_quotas(const LabeledCorpus& corpus, std::size_t n);

struct SplitSpec {
  double train_fraction = 0.8;
  std::size_t sample_size = 100;
  std::size_t num_categories = 8;
  std::uint64_t repetition_seed = 0;

  void validate() const;
};

struct Split {
  LabeledCorpus train;
  LabeledCorpus test;
  std::vector<std::string> warnings;
};

/// Stratified train/test partition for one repetition.
Split split(const LabeledCorpus& corpus, const SplitSpec& spec, std::uint64_t rep_index);

struct AttachResult {
  LabeledCorpus corpus;
  std::vector<std::string> warnings;
};

/// Fills observations' augmented lists from cache records. Only records whose
/// method appears in `plan` are used, at most `count` per method, ordered by
/// plan then variant index. Apply to training splits only.
AttachResult attach_augmentations(const LabeledCorpus& corpus, std::span<const AugRecord> cache,
                                  const AugmentationPlan& plan);

/// Drops every augmented text (baseline view of a corpus).
LabeledCorpus strip_augmentations(const LabeledCorpus& corpus);

}  // namespace bagg
