#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bagg/augment.hpp"
#include "bagg/dataset.hpp"
#include "bagg/model.hpp"
#include "bagg/trainer.hpp"

namespace bagg {

// ---------------------------------------------------------------------------
// Augmentation methods used by the benchmark grid

inline constexpr std::string_view kBaselineMethod = "none";
inline constexpr int kDefaultAugmentationsPerMethod = 4;

/// Plan for a named benchmark method: "eda", "bt_a" (zh, ja, ko, hi),
/// "bt_b" (fr, pt, es, it) or "combined" (all three). Throws on other names.
AugmentationPlan method_plan(std::string_view method, int count = kDefaultAugmentationsPerMethod,
                             double eda_alpha = kDefaultEdaAlpha);

/// Methods whose cache records a benchmark method needs.
std::vector<std::string> method_sources(std::string_view method);

/// Sort key placing eda, bt_a, bt_b, combined first, then others by name.
int method_rank(std::string_view method);

// ---------------------------------------------------------------------------
// Experiment grid

struct ExperimentConfig {
  std::vector<std::size_t> sample_sizes{100, 200};
  std::vector<std::size_t> num_categories{8, 12};
  std::vector<std::string> methods{"eda", "bt_a", "bt_b", "combined"};
  std::vector<TrainMode> modes{TrainMode::Baseline, TrainMode::Standard, TrainMode::Bagg};
  int repetitions = 25;
  std::uint64_t master_seed = 0;
  double train_fraction = 0.8;
  /// Mode and batch size are set per job; batch_size 0 keeps the mode default.
  TrainConfig trainer;
  unsigned threads = 1;
  /// When set, finished rows are cached here and reused on later runs.
  std::optional<std::filesystem::path> cache_dir;

  void validate() const;
};

struct ResultRow {
  std::size_t sample_size = 0;
  std::size_t num_categories = 0;
  std::string mode;
  std::string method;
  double mean_accuracy = 0.0;
  double std_dev = 0.0;
  int repetitions = 0;
  std::uint64_t seed = 0;
  /// Per-repetition accuracies (not written to results.csv).
  std::vector<double> accuracies;
};

struct SkippedCell {
  std::size_t sample_size = 0;
  std::size_t num_categories = 0;
  std::string method;
  std::string reason;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<SkippedCell> skipped;

  const ResultRow* find(std::size_t n, std::size_t c, std::string_view mode,
                        std::string_view method) const;
};

/// Augmentation records by source method name ("eda", "bt_a", ...).
using AugmentationStore = std::map<std::string, std::vector<AugRecord>>;

/// Reads every `<method>.jsonl` file in a directory.
AugmentationStore load_augmentation_dir(const std::filesystem::path& dir);

/// For each (sample size, categories) cell and repetition: stratified sample,
/// 80/20 split, attach augmentations to the training side, train, evaluate on
/// original test texts. Subsamples and splits depend only on (seed, n, C,
/// rep), and training seeds on (seed, n, C, method, rep), so every mode and
/// method sees identical data and removing a cell never changes another.
ResultTable run_experiment(const LabeledCorpus& corpus, const AugmentationStore& augmentations,
                           const ExperimentConfig& config);

void write_results_csv(const std::filesystem::path& path, const ResultTable& table);
ResultTable parse_results_csv(std::string_view contents);
ResultTable read_results_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports

enum class TableFormat { Markdown, Csv };

/// Markdown: one row per (sample size, categories) with columns Baseline,
/// Standard x method, BAGG x method; accuracies as percentages with two
/// decimals, "—" for missing cells. Csv: the long results.csv layout.
std::string format_table(const ResultTable& table, TableFormat format);

/// Grouped bar chart, one group per (sample size, categories) and one bar
/// per (mode, method); y axis 0-100%.
std::string render_chart(const ResultTable& table);

struct ChartGeometry {
  static constexpr double kPlotTop = 40.0;
  static constexpr double kPlotHeight = 300.0;
};

// ---------------------------------------------------------------------------
// Correlation between per-text losses

struct CorrelationReport {
  double within_group_corr = 0.0;
  double cross_group_corr = 0.0;
  std::size_t within_pairs = 0;
  std::size_t cross_pairs = 0;
  std::size_t groups = 0;
  double texts_per_group = 0.0;
  /// One-sided Fisher-z p-value for within_group_corr > 0.
  double within_p_value = 1.0;
  /// One-sided Fisher-z p-value for within_group_corr > cross_group_corr.
  double difference_p_value = 1.0;
  /// Set when a loss sample has zero variance; correlations are then NaN.
  bool degenerate = false;
};

/// Within-group r over every intra-group pair (j < j'); cross-group r over
/// the same number of random pairs drawn from different groups.
CorrelationReport correlation_from_losses(const std::vector<std::vector<double>>& losses, Rng& rng);

/// Requires at least 50 groups of size >= 3.
CorrelationReport correlation_study(std::span<const EncodedObservation> groups,
                                    const ModelParams& params, Rng& rng);

double pearson(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticConfig {
  std::size_t classes = 8;
  std::size_t size = 400;
  /// Probability that a noise word is another class's keyword.
  double noise_level = 0.1;
  /// Per-slot probability that a signature word is dropped.
  double dropout = 0.1;
  /// Probability that a signature word appears as one of its synonyms.
  double synonym_rate = 0.5;
  std::size_t keywords_per_class = 3;
  std::size_t synonyms_per_keyword = 2;
  std::size_t filler_vocabulary = 300;
  std::size_t min_signature = 2, max_signature = 4;
  std::size_t min_noise = 5, max_noise = 15;
};

struct SyntheticCorpus {
  LabeledCorpus corpus;
  /// Links each keyword with its synonyms (both directions).
  Thesaurus thesaurus;
  /// Every signature surface form (keyword or synonym) -> its class.
  std::unordered_map<std::string, int> signature_class;
};

/// Each class owns `keywords_per_class` keywords; a text holds 2-4
/// signature words plus 5-15 noise words in random order. Class counts are
/// balanced to within one.
SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config, Rng& rng);

/// Augments every observation of a corpus into cache records.
std::vector<AugRecord> augment_corpus(const LabeledCorpus& corpus, const AugmentationPlan& plan,
                                      const AugmentDeps& deps,
                                      std::vector<std::string>* warnings = nullptr);

}  // namespace bagg
