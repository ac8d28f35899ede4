#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bagg/dataset.hpp"
#include "bagg/model.hpp"
#include "bagg/textproc.hpp"

namespace bagg {

/// baseline: originals only, one loss per text.
/// standard: every text (original + augmented) is its own sampling unit.
/// bagg: whole groups are the sampling unit; predictions are pooled.
enum class TrainMode { Baseline, Standard, Bagg };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct OptimizerConfig {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  TrainMode mode = TrainMode::Bagg;
  int epochs = 30;
  /// Minibatch size in sampling units (texts, or groups under bagg).
  /// 0 selects the mode default: 8 groups for bagg, 32 texts otherwise.
  std::size_t batch_size = 0;
  double learning_rate = 1e-3;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  PoolSpace pool_space = PoolSpace::Probability;
  GroupNormalizer normalizer = GroupNormalizer::GroupSize;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  int vocab_min_count = 1;

  /// Throws std::invalid_argument on epochs < 1, learning_rate <= 0, etc.
  void validate() const;
  std::size_t effective_batch_size() const;
  LossOptions loss_options() const { return {pool_space, normalizer}; }
};

struct TrainedModel {
  ModelParams params;
  Vocab vocab;
  TrainConfig config;
  std::vector<double> epoch_losses;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ModelParams& params, const Gradients& grads) = 0;
};

class SgdOptimizer final : public Optimizer {
 public:
  explicit SgdOptimizer(double learning_rate) : learning_rate_(learning_rate) {}
  void step(ModelParams& params, const Gradients& grads) override;

 private:
  double learning_rate_;
};

/// Adam with bias-corrected moment estimates.
class AdamOptimizer final : public Optimizer {
 public:
  AdamOptimizer(double learning_rate, OptimizerConfig config);
  void step(ModelParams& params, const Gradients& grads) override;

 private:
  double learning_rate_;
  OptimizerConfig config_;
  long step_count_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

/// Vocabulary over the texts a mode trains on: originals, plus augmented
/// texts unless the mode is baseline.
Vocab build_training_vocab(const LabeledCorpus& train, TrainMode mode, int min_count = 1);

EncodedObservation encode_observation(const Observation& obs, const Vocab& vocab,
                                      bool include_augmented = true);
std::vector<EncodedObservation> encode_corpus(const LabeledCorpus& corpus, const Vocab& vocab,
                                              bool include_augmented = true);

using Batch = std::vector<EncodedObservation>;

/// standard/baseline: texts flattened into singleton groups (baseline keeps
/// originals only), shuffled, chunked by batch_size. bagg: whole groups
/// shuffled and chunked.
std::vector<Batch> make_batches(std::span<const EncodedObservation> corpus, TrainMode mode,
                                std::size_t batch_size, Rng& rng);

/// Called after every optimizer step with (epoch, batch index, batch loss).
using StepObserver = std::function<void(int epoch, std::size_t batch, double loss)>;

/// Deterministic given (corpus, vocab, config). Throws NonFiniteLossError
/// naming the epoch and batch when the loss diverges.
TrainedModel train(const LabeledCorpus& corpus, const Vocab& vocab, const TrainConfig& config,
                   const StepObserver& observer = {});

/// Fraction of test observations whose ORIGINAL text is classified correctly.
/// Augmented texts on the test side are ignored.
double evaluate(const ModelParams& params, const Vocab& vocab, const LabeledCorpus& test);
double evaluate(const TrainedModel& model, const LabeledCorpus& test);

}  // namespace bagg
