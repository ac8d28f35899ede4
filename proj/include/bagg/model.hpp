#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bagg/random.hpp"
#include "bagg/textproc.hpp"

namespace bagg {

struct ModelDims {
  std::size_t vocab = 2;
  std::size_t embed = 64;
  std::size_t hidden = 128;
  std::size_t classes = 2;

  bool operator==(const ModelDims&) const = default;
};

/// Where group predictions are averaged: class probabilities (default) or
/// pre-softmax logits.
enum class PoolSpace { Probability, Logit };

std::string_view to_string(PoolSpace space);
PoolSpace parse_pool_space(std::string_view name);  // "prob" | "logit"

/// Inner normalizer of the per-text loss. GroupSize divides a group's summed
/// loss by its number of texts; AugmentedCount divides by the number of
/// augmented texts only (literal form, kept for fidelity experiments).
enum class GroupNormalizer { GroupSize, AugmentedCount };

/// Storage shared by parameters and gradients.
///
/// Layout (row-major):
///   embedding      vocab x embed
///   hidden_weight  embed x hidden
///   hidden_bias    hidden
///   output_weight  hidden x classes
///   output_bias    classes
/// `pooling` holds pooling-layer parameters; it is empty for mean pooling.
struct ParamTensors {
  ModelDims dims;
  std::vector<double> embedding;
  std::vector<double> hidden_weight;
  std::vector<double> hidden_bias;
  std::vector<double> output_weight;
  std::vector<double> output_bias;
  std::vector<double> pooling;

  struct View {
    std::string_view name;
    std::span<double> data;
  };
  struct ConstView {
    std::string_view name;
    std::span<const double> data;
  };

  static constexpr std::size_t kNumTensors = 5;
  /// Tensors in declaration order (the checkpoint order).
  std::array<View, kNumTensors> views();
  std::array<ConstView, kNumTensors> views() const;

  std::size_t parameter_count() const;
  bool all_finite() const;

 protected:
  void allocate(const ModelDims& d);
};

struct Gradients : ParamTensors {
  static Gradients zeros(const ModelDims& dims);
  Gradients& operator+=(const Gradients& other);
};

struct ModelParams : ParamTensors {
  /// Glorot-uniform weights, zero biases, embeddings uniform(-0.05, 0.05).
  static ModelParams initialize(const ModelDims& dims, Rng& rng);
  static ModelParams zeros(const ModelDims& dims);

  /// Throws std::invalid_argument on shape mismatch or non-finite values.
  void validate() const;
};

struct ClassDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t k) const { return probs[k]; }
  /// Index of the largest probability; ties resolve to the lowest index.
  int argmax() const;
};

/// A group of encoded texts sharing one label; texts[0] is the original.
struct EncodedObservation {
  std::vector<TokenIds> texts;
  int label = 0;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// tanh(W1^T mean(E[ids]) + b1). An empty id list uses the zero vector.
std::vector<double> encode_text(std::span<const int> ids, const ModelParams& params);

std::vector<double> head_logits(std::span<const double> hidden, const ModelParams& params);
ClassDistribution softmax(std::span<const double> logits);
ClassDistribution head(std::span<const double> hidden, const ModelParams& params);

/// Element-wise mean of probability vectors. Throws on empty input or
/// mismatched lengths.
ClassDistribution pool(std::span<const ClassDistribution> outputs);
/// softmax of the element-wise mean of logit vectors.
ClassDistribution pool_logits(std::span<const std::vector<double>> logits);

struct LossOptions {
  PoolSpace pool_space = PoolSpace::Probability;
  GroupNormalizer normalizer = GroupNormalizer::GroupSize;
};

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

/// Per-text cross-entropy averaged within each group, then over groups:
///   J = (1/n) sum_i (1/m_i) sum_j CE(h(x_ij), y_i)
LossResult loss_standard(std::span<const EncodedObservation> batch, const ModelParams& params,
                         const LossOptions& options = {});

/// One cross-entropy term per group on the pooled prediction:
///   J' = (1/n) sum_i CE(pool_j h(x_ij), y_i)
LossResult loss_bagg(std::span<const EncodedObservation> batch, const ModelParams& params,
                     const LossOptions& options = {});

/// Loss values only (no gradient buffers).
double loss_standard_value(std::span<const EncodedObservation> batch, const ModelParams& params,
                           const LossOptions& options = {});
double loss_bagg_value(std::span<const EncodedObservation> batch, const ModelParams& params,
                       const LossOptions& options = {});

/// Per-text cross-entropy of every text in a group against `label`.
std::vector<double> text_losses(const EncodedObservation& group, const ModelParams& params);
double cross_entropy(std::span<const int> ids, int label, const ModelParams& params);

struct Prediction {
  ClassDistribution distribution;
  int label = 0;
};

Prediction predict(std::span<const int> ids, const ModelParams& params);

enum class LossKind { Standard, Bagg };

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients with central finite differences on every
/// parameter. Relative error is |a - n| / max(|a|, |n|, floor); a pair of
/// exact zeros counts as error 0.
GradientCheckReport check_gradients(const ModelParams& params,
                                    std::span<const EncodedObservation> batch, double epsilon,
                                    LossKind kind, const LossOptions& options = {},
                                    double floor = 1e-6);

// ---------------------------------------------------------------------------
// Checkpoints: "BAGG1", u64 LE header length, JSON header, then each tensor
// as little-endian f64 in declaration order.

struct Checkpoint {
  ModelParams params;
  PoolSpace pool_space = PoolSpace::Probability;
  Vocab vocab;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bagg
