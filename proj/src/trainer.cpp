#include "bagg/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace bagg {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::Standard: return "standard";
    case TrainMode::Bagg: return "bagg";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "standard") return TrainMode::Standard;
  if (name == "bagg") return TrainMode::Bagg;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (embed_dim == 0 || hidden_dim == 0) throw std::invalid_argument("layer sizes must be positive");
  if (vocab_min_count < 1) throw std::invalid_argument("vocab_min_count must be >= 1");
  if (optimizer.kind == OptimizerConfig::Kind::Adam) {
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0)) {
      throw std::invalid_argument("invalid Adam hyperparameters");
    }
  }
}

std::size_t TrainConfig::effective_batch_size() const {
  if (batch_size > 0) return batch_size;
  return mode == TrainMode::Bagg ? 8 : 32;
}

// ---------------------------------------------------------------------------
// Optimizers

void SgdOptimizer::step(ModelParams& params, const Gradients& grads) {
  auto p = params.views();
  auto g = grads.views();
  for (std::size_t t = 0; t < ParamTensors::kNumTensors; ++t) {
    for (std::size_t i = 0; i < p[t].data.size(); ++i) p[t].data[i] -= learning_rate_ * g[t].data[i];
  }
}

AdamOptimizer::AdamOptimizer(double learning_rate, OptimizerConfig config)
    : learning_rate_(learning_rate), config_(config) {}

void AdamOptimizer::step(ModelParams& params, const Gradients& grads) {
  auto p = params.views();
  auto g = grads.views();
  if (first_moment_.empty()) {
    for (const auto& v : p) {
      first_moment_.emplace_back(v.data.size(), 0.0);
      second_moment_.emplace_back(v.data.size(), 0.0);
    }
  }
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t t = 0; t < ParamTensors::kNumTensors; ++t) {
    auto& m = first_moment_[t];
    auto& v = second_moment_[t];
    for (std::size_t i = 0; i < p[t].data.size(); ++i) {
      const double gi = g[t].data[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[t].data[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer.kind == OptimizerConfig::Kind::Sgd) {
    return std::make_unique<SgdOptimizer>(config.learning_rate);
  }
  return std::make_unique<AdamOptimizer>(config.learning_rate, config.optimizer);
}

// ---------------------------------------------------------------------------
// Data plumbing

Vocab build_training_vocab(const LabeledCorpus& train, TrainMode mode, int min_count) {
  std::vector<TokenSeq> texts;
  for (const auto& o : train.observations) {
    texts.push_back(tokenize(o.original));
    if (mode == TrainMode::Baseline) continue;
    for (const auto& a : o.augmented) texts.push_back(tokenize(a.text));
  }
  return build_vocab(texts, min_count);
}

EncodedObservation encode_observation(const Observation& obs, const Vocab& vocab,
                                      bool include_augmented) {
  EncodedObservation e;
  e.label = obs.label;
  e.texts.push_back(encode(tokenize(obs.original), vocab));
  if (include_augmented) {
    for (const auto& a : obs.augmented) e.texts.push_back(encode(tokenize(a.text), vocab));
  }
  return e;
}

std::vector<EncodedObservation> encode_corpus(const LabeledCorpus& corpus, const Vocab& vocab,
                                              bool include_augmented) {
  std::vector<EncodedObservation> out;
  out.reserve(corpus.size());
  for (const auto& o : corpus.observations) out.push_back(encode_observation(o, vocab, include_augmented));
  return out;
}

std::vector<Batch> make_batches(std::span<const EncodedObservation> corpus, TrainMode mode,
                                std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<EncodedObservation> units;
  if (mode == TrainMode::Bagg) {
    units.assign(corpus.begin(), corpus.end());
  } else {
    for (const auto& obs : corpus) {
      const std::size_t take = mode == TrainMode::Baseline ? std::min<std::size_t>(1, obs.texts.size())
                                                           : obs.texts.size();
      for (std::size_t j = 0; j < take; ++j) units.push_back({{obs.texts[j]}, obs.label});
    }
  }
  rng.shuffle(units);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < units.size(); start += batch_size) {
    const std::size_t end = std::min(units.size(), start + batch_size);
    batches.emplace_back(std::make_move_iterator(units.begin() + static_cast<std::ptrdiff_t>(start)),
                         std::make_move_iterator(units.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Training

TrainedModel train(const LabeledCorpus& corpus, const Vocab& vocab, const TrainConfig& config,
                   const StepObserver& observer) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("cannot train on an empty corpus");
  corpus.validate();

  ModelDims dims{vocab.size(), config.embed_dim, config.hidden_dim, corpus.num_categories()};
  Rng init_rng = derive_rng(config.seed, {"init"});
  TrainedModel model{ModelParams::initialize(dims, init_rng), vocab, config, {}};

  const auto encoded = encode_corpus(corpus, vocab, config.mode != TrainMode::Baseline);
  auto optimizer = make_optimizer(config);
  const auto options = config.loss_options();
  const std::size_t batch_size = config.effective_batch_size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(SeedKey(config.seed).add("epoch").add(static_cast<std::uint64_t>(epoch)).value());
    const auto batches = make_batches(encoded, config.mode, batch_size, epoch_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      LossResult step;
      try {
        step = config.mode == TrainMode::Bagg ? loss_bagg(batches[b], model.params, options)
                                              : loss_standard(batches[b], model.params, options);
      } catch (const NonFiniteLossError& e) {
        throw NonFiniteLossError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b));
      }
      optimizer->step(model.params, step.grads);
      total += step.loss;
      if (observer) observer(epoch, b, step.loss);
    }
    model.epoch_losses.push_back(total / static_cast<double>(batches.size()));
  }
  return model;
}

double evaluate(const ModelParams& params, const Vocab& vocab, const LabeledCorpus& test) {
  if (test.empty()) throw std::invalid_argument("cannot evaluate on an empty test corpus");
  std::size_t correct = 0;
  for (const auto& o : test.observations) {
    if (o.label < 0 || static_cast<std::size_t>(o.label) >= params.dims.classes) {
      throw std::out_of_range("test label outside the model's classes");
    }
    if (predict(encode(tokenize(o.original), vocab), params).label == o.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double evaluate(const TrainedModel& model, const LabeledCorpus& test) {
  return evaluate(model.params, model.vocab, test);
}

}  // namespace bagg
