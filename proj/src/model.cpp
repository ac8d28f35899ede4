#include "bagg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace bagg {

using json = nlohmann::json;

std::string_view to_string(PoolSpace space) {
  return space == PoolSpace::Probability ? "prob" : "logit";
}

PoolSpace parse_pool_space(std::string_view name) {
  if (name == "prob") return PoolSpace::Probability;
  if (name == "logit") return PoolSpace::Logit;
  throw std::invalid_argument("unknown pool space '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Tensors

void ParamTensors::allocate(const ModelDims& d) {
  dims = d;
  embedding.assign(d.vocab * d.embed, 0.0);
  hidden_weight.assign(d.embed * d.hidden, 0.0);
  hidden_bias.assign(d.hidden, 0.0);
  output_weight.assign(d.hidden * d.classes, 0.0);
  output_bias.assign(d.classes, 0.0);
  pooling.clear();
}

std::array<ParamTensors::View, ParamTensors::kNumTensors> ParamTensors::views() {
  return {{{"embedding", embedding},
           {"hidden_weight", hidden_weight},
           {"hidden_bias", hidden_bias},
           {"output_weight", output_weight},
           {"output_bias", output_bias}}};
}

std::array<ParamTensors::ConstView, ParamTensors::kNumTensors> ParamTensors::views() const {
  return {{{"embedding", embedding},
           {"hidden_weight", hidden_weight},
           {"hidden_bias", hidden_bias},
           {"output_weight", output_weight},
           {"output_bias", output_bias}}};
}

std::size_t ParamTensors::parameter_count() const {
  std::size_t n = pooling.size();
  for (const auto& v : views()) n += v.data.size();
  return n;
}

bool ParamTensors::all_finite() const {
  for (const auto& v : views()) {
    for (double x : v.data) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

Gradients Gradients::zeros(const ModelDims& dims) {
  Gradients g;
  g.allocate(dims);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (!(dims == other.dims)) throw std::invalid_argument("gradient shapes differ");
  auto mine = views();
  auto theirs = other.views();
  for (std::size_t t = 0; t < kNumTensors; ++t) {
    for (std::size_t i = 0; i < mine[t].data.size(); ++i) mine[t].data[i] += theirs[t].data[i];
  }
  return *this;
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  ModelParams p;
  p.allocate(dims);
  return p;
}

ModelParams ModelParams::initialize(const ModelDims& dims, Rng& rng) {
  ModelParams p = zeros(dims);
  for (double& x : p.embedding) x = rng.uniform(-0.05, 0.05);
  const auto glorot = [&](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
  };
  glorot(p.hidden_weight, dims.embed, dims.hidden);
  glorot(p.output_weight, dims.hidden, dims.classes);
  return p;
}

void ModelParams::validate() const {
  const auto& d = dims;
  if (d.vocab == 0 || d.embed == 0 || d.hidden == 0 || d.classes == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (embedding.size() != d.vocab * d.embed || hidden_weight.size() != d.embed * d.hidden ||
      hidden_bias.size() != d.hidden || output_weight.size() != d.hidden * d.classes ||
      output_bias.size() != d.classes) {
    throw std::invalid_argument("parameter tensor shapes do not match dims");
  }
  if (!pooling.empty()) throw std::invalid_argument("mean pooling takes no parameters");
  if (!all_finite()) throw std::invalid_argument("non-finite model parameter");
}

int ClassDistribution::argmax() const {
  if (probs.empty()) throw std::invalid_argument("argmax of empty distribution");
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

double log_sum_exp(std::span<const double> xs) {
  double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

struct TextForward {
  std::span<const int> ids;
  std::vector<double> mean_embedding;  // embed
  std::vector<double> activation;      // hidden (post-tanh)
  std::vector<double> logits;          // classes
  double log_norm = 0.0;               // logsumexp(logits)

  double log_prob(int k) const { return logits[static_cast<std::size_t>(k)] - log_norm; }
};

void check_ids(std::span<const int> ids, const ModelDims& d) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= d.vocab) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(d.vocab));
    }
  }
}

void check_label(int label, const ModelDims& d) {
  if (label < 0 || static_cast<std::size_t>(label) >= d.classes) {
    throw std::out_of_range("label " + std::to_string(label) + " outside " +
                            std::to_string(d.classes) + " classes");
  }
}

TextForward forward(std::span<const int> ids, const ModelParams& p) {
  const auto& d = p.dims;
  check_ids(ids, d);
  TextForward f;
  f.ids = ids;
  f.mean_embedding.assign(d.embed, 0.0);
  if (!ids.empty()) {
    for (int id : ids) {
      const double* row = &p.embedding[static_cast<std::size_t>(id) * d.embed];
      for (std::size_t k = 0; k < d.embed; ++k) f.mean_embedding[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (double& x : f.mean_embedding) x *= inv;
  }
  f.activation = p.hidden_bias;
  for (std::size_t k = 0; k < d.embed; ++k) {
    const double e = f.mean_embedding[k];
    const double* w = &p.hidden_weight[k * d.hidden];
    for (std::size_t h = 0; h < d.hidden; ++h) f.activation[h] += e * w[h];
  }
  for (double& a : f.activation) a = std::tanh(a);
  f.logits = p.output_bias;
  for (std::size_t h = 0; h < d.hidden; ++h) {
    const double a = f.activation[h];
    const double* w = &p.output_weight[h * d.classes];
    for (std::size_t c = 0; c < d.classes; ++c) f.logits[c] += a * w[c];
  }
  f.log_norm = log_sum_exp(f.logits);
  return f;
}

// Accumulates the gradient of a loss whose derivative w.r.t. this text's
// logits is `dlogits`.
void backward(const TextForward& f, std::span<const double> dlogits, const ModelParams& p,
              Gradients& g) {
  const auto& d = p.dims;
  std::vector<double> dact(d.hidden, 0.0);
  for (std::size_t h = 0; h < d.hidden; ++h) {
    const double a = f.activation[h];
    const double* w = &p.output_weight[h * d.classes];
    double* gw = &g.output_weight[h * d.classes];
    double acc = 0.0;
    for (std::size_t c = 0; c < d.classes; ++c) {
      gw[c] += a * dlogits[c];
      acc += w[c] * dlogits[c];
    }
    dact[h] = acc * (1.0 - a * a);  // through tanh
  }
  for (std::size_t c = 0; c < d.classes; ++c) g.output_bias[c] += dlogits[c];
  for (std::size_t h = 0; h < d.hidden; ++h) g.hidden_bias[h] += dact[h];

  std::vector<double> demb(d.embed, 0.0);
  for (std::size_t k = 0; k < d.embed; ++k) {
    const double e = f.mean_embedding[k];
    const double* w = &p.hidden_weight[k * d.hidden];
    double* gw = &g.hidden_weight[k * d.hidden];
    double acc = 0.0;
    for (std::size_t h = 0; h < d.hidden; ++h) {
      gw[h] += e * dact[h];
      acc += w[h] * dact[h];
    }
    demb[k] = acc;
  }
  if (f.ids.empty()) return;
  const double inv = 1.0 / static_cast<double>(f.ids.size());
  for (int id : f.ids) {
    double* row = &g.embedding[static_cast<std::size_t>(id) * d.embed];
    for (std::size_t k = 0; k < d.embed; ++k) row[k] += demb[k] * inv;
  }
}

void require_finite(double loss, const char* which) {
  if (!std::isfinite(loss)) {
    throw NonFiniteLossError(std::string(which) + " loss is not finite");
  }
}

double group_normalizer(std::size_t group_size, GroupNormalizer mode) {
  if (mode == GroupNormalizer::GroupSize) return static_cast<double>(group_size);
  // The literal form divides by the augmented count; a lone original keeps 1.
  return static_cast<double>(std::max<std::size_t>(group_size - 1, 1));
}

double standard_impl(std::span<const EncodedObservation> batch, const ModelParams& params,
                     const LossOptions& options, Gradients* grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double n = static_cast<double>(batch.size());
  const std::size_t classes = params.dims.classes;
  std::vector<double> dlogits(classes);
  double loss = 0.0;
  for (const auto& obs : batch) {
    if (obs.texts.empty()) throw std::invalid_argument("observation without texts");
    check_label(obs.label, params.dims);
    // Divide rather than multiply by a reciprocal: with singleton groups this
    // reproduces the BAGG arithmetic bit for bit.
    const double denom = n * group_normalizer(obs.texts.size(), options.normalizer);
    for (const auto& ids : obs.texts) {
      TextForward f = forward(ids, params);
      loss += -f.log_prob(obs.label) / denom;
      if (!grads) continue;
      for (std::size_t c = 0; c < classes; ++c) {
        dlogits[c] = std::exp(f.log_prob(static_cast<int>(c))) / denom;
      }
      dlogits[static_cast<std::size_t>(obs.label)] -= 1.0 / denom;
      backward(f, dlogits, params, *grads);
    }
  }
  require_finite(loss, "standard");
  return loss;
}

double bagg_impl(std::span<const EncodedObservation> batch, const ModelParams& params,
                 const LossOptions& options, Gradients* grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double n = static_cast<double>(batch.size());
  const std::size_t classes = params.dims.classes;
  std::vector<double> dlogits(classes);
  double loss = 0.0;
  for (const auto& obs : batch) {
    if (obs.texts.empty()) throw std::invalid_argument("observation without texts");
    check_label(obs.label, params.dims);
    const auto y = static_cast<std::size_t>(obs.label);
    const double m = static_cast<double>(obs.texts.size());
    std::vector<TextForward> fwd;
    fwd.reserve(obs.texts.size());
    for (const auto& ids : obs.texts) fwd.push_back(forward(ids, params));

    if (options.pool_space == PoolSpace::Probability) {
      // log q_y = logsumexp_j(log p_jy) - log m, kept in log space so a tiny
      // pooled probability does not underflow.
      std::vector<double> log_py(fwd.size());
      for (std::size_t j = 0; j < fwd.size(); ++j) log_py[j] = fwd[j].log_prob(obs.label);
      const double lse = log_sum_exp(log_py);
      loss += -(lse - std::log(m)) / n;
      if (!grads) continue;
      // dL/dz_j = (r_j / n) (p_j - e_y) with r_j = p_jy / sum_j' p_j'y.
      for (std::size_t j = 0; j < fwd.size(); ++j) {
        const double r = std::exp(log_py[j] - lse);
        for (std::size_t c = 0; c < classes; ++c) {
          dlogits[c] = r * std::exp(fwd[j].log_prob(static_cast<int>(c))) / n;
        }
        dlogits[y] -= r / n;
        backward(fwd[j], dlogits, params, *grads);
      }
    } else {
      std::vector<double> mean_logits(classes, 0.0);
      for (const auto& f : fwd) {
        for (std::size_t c = 0; c < classes; ++c) mean_logits[c] += f.logits[c];
      }
      for (double& z : mean_logits) z /= m;
      const double lse = log_sum_exp(mean_logits);
      loss += (lse - mean_logits[y]) / n;
      if (!grads) continue;
      for (std::size_t c = 0; c < classes; ++c) {
        dlogits[c] = std::exp(mean_logits[c] - lse) / (n * m);
      }
      dlogits[y] -= 1.0 / (n * m);
      for (const auto& f : fwd) backward(f, dlogits, params, *grads);
    }
  }
  require_finite(loss, "bagg");
  return loss;
}

}  // namespace

std::vector<double> encode_text(std::span<const int> ids, const ModelParams& params) {
  return forward(ids, params).activation;
}

std::vector<double> head_logits(std::span<const double> hidden, const ModelParams& params) {
  const auto& d = params.dims;
  if (hidden.size() != d.hidden) throw std::invalid_argument("hidden vector has wrong size");
  std::vector<double> z = params.output_bias;
  for (std::size_t h = 0; h < d.hidden; ++h) {
    for (std::size_t c = 0; c < d.classes; ++c) z[c] += hidden[h] * params.output_weight[h * d.classes + c];
  }
  return z;
}

ClassDistribution softmax(std::span<const double> logits) {
  ClassDistribution out;
  if (logits.empty()) return out;
  const double hi = *std::max_element(logits.begin(), logits.end());
  out.probs.resize(logits.size());
  double s = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) s += out.probs[c] = std::exp(logits[c] - hi);
  for (double& p : out.probs) p /= s;
  return out;
}

ClassDistribution head(std::span<const double> hidden, const ModelParams& params) {
  return softmax(head_logits(hidden, params));
}

ClassDistribution pool(std::span<const ClassDistribution> outputs) {
  if (outputs.empty()) throw std::invalid_argument("cannot pool an empty group");
  const std::size_t c = outputs.front().size();
  ClassDistribution out;
  out.probs.assign(c, 0.0);
  for (const auto& o : outputs) {
    if (o.size() != c) throw std::invalid_argument("pooled distributions differ in length");
    for (std::size_t k = 0; k < c; ++k) out.probs[k] += o.probs[k];
  }
  const double inv = 1.0 / static_cast<double>(outputs.size());
  for (double& p : out.probs) p *= inv;
  return out;
}

ClassDistribution pool_logits(std::span<const std::vector<double>> logits) {
  if (logits.empty()) throw std::invalid_argument("cannot pool an empty group");
  const std::size_t c = logits.front().size();
  std::vector<double> mean(c, 0.0);
  for (const auto& z : logits) {
    if (z.size() != c) throw std::invalid_argument("pooled logit vectors differ in length");
    for (std::size_t k = 0; k < c; ++k) mean[k] += z[k];
  }
  for (double& z : mean) z /= static_cast<double>(logits.size());
  return softmax(mean);
}

LossResult loss_standard(std::span<const EncodedObservation> batch, const ModelParams& params,
                         const LossOptions& options) {
  LossResult r{0.0, Gradients::zeros(params.dims)};
  r.loss = standard_impl(batch, params, options, &r.grads);
  return r;
}

LossResult loss_bagg(std::span<const EncodedObservation> batch, const ModelParams& params,
                     const LossOptions& options) {
  LossResult r{0.0, Gradients::zeros(params.dims)};
  r.loss = bagg_impl(batch, params, options, &r.grads);
  return r;
}

double loss_standard_value(std::span<const EncodedObservation> batch, const ModelParams& params,
                           const LossOptions& options) {
  return standard_impl(batch, params, options, nullptr);
}

double loss_bagg_value(std::span<const EncodedObservation> batch, const ModelParams& params,
                       const LossOptions& options) {
  return bagg_impl(batch, params, options, nullptr);
}

double cross_entropy(std::span<const int> ids, int label, const ModelParams& params) {
  check_label(label, params.dims);
  return -forward(ids, params).log_prob(label);
}

std::vector<double> text_losses(const EncodedObservation& group, const ModelParams& params) {
  std::vector<double> out;
  out.reserve(group.texts.size());
  for (const auto& ids : group.texts) out.push_back(cross_entropy(ids, group.label, params));
  return out;
}

Prediction predict(std::span<const int> ids, const ModelParams& params) {
  TextForward f = forward(ids, params);
  Prediction p;
  p.distribution = softmax(f.logits);
  p.label = p.distribution.argmax();
  return p;
}

GradientCheckReport check_gradients(const ModelParams& params,
                                    std::span<const EncodedObservation> batch, double epsilon,
                                    LossKind kind, const LossOptions& options, double floor) {
  const auto value = [&](const ModelParams& p) {
    return kind == LossKind::Standard ? loss_standard_value(batch, p, options)
                                      : loss_bagg_value(batch, p, options);
  };
  const LossResult analytic =
      kind == LossKind::Standard ? loss_standard(batch, params, options) : loss_bagg(batch, params, options);

  GradientCheckReport report;
  ModelParams probe = params;
  auto probe_views = probe.views();
  auto grad_views = analytic.grads.views();
  for (std::size_t t = 0; t < ParamTensors::kNumTensors; ++t) {
    auto data = probe_views[t].data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + epsilon;
      const double up = value(probe);
      data[i] = saved - epsilon;
      const double down = value(probe);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad_views[t].data[i];
      const double diff = std::abs(a - numeric);
      const double rel =
          diff == 0.0 ? 0.0 : diff / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_tensor = std::string(probe_views[t].name);
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "BAGG1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  ck.params.validate();
  const auto& d = ck.params.dims;
  if (ck.vocab.size() != d.vocab) throw std::invalid_argument("vocabulary size differs from model");
  json header;
  header["dims"] = {{"vocab", d.vocab}, {"embed", d.embed}, {"hidden", d.hidden}, {"classes", d.classes}};
  header["pool_space"] = std::string(to_string(ck.pool_space));
  header["vocab_hash"] = ck.vocab.hash();
  header["vocab"] = ck.vocab.tokens();
  json tensors = json::array();
  for (const auto& v : ck.params.views()) tensors.push_back({{"name", v.name}, {"size", v.data.size()}});
  header["tensors"] = tensors;

  const std::string text = header.dump();
  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& v : ck.params.views()) {
    for (double x : v.data) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw std::runtime_error("not a BAGG1 checkpoint");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagic.size());
  std::size_t pos = kMagic.size() + 8;
  if (header_len > bytes.size() - pos) throw std::runtime_error("truncated checkpoint header");
  json header = json::parse(bytes.substr(pos, header_len));
  pos += header_len;

  Checkpoint ck;
  ModelDims d;
  d.vocab = header.at("dims").at("vocab").get<std::size_t>();
  d.embed = header.at("dims").at("embed").get<std::size_t>();
  d.hidden = header.at("dims").at("hidden").get<std::size_t>();
  d.classes = header.at("dims").at("classes").get<std::size_t>();
  ck.pool_space = parse_pool_space(header.at("pool_space").get<std::string>());
  ck.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  if (ck.vocab.hash() != header.at("vocab_hash").get<std::string>()) {
    throw std::runtime_error("checkpoint vocabulary hash mismatch");
  }
  ck.params = ModelParams::zeros(d);
  for (auto& v : ck.params.views()) {
    if (bytes.size() - pos < v.data.size() * 8) throw std::runtime_error("truncated tensor " + std::string(v.name));
    for (double& x : v.data) {
      x = std::bit_cast<double>(get_u64(bytes, pos));
      pos += 8;
    }
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint tensors");
  ck.params.validate();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace bagg
