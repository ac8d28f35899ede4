#pragma once

#include <cmath>
#include <vector>

#include "bagg/model.hpp"
#include "bagg/random.hpp"

namespace testing {

// Plain re-implementation of the forward pass, written against the raw
// tensor layout rather than the library's helpers.
inline std::vector<double> ref_logits(const std::vector<int>& ids, const bagg::ModelParams& p) {
  const auto d = p.dims;
  std::vector<double> e(d.embed, 0.0);
  for (int id : ids) {
    for (std::size_t k = 0; k < d.embed; ++k) e[k] += p.embedding[static_cast<std::size_t>(id) * d.embed + k];
  }
  if (!ids.empty()) {
    for (auto& v : e) v /= static_cast<double>(ids.size());
  }
  std::vector<double> h(d.hidden);
  for (std::size_t j = 0; j < d.hidden; ++j) {
    double s = p.hidden_bias[j];
    for (std::size_t k = 0; k < d.embed; ++k) s += e[k] * p.hidden_weight[k * d.hidden + j];
    h[j] = std::tanh(s);
  }
  std::vector<double> z(d.classes);
  for (std::size_t c = 0; c < d.classes; ++c) {
    double s = p.output_bias[c];
    for (std::size_t j = 0; j < d.hidden; ++j) s += h[j] * p.output_weight[j * d.classes + c];
    z[c] = s;
  }
  return z;
}

inline std::vector<double> ref_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

inline double ref_ce(const std::vector<int>& ids, int y, const bagg::ModelParams& p) {
  return -std::log(ref_softmax(ref_logits(ids, p))[static_cast<std::size_t>(y)]);
}

inline bagg::EncodedObservation random_group(bagg::Rng& rng, std::size_t size, const bagg::ModelDims& d,
                                             std::size_t max_len = 6) {
  bagg::EncodedObservation obs;
  obs.label = static_cast<int>(rng.uniform_index(d.classes));
  for (std::size_t j = 0; j < size; ++j) {
    bagg::TokenIds ids;
    const auto len = 1 + rng.uniform_index(max_len);
    for (std::size_t t = 0; t < len; ++t) ids.push_back(static_cast<int>(rng.uniform_index(d.vocab)));
    obs.texts.push_back(std::move(ids));
  }
  return obs;
}

// Larger-than-default weights so that predictions are far from uniform.
inline bagg::ModelParams random_params(bagg::Rng& rng, const bagg::ModelDims& d, double scale = 1.0) {
  auto p = bagg::ModelParams::initialize(d, rng);
  for (auto v : p.views()) {
    for (auto& x : v.data) x = scale * rng.uniform(-1.0, 1.0);
  }
  return p;
}

}  // namespace testing
