#pragma once
// Object routing network. Every region is duplicated into C category nodes;
// messages flow between regions over edges weighted by the co-occurrence
// matrix, in both directions, for a fixed number of gated update steps; a
// region's class logits come from the concatenated per-category outputs.
//
// Node states live in a single (n*C) x d matrix, row index i*C + c.

#include <cstdint>
#include <vector>

#include "kern/dataset.hpp"
#include "kern/gru.hpp"
#include "kern/tensor.hpp"

namespace kern {

struct ObjectRouterConfig {
  std::size_t feature_dim = 0;    // d_f
  std::size_t categories = 0;     // C
  std::size_t hidden_dim = 64;    // d
  std::size_t output_dim = 64;    // d_out
  std::size_t steps = 3;          // T_o
  std::size_t max_regions = 64;   // regions beyond this are dropped upstream
};

class ObjectRouter {
public:
  ObjectRouter() = default;

  ObjectRouter(const ObjectRouterConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.steps < 1) throw validation_error("object router: steps must be >= 1");
    const std::size_t d = cfg.hidden_dim;
    params_.add_weight("phi_in.W", d, cfg.feature_dim, rng);
    params_.add_bias("phi_in.b", d);
    gru_ = make_gru_params(params_, "gru.", 2 * d, d, rng);
    params_.add_weight("out.W", cfg.output_dim, 2 * d, rng);
    params_.add_bias("out.b", cfg.output_dim);
    params_.add_weight("cls.W", cfg.categories, cfg.categories * cfg.output_dim, rng);
    params_.add_bias("cls.b", cfg.categories);
  }

  const ObjectRouterConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // h0[i*C+c] = phi_in(f_i) for every category c.
  Tensor init_hidden(const Tensor& features) const {
    if (features.cols() != cfg_.feature_dim)
      throw dimension_error("object router: feature length " + std::to_string(features.cols()) +
                            " != configured " + std::to_string(cfg_.feature_dim));
    Tensor projected = linear(features, params_.at("phi_in.W"), params_.at("phi_in.b"));
    return repeat_rows(projected, cfg_.categories);
  }

  // Constant edge matrices over the duplicated node grid:
  //   in [(i,c),(j,c')] = [j != i] * cooc[c',c]   (messages arriving at (i,c))
  //   out[(i,c),(j,c')] = [j != i] * cooc[c,c']   (messages (i,c) sends back)
  static std::pair<Tensor, Tensor> edge_matrices(const std::vector<double>& cooc,
                                                 std::size_t C, std::size_t n) {
    const std::size_t N = n * C;
    std::vector<double> ein(N * N, 0.0), eout(N * N, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t row = i * C + c;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          for (std::size_t c2 = 0; c2 < C; ++c2) {
            ein[row * N + j * C + c2] = cooc[c2 * C + c];
            eout[row * N + j * C + c2] = cooc[c * C + c2];
          }
        }
      }
    return {Tensor::from({N, N}, std::move(ein)), Tensor::from({N, N}, std::move(eout))};
  }

  // a[i,c] = [ sum_{j!=i} sum_{c'} cooc[c',c] h[j,c'] ;
  //            sum_{j!=i} sum_{c'} cooc[c,c'] h[j,c'] ]
  Tensor aggregate(const Tensor& h, const Tensor& edges_in, const Tensor& edges_out) const {
    return concat(matmul(edges_in, h), matmul(edges_out, h), /*axis=*/1);
  }

  Tensor aggregate(const Tensor& h, const std::vector<double>& cooc, std::size_t n) const {
    auto [ein, eout] = edge_matrices(cooc, cfg_.categories, n);
    return aggregate(h, ein, eout);
  }

  // T_o synchronous rounds: every node reads the previous step's states.
  Tensor propagate(const Tensor& h0, const std::vector<double>& cooc, std::size_t n) const {
    auto [ein, eout] = edge_matrices(cooc, cfg_.categories, n);
    Tensor h = h0;
    for (std::size_t t = 0; t < cfg_.steps; ++t)
      h = gru_cell(aggregate(h, ein, eout), h, gru_);
    return h;
  }

  // Per-node output feature from [h0 ; hT], then per-region logits from the
  // C concatenated node outputs.
  Tensor classify(const Tensor& h0, const Tensor& hT, std::size_t n) const {
    Tensor node_out = linear(concat(h0, hT, /*axis=*/1), params_.at("out.W"), params_.at("out.b"));
    Tensor per_region = reshape(node_out, {n, cfg_.categories * cfg_.output_dim});
    return linear(per_region, params_.at("cls.W"), params_.at("cls.b"));
  }

  // features (n x d_f) -> logits (n x C).
  Tensor forward(const Tensor& features, const std::vector<double>& cooc) const {
    const std::size_t n = features.rows();
    Tensor h0 = init_hidden(features);
    Tensor hT = propagate(h0, cooc, n);
    return classify(h0, hT, n);
  }

private:
  ObjectRouterConfig cfg_;
  ParameterSet params_;
  GruParams gru_;
};

// Region features as an (n x d_f) tensor, truncated to max_regions.
inline Tensor region_features(const AnnotatedImage& img, std::size_t max_regions) {
  const std::size_t n = std::min(img.regions.size(), max_regions);
  if (n == 0) throw validation_error("image " + img.image_id + ": no regions");
  const std::size_t d_f = img.regions.front().feature.size();
  if (d_f == 0)
    throw validation_error("image " + img.image_id + ": regions carry no feature vectors");
  std::vector<double> data;
  data.reserve(n * d_f);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = img.regions[i].feature;
    if (f.size() != d_f)
      throw validation_error("image " + img.image_id + ": inconsistent feature lengths");
    data.insert(data.end(), f.begin(), f.end());
  }
  return Tensor::from({n, d_f}, std::move(data));
}

}  // namespace kern
