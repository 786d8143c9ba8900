#pragma once
// Relation routing network. For one ordered object pair the graph has a
// subject node, an object node, and K predicate nodes (index 0 =
// no-relationship). Edges between object and predicate nodes carry the prior
// fiber for the pair's categories, so messages to unlikely predicates are
// attenuated. Node states form a (2+K) x d matrix, rows [subj, obj, k...].
//
// Also hosts the whole-image prediction path that runs the object router
// (or takes ground-truth labels), looks up the prior fiber per ordered pair,
// and emits per-pair predicate distributions.

#include <string>
#include <vector>

#include "kern/knowledge.hpp"
#include "kern/object_router.hpp"

namespace kern {

// Union encoding for a region pair: the mean of the two region features as a
// stand-in for the union-crop appearance, then 9 spatial values
// [cx_i/W, cy_i/H, w_i/W, h_i/H, cx_j/W, cy_j/H, w_j/W, h_j/H, iou].
inline std::vector<double> encode_union(const Box& subj_box, const Box& obj_box,
                                        const std::vector<double>& subj_feature,
                                        const std::vector<double>& obj_feature,
                                        double image_w, double image_h) {
  if (subj_box.area() <= 0.0 || obj_box.area() <= 0.0)
    throw validation_error("encode_union: degenerate box");
  if (subj_feature.size() != obj_feature.size())
    throw dimension_error("encode_union: feature lengths differ");
  std::vector<double> u;
  u.reserve(subj_feature.size() + 9);
  for (std::size_t i = 0; i < subj_feature.size(); ++i)
    u.push_back(0.5 * (subj_feature[i] + obj_feature[i]));
  u.push_back(subj_box.cx() / image_w);
  u.push_back(subj_box.cy() / image_h);
  u.push_back(subj_box.width() / image_w);
  u.push_back(subj_box.height() / image_h);
  u.push_back(obj_box.cx() / image_w);
  u.push_back(obj_box.cy() / image_h);
  u.push_back(obj_box.width() / image_w);
  u.push_back(obj_box.height() / image_h);
  u.push_back(iou(subj_box, obj_box));
  return u;
}

struct PairInput {
  std::vector<double> subj_feature;
  std::vector<double> obj_feature;
  std::vector<double> union_feature;
  int subj_label = 0;
  int obj_label = 0;
};

inline PairInput make_pair_input(const AnnotatedImage& img, std::size_t subj,
                                 std::size_t obj) {
  const Region& rs = img.regions.at(subj);
  const Region& ro = img.regions.at(obj);
  PairInput p;
  p.subj_feature = rs.feature;
  p.obj_feature = ro.feature;
  p.union_feature =
      encode_union(rs.box, ro.box, rs.feature, ro.feature, img.width, img.height);
  p.subj_label = rs.label;
  p.obj_label = ro.label;
  return p;
}

struct RelationRouterConfig {
  std::size_t feature_dim = 0;   // d_f
  std::size_t predicates = 0;    // K
  std::size_t hidden_dim = 64;   // d
  std::size_t output_dim = 64;   // d_out
  std::size_t steps = 3;         // T_r

  std::size_t union_dim() const { return feature_dim + 9; }
  std::size_t nodes() const { return predicates + 2; }
};

class RelationRouter {
public:
  RelationRouter() = default;

  RelationRouter(const RelationRouterConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.steps < 1) throw validation_error("relation router: steps must be >= 1");
    const std::size_t d = cfg.hidden_dim;
    params_.add_weight("phi_obj.W", d, cfg.feature_dim, rng);
    params_.add_bias("phi_obj.b", d);
    params_.add_weight("phi_rel.W", d, cfg.union_dim(), rng);
    params_.add_bias("phi_rel.b", d);
    gru_ = make_gru_params(params_, "gru.", d, d, rng);
    params_.add_weight("out.W", cfg.output_dim, 2 * d, rng);
    params_.add_bias("out.b", cfg.output_dim);
    params_.add_weight("cls.W", cfg.predicates, cfg.nodes() * cfg.output_dim, rng);
    params_.add_bias("cls.b", cfg.predicates);
  }

  const RelationRouterConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Rows [subj, obj] from phi_obj over the region features; rows [k] all
  // equal to phi_rel over the union feature.
  Tensor init_hidden(const PairInput& pair) const {
    if (pair.subj_feature.size() != cfg_.feature_dim ||
        pair.obj_feature.size() != cfg_.feature_dim)
      throw dimension_error("relation router: region feature length mismatch");
    if (pair.union_feature.size() != cfg_.union_dim())
      throw dimension_error("relation router: union feature length mismatch");
    std::vector<double> obj_data(pair.subj_feature);
    obj_data.insert(obj_data.end(), pair.obj_feature.begin(), pair.obj_feature.end());
    Tensor obj_part = linear(Tensor::from({2, cfg_.feature_dim}, std::move(obj_data)),
                             params_.at("phi_obj.W"), params_.at("phi_obj.b"));
    Tensor rel_part =
        repeat_rows(linear(Tensor::from({1, cfg_.union_dim()}, pair.union_feature),
                           params_.at("phi_rel.W"), params_.at("phi_rel.b")),
                    cfg_.predicates);
    return concat(obj_part, rel_part, /*axis=*/0);
  }

  // Bipartite constant adjacency: object rows hear sum_k fiber[k] h_k,
  // predicate row k hears fiber[k] (h_subj + h_obj).
  static Tensor pair_edges(const std::vector<double>& fiber) {
    const std::size_t K = fiber.size();
    const std::size_t N = K + 2;
    std::vector<double> e(N * N, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      e[0 * N + (2 + k)] = fiber[k];
      e[1 * N + (2 + k)] = fiber[k];
      e[(2 + k) * N + 0] = fiber[k];
      e[(2 + k) * N + 1] = fiber[k];
    }
    return Tensor::from({N, N}, std::move(e));
  }

  Tensor aggregate(const Tensor& h, const std::vector<double>& fiber) const {
    if (fiber.size() != cfg_.predicates)
      throw dimension_error("relation router: fiber length " + std::to_string(fiber.size()) +
                            " != K = " + std::to_string(cfg_.predicates));
    return matmul(pair_edges(fiber), h);
  }

  Tensor propagate(const Tensor& h0, const std::vector<double>& fiber) const {
    Tensor edges = pair_edges(fiber);
    Tensor h = h0;
    for (std::size_t t = 0; t < cfg_.steps; ++t) h = gru_cell(matmul(edges, h), h, gru_);
    return h;
  }

  // Node outputs from [hT ; h0], concatenated over all 2+K nodes, then the
  // predicate classifier. Returns K logits (index 0 = no-relationship).
  Tensor classify(const Tensor& h0, const Tensor& hT) const {
    Tensor node_out = linear(concat(hT, h0, /*axis=*/1), params_.at("out.W"), params_.at("out.b"));
    Tensor flat = reshape(node_out, {1, cfg_.nodes() * cfg_.output_dim});
    return reshape(linear(flat, params_.at("cls.W"), params_.at("cls.b")), {cfg_.predicates});
  }

  Tensor forward(const PairInput& pair, const std::vector<double>& fiber) const {
    Tensor h0 = init_hidden(pair);
    return classify(h0, propagate(h0, fiber));
  }

private:
  RelationRouterConfig cfg_;
  ParameterSet params_;
  GruParams gru_;
};

// ---------------------------------------------------------------------------
// Full model and whole-image prediction

struct ModelConfig {
  std::size_t feature_dim = 0;
  std::size_t categories = 0;
  std::size_t predicates = 0;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 64;
  std::size_t object_steps = 3;
  std::size_t relation_steps = 3;
  std::size_t max_regions = 64;
  std::uint64_t init_seed = 0;

  ObjectRouterConfig object() const {
    return {feature_dim, categories, hidden_dim, output_dim, object_steps, max_regions};
  }
  RelationRouterConfig relation() const {
    return {feature_dim, predicates, hidden_dim, output_dim, relation_steps};
  }
};

struct Model {
  ModelConfig config;
  ObjectRouter object;
  RelationRouter relation;
  ParameterSet params;  // combined view: object.* and relation.* share storage

  explicit Model(const ModelConfig& cfg) : config(cfg) {
    Rng rng = make_rng(cfg.init_seed, /*stream=*/0xA11);
    object = ObjectRouter(cfg.object(), rng);
    relation = RelationRouter(cfg.relation(), rng);
    params.adopt("object.", object.params());
    params.adopt("relation.", relation.params());
  }
};

enum class Task { PredCls, SGCls };

inline std::string task_name(Task t) { return t == Task::PredCls ? "PredCls" : "SGCls"; }

struct PredictedGraph {
  std::string image_id;
  std::vector<std::vector<double>> object_probs;  // n x C
  struct PairPred {
    int subj = 0;
    int obj = 0;
    std::vector<double> probs;  // K, index 0 = no-relationship
  };
  std::vector<PairPred> pairs;
};

// Runs the pipeline on one image. PredCls takes labels from the annotations
// (one-hot object distributions); SGCls runs the object router and indexes
// the prior with its argmax labels.
inline PredictedGraph predict_graph(const AnnotatedImage& img, const KnowledgeBase& kb,
                                    const Model& model, Task task) {
  NoGradGuard ng;
  const std::size_t C = kb.C();
  const std::size_t n = std::min(img.regions.size(), model.config.max_regions);
  PredictedGraph out;
  out.image_id = img.image_id;
  out.object_probs.resize(n);
  std::vector<std::size_t> labels(n);

  if (task == Task::PredCls) {
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<std::size_t>(img.regions[i].label);
      out.object_probs[i].assign(C, 0.0);
      out.object_probs[i][labels[i]] = 1.0;
    }
  } else {
    Tensor logits = model.object.forward(region_features(img, model.config.max_regions), kb.cooc);
    Tensor probs = softmax(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = probs.data().data() + i * C;
      out.object_probs[i].assign(row, row + C);
      labels[i] = argmax(probs.data(), i * C, (i + 1) * C);
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      PairInput pair = make_pair_input(img, i, j);
      Tensor logits = model.relation.forward(pair, kb.fiber_vec(labels[i], labels[j]));
      Tensor probs = softmax(logits);
      out.pairs.push_back({static_cast<int>(i), static_cast<int>(j), probs.data()});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Predictions file: JSON lines, the metrics module's input contract.

inline nlohmann::json to_json(const PredictedGraph& g) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : g.pairs)
    pairs.push_back({{"subj", p.subj}, {"obj", p.obj}, {"probs", p.probs}});
  return {{"image_id", g.image_id}, {"objects", g.object_probs}, {"pairs", std::move(pairs)}};
}

inline PredictedGraph prediction_from_json(const nlohmann::json& j) {
  PredictedGraph g;
  g.image_id = j.at("image_id").get<std::string>();
  g.object_probs = j.at("objects").get<std::vector<std::vector<double>>>();
  for (const auto& p : j.at("pairs"))
    g.pairs.push_back({p.at("subj").get<int>(), p.at("obj").get<int>(),
                       p.at("probs").get<std::vector<double>>()});
  return g;
}

inline void save_predictions(const std::vector<PredictedGraph>& preds, const std::string& path) {
  std::ostringstream os;
  for (const auto& g : preds) os << to_json(g).dump() << '\n';
  io::write_file_atomic(path, os.str());
}

inline std::vector<PredictedGraph> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  std::vector<PredictedGraph> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      preds.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return preds;
}

}  // namespace kern
