#pragma once
// Joint training of the two routers: summed cross-entropy losses with
// teacher-forced prior lookup, negative-pair subsampling, Adam with bias
// correction, and learning-rate decay when the validation metric plateaus.

#include <algorithm>
#include <string>
#include <vector>

#include "kern/metrics.hpp"
#include "kern/relation_router.hpp"

namespace kern {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 2;  // images per optimizer step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 10;
  double negative_ratio = 3.0;  // negatives per positive pair
  double lr_decay = 10.0;       // divide lr by this on plateau
  std::size_t patience = 3;     // epochs without val improvement before decay
  std::uint64_t seed = 0;
  double object_loss_weight = 1.0;
  double relation_loss_weight = 1.0;
  std::size_t validation_k = 50;  // plateau metric: PredCls mR@K, constraint

  void validate() const {
    if (learning_rate <= 0 || batch_size == 0 || beta1 <= 0 || beta2 <= 0 ||
        adam_eps <= 0 || epochs == 0 || lr_decay <= 0 || patience == 0)
      throw validation_error("train config: all settings must be positive");
    if (negative_ratio < 0) throw validation_error("train config: negative ratio < 0");
  }
};

// Mean softmax cross-entropy over the rows of `logits`.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n)
    throw dimension_error("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(n) + " rows");
  std::vector<double> mask(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw validation_error("cross_entropy: label " + std::to_string(l) + " out of range");
    mask[i * c + static_cast<std::size_t>(l)] = -1.0 / static_cast<double>(n);
  }
  Tensor flat_logits = logits.rank() == 1 ? reshape(logits, {1, c}) : logits;
  return sum(mul(log(softmax(flat_logits)), Tensor::from({n, c}, std::move(mask))));
}

inline Tensor object_loss(const Tensor& logits, const std::vector<int>& labels) {
  return cross_entropy(logits, labels);
}

inline Tensor relation_loss(const Tensor& pair_logits, const std::vector<int>& gt_predicates) {
  return cross_entropy(pair_logits, gt_predicates);
}

// All annotated pairs plus a deterministic sample of unannotated ordered
// pairs labeled predicate 0. With positives present the negative budget is
// ratio * #positives; an all-negative image still contributes up to
// max(ratio, 1) pairs so it is never silently skipped. Only pairs among the
// first `max_regions` regions are considered.
inline std::vector<Triplet> sample_pairs(const AnnotatedImage& img, double ratio, Rng& rng,
                                         std::size_t max_regions = 64) {
  if (ratio < 0) throw validation_error("sample_pairs: negative ratio");
  const int n = static_cast<int>(std::min(img.regions.size(), max_regions));
  std::set<std::pair<int, int>> annotated;
  std::vector<Triplet> out;
  for (const Triplet& t : img.triplets) {
    if (t.subj >= n || t.obj >= n) continue;
    annotated.emplace(t.subj, t.obj);
    out.push_back(t);
  }
  const std::size_t positives = out.size();
  if (ratio == 0.0) return out;

  std::vector<std::pair<int, int>> candidates;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && !annotated.count({i, j})) candidates.emplace_back(i, j);

  std::size_t want =
      positives > 0
          ? static_cast<std::size_t>(ratio * static_cast<double>(positives))
          : static_cast<std::size_t>(std::max(1.0, ratio));
  want = std::min(want, candidates.size());

  // Partial Fisher-Yates over the (i,j)-ordered candidate list.
  for (std::size_t k = 0; k < want; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
    std::swap(candidates[k], candidates[pick(rng)]);
    out.push_back({candidates[k].first, candidates[k].second, 0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
};

inline void adam_step(ParameterSet& params, AdamState& state, const TrainConfig& cfg,
                      double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const auto& g = p.grad();
    auto& mom = state.moments[name];
    if (mom.m.empty()) {
      mom.m.assign(g.size(), 0.0);
      mom.v.assign(g.size(), 0.0);
    }
    auto& x = p.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw numeric_error("adam_step: non-finite gradient in parameter '" + name + "'");
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      x[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Train loop

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mr = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
};

// Joint loss for one image: weighted object cross-entropy plus relation
// cross-entropy over the sampled pairs with teacher-forced fiber lookup.
inline Tensor image_loss(const AnnotatedImage& img, const KnowledgeBase& kb,
                         const Model& model, const std::vector<Triplet>& pairs,
                         double w_obj, double w_rel) {
  const std::size_t n = std::min(img.regions.size(), model.config.max_regions);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = img.regions[i].label;

  Tensor obj_logits = model.object.forward(region_features(img, model.config.max_regions),
                                           kb.cooc);
  Tensor loss = scale(object_loss(obj_logits, labels), w_obj);

  if (!pairs.empty()) {
    Tensor rel_acc;
    std::vector<int> gts;
    for (const Triplet& t : pairs) {
      const auto si = static_cast<std::size_t>(t.subj);
      const auto oi = static_cast<std::size_t>(t.obj);
      PairInput pin = make_pair_input(img, si, oi);
      // Teacher forcing: ground-truth labels index the prior during training.
      Tensor logits = model.relation.forward(
          pin, kb.fiber_vec(static_cast<std::size_t>(img.regions[si].label),
                            static_cast<std::size_t>(img.regions[oi].label)));
      Tensor row = reshape(logits, {1, logits.numel()});
      rel_acc = rel_acc.defined() ? concat(rel_acc, row, 0) : row;
      gts.push_back(t.predicate);
    }
    loss = add(loss, scale(relation_loss(rel_acc, gts), w_rel));
  }
  return loss;
}

inline double validation_mean_recall(const std::vector<AnnotatedImage>& val,
                                     const KnowledgeBase& kb, const Model& model,
                                     std::size_t k) {
  std::vector<PredictedGraph> preds;
  preds.reserve(val.size());
  for (const auto& img : val) preds.push_back(predict_graph(img, kb, model, Task::PredCls));
  EvalReport r = evaluate(val, preds, "PredCls", /*constraint=*/true, {k},
                          kb.K(), MatchMode::Index);
  return r.mean_recall.at(k);
}

// Trains `model` in place. The parameters left in the model afterwards are
// those of the best validation epoch. Fully deterministic for a fixed seed.
inline TrainResult train(const std::vector<AnnotatedImage>& train_images,
                         const std::vector<AnnotatedImage>& val_images,
                         const KnowledgeBase& kb, Model& model, const TrainConfig& cfg) {
  cfg.validate();
  if (train_images.empty() || val_images.empty())
    throw validation_error("train: empty train or validation split");

  Rng rng = make_rng(cfg.seed, /*stream=*/0x77);
  AdamState adam;
  TrainResult result;
  double lr = cfg.learning_rate;
  std::size_t since_best = 0;
  std::map<std::string, std::vector<double>> best_snapshot;

  std::vector<std::size_t> order(train_images.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      model.params.zero_grad();
      Tensor batch_loss;
      for (std::size_t b = start; b < stop; ++b) {
        const AnnotatedImage& img = train_images[order[b]];
        auto pairs = sample_pairs(img, cfg.negative_ratio, rng, model.config.max_regions);
        Tensor l = image_loss(img, kb, model, pairs, cfg.object_loss_weight,
                              cfg.relation_loss_weight);
        batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      const double lv = batch_loss.value();
      if (!std::isfinite(lv))
        throw numeric_error("train: loss diverged at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(batches + 1));
      backward(batch_loss);
      adam_step(model.params, adam, cfg, lr);
      epoch_loss += lv;
      ++batches;
    }

    const double val_mr = validation_mean_recall(val_images, kb, model, cfg.validation_k);
    result.log.push_back({epoch, epoch_loss / static_cast<double>(batches), val_mr, lr});

    if (result.log.size() == 1 || val_mr > result.best_val) {
      result.best_val = val_mr;
      result.best_epoch = epoch;
      since_best = 0;
      best_snapshot.clear();
      for (const auto& [name, t] : model.params) best_snapshot[name] = t.data();
    } else if (++since_best >= cfg.patience) {
      lr /= cfg.lr_decay;
      since_best = 0;
    }
  }

  for (auto& [name, values] : best_snapshot) model.params.at(name).data() = values;
  return result;
}

inline std::string render_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch\tloss\tval_mr\tlr\n";
  os.precision(17);
  for (const auto& row : log)
    os << row.epoch << '\t' << row.train_loss << '\t' << row.val_mr << '\t' << row.lr << '\n';
  return os.str();
}

}  // namespace kern
