#pragma once
// Triplet ranking and the recall evaluation suite.
//
// A candidate triplet (subj, obj, predicate>=1) is scored by the product of
// its three component probabilities. With the graph constraint only the top
// predicate per ordered pair survives; without it all K-1 predicates enter.
// A ground-truth triplet counts as hit when a top-K prediction matches its
// labels and predicate plus either the same region indices (PredCls/SGCls)
// or both boxes at IoU >= 0.5 (externally supplied detections). Matching is
// greedy in rank order, one-to-one in both directions.
//
// R@K averages per-image recall over images with nonempty ground truth.
// mR@K first computes per-predicate recall, then averages over the
// predicates that occur in the ground truth at all; per-predicate pooling is
// per-image macro by default, with an overall (micro) pooling mode.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kern/dataset.hpp"
#include "kern/relation_router.hpp"

namespace kern {

enum class MatchMode { Index, Iou };
enum class MrPooling { PerImageMacro, Pooled };

inline constexpr double kIouThreshold = 0.5;

struct RankedTriplet {
  int subj_idx = 0;
  int obj_idx = 0;
  int predicate = 0;  // >= 1
  double score = 0.0;
  int subj_label = 0;
  int obj_label = 0;
  Box subj_box, obj_box;
};

struct GtTriplet {
  int subj_idx = 0;
  int obj_idx = 0;
  int predicate = 0;
  int subj_label = 0;
  int obj_label = 0;
  Box subj_box, obj_box;
};

inline std::vector<GtTriplet> ground_truth_triplets(const AnnotatedImage& img) {
  std::vector<GtTriplet> gts;
  gts.reserve(img.triplets.size());
  for (const Triplet& t : img.triplets) {
    const Region& rs = img.regions[static_cast<std::size_t>(t.subj)];
    const Region& ro = img.regions[static_cast<std::size_t>(t.obj)];
    gts.push_back({t.subj, t.obj, t.predicate, rs.label, ro.label, rs.box, ro.box});
  }
  return gts;
}

namespace detail {

inline void check_prob(double p, const std::string& image_id) {
  if (!(p >= -1e-9 && p <= 1.0 + 1e-9))
    throw validation_error("predictions for " + image_id + ": probability " +
                           std::to_string(p) + " outside [0,1]");
}

}  // namespace detail

// Scored candidate list, sorted by score descending; ties break by
// (subj_idx, obj_idx, predicate) ascending, making the order total and
// stable under re-runs. `region_boxes` (from the dataset or a detector)
// fills the box fields used by IoU matching; optional otherwise.
inline std::vector<RankedTriplet> rank_triplets(const PredictedGraph& pred, bool constraint,
                                                const std::vector<Box>* region_boxes = nullptr) {
  std::vector<int> labels(pred.object_probs.size());
  std::vector<double> label_prob(pred.object_probs.size());
  for (std::size_t i = 0; i < pred.object_probs.size(); ++i) {
    const auto& probs = pred.object_probs[i];
    if (probs.empty()) throw validation_error("predictions for " + pred.image_id +
                                              ": empty object distribution");
    for (double p : probs) detail::check_prob(p, pred.image_id);
    labels[i] = static_cast<int>(argmax(probs));
    label_prob[i] = probs[static_cast<std::size_t>(labels[i])];
  }

  std::vector<RankedTriplet> out;
  for (const auto& pair : pred.pairs) {
    for (double p : pair.probs) detail::check_prob(p, pred.image_id);
    const std::size_t K = pair.probs.size();
    const auto subj = static_cast<std::size_t>(pair.subj);
    const auto obj = static_cast<std::size_t>(pair.obj);
    const double pair_label_prob = label_prob.at(subj) * label_prob.at(obj);
    auto emit = [&](std::size_t k) {
      RankedTriplet t;
      t.subj_idx = pair.subj;
      t.obj_idx = pair.obj;
      t.predicate = static_cast<int>(k);
      t.score = pair_label_prob * pair.probs[k];
      t.subj_label = labels.at(subj);
      t.obj_label = labels.at(obj);
      if (region_boxes) {
        t.subj_box = region_boxes->at(subj);
        t.obj_box = region_boxes->at(obj);
      }
      out.push_back(t);
    };
    if (constraint) {
      emit(1 + argmax(pair.probs, 1, K));
    } else {
      for (std::size_t k = 1; k < K; ++k) emit(k);
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedTriplet& a, const RankedTriplet& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.subj_idx, a.obj_idx, a.predicate) <
           std::tie(b.subj_idx, b.obj_idx, b.predicate);
  });
  return out;
}

inline bool triplet_matches(const RankedTriplet& p, const GtTriplet& g, MatchMode mode) {
  if (p.predicate != g.predicate || p.subj_label != g.subj_label ||
      p.obj_label != g.obj_label)
    return false;
  if (mode == MatchMode::Index) return p.subj_idx == g.subj_idx && p.obj_idx == g.obj_idx;
  return iou(p.subj_box, g.subj_box) >= kIouThreshold &&
         iou(p.obj_box, g.obj_box) >= kIouThreshold;
}

// Greedy one-to-one matching over the top-K prefix: predictions claim the
// first still-unmatched ground-truth triplet they match, in rank order.
inline std::vector<bool> match_ground_truth(const std::vector<RankedTriplet>& ranked,
                                            const std::vector<GtTriplet>& gts, std::size_t K,
                                            MatchMode mode) {
  std::vector<bool> hit(gts.size(), false);
  const std::size_t top = std::min(K, ranked.size());
  for (std::size_t r = 0; r < top; ++r) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (hit[g]) continue;
      if (triplet_matches(ranked[r], gts[g], mode)) {
        hit[g] = true;
        break;
      }
    }
  }
  return hit;
}

inline double recall_at_k(const std::vector<RankedTriplet>& ranked,
                          const std::vector<GtTriplet>& gts, std::size_t K,
                          MatchMode mode = MatchMode::Index) {
  if (gts.empty()) return 0.0;
  const auto hit = match_ground_truth(ranked, gts, K, mode);
  std::size_t hits = 0;
  for (bool h : hit) hits += h ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gts.size());
}

struct EvalReport {
  std::string task;
  bool constraint = true;
  MrPooling pooling = MrPooling::PerImageMacro;
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> recall;                   // overall R@K
  std::map<std::size_t, double> mean_recall;              // mR@K
  std::vector<std::map<std::size_t, double>> per_predicate;  // [K-1], predicate k = index+1
  std::vector<std::size_t> predicate_gt_counts;           // [K-1] total GT triplets
  std::size_t image_count = 0;                            // images with nonempty GT
};

struct ImageEval {
  std::vector<GtTriplet> gts;
  std::vector<RankedTriplet> ranked;
};

// mR@K and the per-predicate recall table over per-image matched sets.
inline void mean_recall_at_k(const std::vector<ImageEval>& images, std::size_t K,
                             MatchMode mode, MrPooling pooling, std::size_t num_predicates,
                             double& mr_out, std::vector<double>& per_pred_out) {
  const std::size_t P = num_predicates - 1;  // predicate classes 1..K-1
  std::vector<double> macro_sum(P, 0.0);
  std::vector<std::size_t> macro_images(P, 0);
  std::vector<std::size_t> micro_hits(P, 0), micro_total(P, 0);

  for (const ImageEval& ie : images) {
    if (ie.gts.empty()) continue;
    const auto hit = match_ground_truth(ie.ranked, ie.gts, K, mode);
    std::vector<std::size_t> gt_count(P, 0), hit_count(P, 0);
    for (std::size_t g = 0; g < ie.gts.size(); ++g) {
      const std::size_t p = static_cast<std::size_t>(ie.gts[g].predicate) - 1;
      ++gt_count[p];
      if (hit[g]) ++hit_count[p];
    }
    for (std::size_t p = 0; p < P; ++p) {
      if (gt_count[p] == 0) continue;
      macro_sum[p] += static_cast<double>(hit_count[p]) / static_cast<double>(gt_count[p]);
      ++macro_images[p];
      micro_hits[p] += hit_count[p];
      micro_total[p] += gt_count[p];
    }
  }

  per_pred_out.assign(P, 0.0);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (micro_total[p] == 0) continue;  // predicate absent from GT: ignored
    per_pred_out[p] = pooling == MrPooling::PerImageMacro
                          ? macro_sum[p] / static_cast<double>(macro_images[p])
                          : static_cast<double>(micro_hits[p]) /
                                static_cast<double>(micro_total[p]);
    sum += per_pred_out[p];
    ++present;
  }
  mr_out = present == 0 ? 0.0 : sum / static_cast<double>(present);
}

// Full report for one (task, constraint) pass. Predictions must cover every
// dataset image; images without ground-truth triplets are skipped in every
// average.
inline EvalReport evaluate(const std::vector<AnnotatedImage>& images,
                           const std::vector<PredictedGraph>& predictions,
                           const std::string& task, bool constraint,
                           std::vector<std::size_t> ks, std::size_t num_predicates,
                           MatchMode mode = MatchMode::Index,
                           MrPooling pooling = MrPooling::PerImageMacro) {
  std::map<std::string, const PredictedGraph*> by_id;
  for (const auto& p : predictions) by_id[p.image_id] = &p;
  std::vector<std::string> missing;
  for (const auto& img : images)
    if (!by_id.count(img.image_id)) missing.push_back(img.image_id);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "evaluate: predictions missing for " << missing.size() << " image(s):";
    for (std::size_t i = 0; i < missing.size() && i < 8; ++i) os << ' ' << missing[i];
    if (missing.size() > 8) os << " ...";
    throw validation_error(os.str());
  }

  std::vector<ImageEval> evals;
  std::vector<std::size_t> gt_counts(num_predicates - 1, 0);
  for (const auto& img : images) {
    ImageEval ie;
    ie.gts = ground_truth_triplets(img);
    if (ie.gts.empty()) continue;
    std::vector<Box> boxes;
    boxes.reserve(img.regions.size());
    for (const Region& r : img.regions) boxes.push_back(r.box);
    ie.ranked = rank_triplets(*by_id.at(img.image_id), constraint, &boxes);
    for (const auto& g : ie.gts) ++gt_counts[static_cast<std::size_t>(g.predicate) - 1];
    evals.push_back(std::move(ie));
  }

  EvalReport report;
  report.task = task;
  report.constraint = constraint;
  report.pooling = pooling;
  report.ks = ks;
  report.image_count = evals.size();
  report.predicate_gt_counts = gt_counts;
  report.per_predicate.assign(num_predicates - 1, {});

  for (std::size_t K : ks) {
    double racc = 0.0;
    for (const ImageEval& ie : evals) racc += recall_at_k(ie.ranked, ie.gts, K, mode);
    report.recall[K] = evals.empty() ? 0.0 : racc / static_cast<double>(evals.size());

    double mr = 0.0;
    std::vector<double> per_pred;
    mean_recall_at_k(evals, K, mode, pooling, num_predicates, mr, per_pred);
    report.mean_recall[K] = mr;
    for (std::size_t p = 0; p < per_pred.size(); ++p) report.per_predicate[p][K] = per_pred[p];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_pred = nlohmann::json::array();
  for (std::size_t p = 0; p < r.per_predicate.size(); ++p) {
    nlohmann::json rec;
    for (const auto& [k, v] : r.per_predicate[p]) rec[std::to_string(k)] = v;
    per_pred.push_back({{"predicate", p + 1},
                        {"gt_count", r.predicate_gt_counts[p]},
                        {"recall", std::move(rec)}});
  }
  nlohmann::json recall, mean_recall;
  for (const auto& [k, v] : r.recall) recall[std::to_string(k)] = v;
  for (const auto& [k, v] : r.mean_recall) mean_recall[std::to_string(k)] = v;
  return {{"task", r.task},
          {"constraint", r.constraint},
          {"pooling", r.pooling == MrPooling::PerImageMacro ? "per-image" : "pooled"},
          {"ks", r.ks},
          {"recall", std::move(recall)},
          {"mean_recall", std::move(mean_recall)},
          {"image_count", r.image_count},
          {"per_predicate", std::move(per_pred)}};
}

inline std::string render_report(const EvalReport& r, const DatasetSchema& schema,
                                 bool per_predicate_table = false) {
  std::ostringstream os;
  os << r.task << (r.constraint ? " (constraint)" : " (no constraint)") << ", "
     << r.image_count << " images\n";
  auto pct = [](double v) {
    std::ostringstream p;
    p.setf(std::ios::fixed);
    p.precision(2);
    p << 100.0 * v;
    return p.str();
  };
  for (std::size_t k : r.ks)
    os << "  R@" << k << " = " << pct(r.recall.at(k)) << "   mR@" << k << " = "
       << pct(r.mean_recall.at(k)) << "\n";
  if (per_predicate_table) {
    os << "  per-predicate recall:\n";
    for (std::size_t p = 0; p < r.per_predicate.size(); ++p) {
      if (r.predicate_gt_counts[p] == 0) continue;
      os << "    " << schema.predicate_names[p + 1] << " (" << r.predicate_gt_counts[p]
         << " GT):";
      for (std::size_t k : r.ks) os << "  R@" << k << "=" << pct(r.per_predicate[p].at(k));
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace kern
