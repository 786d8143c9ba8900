#pragma once
// Synthetic scene-graph datasets with controllable co-occurrence structure
// and long-tail predicate distributions, plus an analytic oracle for the
// frequency baseline. The generating process is stored alongside the data so
// tests can compare counted statistics against the true distributions.
//
// Predicate fibers are constructed as
//   P*(0 | c,c')  = 1 - annotated_fraction
//   P*(k | c,c')  = annotated_fraction * q_k           (k >= 1)
// with q a temperature-sharpened Dirichlet draw over the K-1 real
// predicates. Annotated pairs sample from q; unannotated pairs are implicit
// no-relationship. Counting predicates over generated pairs therefore
// converges to P* fiber-by-fiber, which is what the round-trip checks rely
// on. With annotated_fraction = 1 a large temperature drives every fiber to
// one-hot.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "kern/dataset.hpp"
#include "kern/knowledge.hpp"
#include "kern/rng.hpp"

namespace kern {

struct SynthConfig {
  std::size_t categories = 10;     // C
  std::size_t predicates = 7;      // K, including no-relationship
  std::size_t feature_dim = 16;    // d_f
  std::size_t images = 100;        // N
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  double zipf_exponent = 0.8;      // category marginal skew
  double prior_temperature = 2.0;  // sharpens true predicate fibers
  double cooc_mix = 0.7;           // weight of conditional vs marginal sampling
  double feature_noise = 0.5;      // sigma around the category prototype
  double annotated_fraction = 0.5; // probability an ordered pair gets a triplet
  std::uint64_t seed = 0;
  double image_w = 256, image_h = 256;

  void validate() const {
    if (categories < 1 || predicates < 2 || feature_dim < 1 || images < 1 ||
        min_objects < 1 || max_objects < min_objects)
      throw validation_error("synth config: counts out of range");
    if (feature_noise < 0 || annotated_fraction < 0 || annotated_fraction > 1 ||
        cooc_mix < 0 || cooc_mix > 1 || prior_temperature <= 0)
      throw validation_error("synth config: parameters out of range");
  }

  DatasetSchema schema() const {
    DatasetSchema s;
    char buf[32];
    for (std::size_t c = 0; c < categories; ++c) {
      std::snprintf(buf, sizeof buf, "cat%02zu", c);
      s.category_names.push_back(buf);
    }
    s.predicate_names.push_back("no-relationship");
    for (std::size_t k = 1; k < predicates; ++k) {
      std::snprintf(buf, sizeof buf, "rel%02zu", k);
      s.predicate_names.push_back(buf);
    }
    return s;
  }
};

struct GroundTruthProcess {
  SynthConfig config;
  std::vector<double> marginal;    // C: Zipf category marginal
  std::vector<double> cooc_cond;   // C*C: [existing*C + next] = P(next | existing)
  std::vector<double> prior;       // C*C*K: true P*(k | c, c')
  std::vector<double> prototypes;  // C*d_f

  const double* fiber(std::size_t c, std::size_t c2) const {
    return prior.data() + (c * config.categories + c2) * config.predicates;
  }
};

namespace detail {

inline std::vector<double> dirichlet_uniform(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> x(n);
  double s = 0.0;
  for (double& v : x) {
    v = e(rng);
    s += v;
  }
  for (double& v : x) v /= s;
  return x;
}

// p_i <- p_i^tau, renormalized; computed in log space.
inline void sharpen(std::vector<double>& p, double tau) {
  double mx = -1e300;
  for (double v : p) mx = std::max(mx, std::log(v));
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(tau * (std::log(v) - mx));
    s += v;
  }
  for (double& v : p) v /= s;
}

inline std::size_t sample_discrete(const std::vector<double>& w, Rng& rng,
                                   std::size_t begin = 0, std::size_t end = 0) {
  if (end == 0) end = w.size();
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) total += w[i];
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng);
  for (std::size_t i = begin; i < end; ++i) {
    x -= w[i];
    if (x <= 0.0) return i - begin;
  }
  return end - begin - 1;
}

inline std::size_t sample_discrete(const double* w, std::size_t n, Rng& rng) {
  return sample_discrete(std::vector<double>(w, w + n), rng);
}

}  // namespace detail

inline GroundTruthProcess build_process(const SynthConfig& cfg) {
  cfg.validate();
  GroundTruthProcess p;
  p.config = cfg;
  const std::size_t C = cfg.categories, K = cfg.predicates;

  p.marginal.resize(C);
  double z = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    p.marginal[c] = 1.0 / std::pow(static_cast<double>(c + 1), cfg.zipf_exponent);
    z += p.marginal[c];
  }
  for (double& v : p.marginal) v /= z;

  Rng proto_rng = make_rng(cfg.seed, 0x9701);
  std::normal_distribution<double> gauss(0.0, 1.0);
  p.prototypes.resize(C * cfg.feature_dim);
  for (double& v : p.prototypes) v = gauss(proto_rng);

  Rng cooc_rng = make_rng(cfg.seed, 0xC00C);
  p.cooc_cond.resize(C * C);
  for (std::size_t c = 0; c < C; ++c) {
    auto row = detail::dirichlet_uniform(C, cooc_rng);
    detail::sharpen(row, cfg.prior_temperature);
    std::copy(row.begin(), row.end(), p.cooc_cond.begin() + c * C);
  }

  Rng prior_rng = make_rng(cfg.seed, 0x9141);
  p.prior.resize(C * C * K);
  for (std::size_t f = 0; f < C * C; ++f) {
    auto q = detail::dirichlet_uniform(K - 1, prior_rng);
    detail::sharpen(q, cfg.prior_temperature);
    double* fiber = p.prior.data() + f * K;
    fiber[0] = 1.0 - cfg.annotated_fraction;
    for (std::size_t k = 1; k < K; ++k) fiber[k] = cfg.annotated_fraction * q[k - 1];
  }
  return p;
}

namespace detail {

// Category list for one image: first from the Zipf marginal, the rest from
// the co-occurrence conditional of a uniformly chosen existing object,
// mixed with the marginal.
inline std::vector<std::size_t> sample_labels(const GroundTruthProcess& p, std::size_t n,
                                              Rng& rng) {
  const std::size_t C = p.config.categories;
  std::vector<std::size_t> labels;
  labels.reserve(n);
  labels.push_back(sample_discrete(p.marginal, rng));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    const std::size_t anchor = labels[pick(rng)];
    if (u01(rng) < p.config.cooc_mix)
      labels.push_back(sample_discrete(p.cooc_cond.data() + anchor * C, C, rng));
    else
      labels.push_back(sample_discrete(p.marginal, rng));
  }
  return labels;
}

// Triplets for one image given its labels; predicates sampled from the
// fiber restricted to k >= 1.
inline std::vector<Triplet> sample_triplets(const GroundTruthProcess& p,
                                            const std::vector<std::size_t>& labels,
                                            Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Triplet> out;
  const std::size_t K = p.config.predicates;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i == j) continue;
      if (u01(rng) >= p.config.annotated_fraction) continue;
      const double* fiber = p.fiber(labels[i], labels[j]);
      const std::size_t k =
          1 + sample_discrete(std::vector<double>(fiber, fiber + K), rng, 1, K);
      out.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<int>(k)});
    }
  return out;
}

}  // namespace detail

inline std::vector<AnnotatedImage> generate(const GroundTruthProcess& p) {
  const SynthConfig& cfg = p.config;
  cfg.validate();
  std::vector<AnnotatedImage> images;
  images.reserve(cfg.images);
  std::normal_distribution<double> gauss(0.0, 1.0);
  char idbuf[32];

  for (std::size_t idx = 0; idx < cfg.images; ++idx) {
    Rng rng = make_rng(cfg.seed, 0xD474, idx);  // per-image stream
    AnnotatedImage img;
    std::snprintf(idbuf, sizeof idbuf, "synth-%06zu", idx);
    img.image_id = idbuf;
    img.width = cfg.image_w;
    img.height = cfg.image_h;

    std::uniform_int_distribution<std::size_t> ucount(cfg.min_objects, cfg.max_objects);
    const std::size_t n = ucount(rng);
    const auto labels = detail::sample_labels(p, n, rng);

    std::uniform_real_distribution<double> ux(0.0, cfg.image_w * 0.7);
    std::uniform_real_distribution<double> uy(0.0, cfg.image_h * 0.7);
    for (std::size_t i = 0; i < n; ++i) {
      Region r;
      r.label = static_cast<int>(labels[i]);
      const double x1 = ux(rng), y1 = uy(rng);
      std::uniform_real_distribution<double> uw(cfg.image_w * 0.05, cfg.image_w - x1);
      std::uniform_real_distribution<double> uh(cfg.image_h * 0.05, cfg.image_h - y1);
      r.box = {x1, y1, x1 + uw(rng), y1 + uh(rng)};
      r.feature.resize(cfg.feature_dim);
      const double* proto = p.prototypes.data() + labels[i] * cfg.feature_dim;
      for (std::size_t d = 0; d < cfg.feature_dim; ++d)
        r.feature[d] = proto[d] + cfg.feature_noise * gauss(rng);
      img.regions.push_back(std::move(r));
    }
    img.triplets = detail::sample_triplets(p, labels, rng);
    images.push_back(std::move(img));
  }
  return images;
}

// ---------------------------------------------------------------------------
// Analytic oracle for the frequency baseline.
//
// The baseline predicts argmax_{k>=1} P*(k|c,c') for every ordered pair,
// scored by that fiber entry. Expected per-predicate recall under the
// generative process is estimated by Monte Carlo over simulated images
// (labels and triplets only), independently of the model/metrics code.

struct FreqOracle {
  double mean_recall = 0.0;
  double standard_error = 0.0;               // of the Monte Carlo estimate
  std::vector<double> per_predicate;         // [K-1] expected recall
  std::vector<double> per_predicate_var;     // [K-1] per-image variance
  std::vector<std::size_t> images_with_pred; // [K-1] MC images containing k
  std::size_t samples = 0;

  // Standard error of the same mean-recall measurement over a dataset of
  // `n_images` generated images.
  double se_for_images(std::size_t n_images) const {
    double acc = 0.0;
    std::size_t present = 0;
    for (std::size_t p = 0; p < per_predicate.size(); ++p) {
      if (images_with_pred[p] == 0) continue;
      const double rate =
          static_cast<double>(images_with_pred[p]) / static_cast<double>(samples);
      const double expected_n = std::max(1.0, rate * static_cast<double>(n_images));
      acc += per_predicate_var[p] / expected_n;
      ++present;
    }
    return present == 0 ? 0.0 : std::sqrt(acc) / static_cast<double>(present);
  }
};

inline FreqOracle analytic_freq_mr(const GroundTruthProcess& p, std::size_t k_eval,
                                   std::size_t samples = 100000,
                                   std::uint64_t seed_stream = 0x04AC1E) {
  const SynthConfig& cfg = p.config;
  const std::size_t C = cfg.categories, K = cfg.predicates;
  const std::size_t P = K - 1;

  // argmax_{k>=1} of every true fiber (ties to the lowest index).
  std::vector<int> best(C * C);
  std::vector<double> best_score(C * C);
  for (std::size_t f = 0; f < C * C; ++f) {
    const double* fib = p.prior.data() + f * K;
    std::size_t arg = 1;
    for (std::size_t k = 2; k < K; ++k)
      if (fib[k] > fib[arg]) arg = k;
    best[f] = static_cast<int>(arg);
    best_score[f] = fib[arg];
  }

  std::vector<double> sum(P, 0.0), sumsq(P, 0.0);
  std::vector<std::size_t> count(P, 0);

  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = make_rng(cfg.seed, seed_stream, s);
    std::uniform_int_distribution<std::size_t> ucount(cfg.min_objects, cfg.max_objects);
    const std::size_t n = ucount(rng);
    const auto labels = detail::sample_labels(p, n, rng);
    const auto gts = detail::sample_triplets(p, labels, rng);
    if (gts.empty()) continue;

    // One prediction per ordered pair; keep the top k_eval by score.
    struct Cand {
      double score;
      int i, j, k;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::size_t f = labels[i] * C + labels[j];
        cands.push_back({best_score[f], static_cast<int>(i), static_cast<int>(j), best[f]});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::tie(a.i, a.j, a.k) < std::tie(b.i, b.j, b.k);
    });
    if (cands.size() > k_eval) cands.resize(k_eval);

    std::set<std::pair<int, int>> admitted;  // pair -> its predicted k survived the cut
    std::map<std::pair<int, int>, int> predicted;
    for (const Cand& c : cands) {
      admitted.emplace(c.i, c.j);
      predicted[{c.i, c.j}] = c.k;
    }

    std::vector<std::size_t> gt_count(P, 0), hit_count(P, 0);
    for (const Triplet& g : gts) {
      ++gt_count[static_cast<std::size_t>(g.predicate) - 1];
      auto it = predicted.find({g.subj, g.obj});
      if (it != predicted.end() && it->second == g.predicate)
        ++hit_count[static_cast<std::size_t>(g.predicate) - 1];
    }
    for (std::size_t q = 0; q < P; ++q) {
      if (gt_count[q] == 0) continue;
      const double r = static_cast<double>(hit_count[q]) / static_cast<double>(gt_count[q]);
      sum[q] += r;
      sumsq[q] += r * r;
      ++count[q];
    }
  }

  FreqOracle out;
  out.samples = samples;
  out.per_predicate.assign(P, 0.0);
  out.per_predicate_var.assign(P, 0.0);
  out.images_with_pred.assign(P, 0);
  double acc = 0.0, se_acc = 0.0;
  std::size_t present = 0;
  for (std::size_t q = 0; q < P; ++q) {
    out.images_with_pred[q] = count[q];
    if (count[q] == 0) continue;
    const double nq = static_cast<double>(count[q]);
    const double mean = sum[q] / nq;
    out.per_predicate[q] = mean;
    out.per_predicate_var[q] = std::max(0.0, sumsq[q] / nq - mean * mean);
    acc += mean;
    se_acc += out.per_predicate_var[q] / nq;
    ++present;
  }
  out.mean_recall = present == 0 ? 0.0 : acc / static_cast<double>(present);
  out.standard_error = present == 0 ? 0.0 : std::sqrt(se_acc) / static_cast<double>(present);
  return out;
}

// ---------------------------------------------------------------------------
// Process file (JSON): stores the true distributions for oracle checks.

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"categories", c.categories},
          {"predicates", c.predicates},
          {"feature_dim", c.feature_dim},
          {"images", c.images},
          {"min_objects", c.min_objects},
          {"max_objects", c.max_objects},
          {"zipf_exponent", c.zipf_exponent},
          {"prior_temperature", c.prior_temperature},
          {"cooc_mix", c.cooc_mix},
          {"feature_noise", c.feature_noise},
          {"annotated_fraction", c.annotated_fraction},
          {"seed", c.seed},
          {"image_w", c.image_w},
          {"image_h", c.image_h}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.categories = j.at("categories").get<std::size_t>();
  c.predicates = j.at("predicates").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.images = j.at("images").get<std::size_t>();
  c.min_objects = j.at("min_objects").get<std::size_t>();
  c.max_objects = j.at("max_objects").get<std::size_t>();
  c.zipf_exponent = j.at("zipf_exponent").get<double>();
  c.prior_temperature = j.at("prior_temperature").get<double>();
  c.cooc_mix = j.at("cooc_mix").get<double>();
  c.feature_noise = j.at("feature_noise").get<double>();
  c.annotated_fraction = j.at("annotated_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.image_w = j.at("image_w").get<double>();
  c.image_h = j.at("image_h").get<double>();
  return c;
}

inline void save_process(const GroundTruthProcess& p, const std::string& path) {
  nlohmann::json j = {{"config", to_json(p.config)},
                      {"marginal", p.marginal},
                      {"cooc_cond", p.cooc_cond},
                      {"prior", p.prior},
                      {"prototypes", p.prototypes}};
  io::write_file_atomic(path, j.dump() + "\n");
}

inline GroundTruthProcess load_process(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  GroundTruthProcess p;
  p.config = synth_config_from_json(j.at("config"));
  p.marginal = j.at("marginal").get<std::vector<double>>();
  p.cooc_cond = j.at("cooc_cond").get<std::vector<double>>();
  p.prior = j.at("prior").get<std::vector<double>>();
  p.prototypes = j.at("prototypes").get<std::vector<double>>();
  return p;
}

}  // namespace kern
