#pragma once
// Statistical knowledge counted from training annotations:
//
//   cooc[c,c']    P(an object of category c appears in an image | one of c'
//                 does) — image-level presence, directional.
//   prior[c,c',k] P(predicate k | subject category c, object category c'),
//                 counted over all ordered region pairs; unannotated pairs
//                 count as predicate 0 (no-relationship). Fibers never seen
//                 fall back to uniform 1/K so downstream message passing
//                 always has nonzero edges.
//
// Also provides the frequency baseline (top fiber entry) and the uniform
// ablations used in the comparison runs.

#include <map>
#include <string>
#include <vector>

#include "kern/dataset.hpp"
#include "kern/error.hpp"
#include "kern/io.hpp"

namespace kern {

struct KnowledgeBase {
  DatasetSchema schema;
  std::vector<double> cooc;   // C*C, [c*C + c2]
  std::vector<double> prior;  // C*C*K, [(c*C + c2)*K + k]

  std::size_t C() const { return schema.num_categories(); }
  std::size_t K() const { return schema.num_predicates(); }

  double cooc_at(std::size_t c, std::size_t c2) const { return cooc[c * C() + c2]; }
  double& cooc_at(std::size_t c, std::size_t c2) { return cooc[c * C() + c2]; }

  const double* fiber(std::size_t subj, std::size_t obj) const {
    return prior.data() + (subj * C() + obj) * K();
  }
  double* fiber(std::size_t subj, std::size_t obj) {
    return prior.data() + (subj * C() + obj) * K();
  }
  std::vector<double> fiber_vec(std::size_t subj, std::size_t obj) const {
    const double* f = fiber(subj, obj);
    return std::vector<double>(f, f + K());
  }

  void validate(double tol = 1e-9) const {
    if (cooc.size() != C() * C() || prior.size() != C() * C() * K())
      throw validation_error("knowledge base: storage does not match schema");
    for (double v : cooc)
      if (!(v >= 0.0 && v <= 1.0))
        throw validation_error("knowledge base: co-occurrence entry outside [0,1]");
    for (std::size_t c = 0; c < C(); ++c)
      for (std::size_t c2 = 0; c2 < C(); ++c2) {
        const double* f = fiber(c, c2);
        double s = 0.0;
        for (std::size_t k = 0; k < K(); ++k) {
          if (f[k] < 0.0) throw validation_error("knowledge base: negative prior entry");
          s += f[k];
        }
        if (std::abs(s - 1.0) > tol)
          throw validation_error("knowledge base: prior fiber (" + std::to_string(c) + "," +
                                 std::to_string(c2) + ") sums to " + std::to_string(s));
      }
  }
};

namespace detail {

inline void check_labels(const std::vector<AnnotatedImage>& images,
                         const DatasetSchema& schema) {
  if (images.empty()) throw validation_error("counting requires a non-empty dataset");
  const int C = static_cast<int>(schema.num_categories());
  for (const AnnotatedImage& img : images)
    for (const Region& r : img.regions)
      if (r.label < 0 || r.label >= C)
        throw validation_error("image " + img.image_id + ": label " +
                               std::to_string(r.label) + " out of range");
}

}  // namespace detail

// cooc[c,c'] = #images with >=1 c and >=1 c'  /  #images with >=1 c'.
// Presence is image-level; instance counts are irrelevant. Categories never
// observed leave their column (and row) at zero.
inline std::vector<double> count_object_cooccurrence(const std::vector<AnnotatedImage>& images,
                                                     const DatasetSchema& schema) {
  detail::check_labels(images, schema);
  const std::size_t C = schema.num_categories();
  std::vector<std::uint64_t> joint(C * C, 0), present(C, 0);
  std::vector<char> in_image(C);
  for (const AnnotatedImage& img : images) {
    std::fill(in_image.begin(), in_image.end(), 0);
    for (const Region& r : img.regions) in_image[static_cast<std::size_t>(r.label)] = 1;
    for (std::size_t c = 0; c < C; ++c) {
      if (!in_image[c]) continue;
      ++present[c];
      for (std::size_t c2 = 0; c2 < C; ++c2)
        if (in_image[c2]) ++joint[c * C + c2];
    }
  }
  std::vector<double> m(C * C, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t c2 = 0; c2 < C; ++c2)
      if (present[c2] > 0)
        m[c * C + c2] = static_cast<double>(joint[c * C + c2]) / static_cast<double>(present[c2]);
  return m;
}

// prior[c,c',k]: every ordered pair of regions contributes one count — its
// annotated predicate, or 0 when unannotated. Fibers normalize to 1;
// never-observed fibers become uniform 1/K.
inline std::vector<double> count_relation_prior(const std::vector<AnnotatedImage>& images,
                                                const DatasetSchema& schema) {
  detail::check_labels(images, schema);
  const std::size_t C = schema.num_categories();
  const std::size_t K = schema.num_predicates();
  std::vector<std::uint64_t> counts(C * C * K, 0);
  for (const AnnotatedImage& img : images) {
    std::map<std::pair<int, int>, int> annotated;
    for (const Triplet& t : img.triplets) annotated[{t.subj, t.obj}] = t.predicate;
    const int n = static_cast<int>(img.regions.size());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto it = annotated.find({i, j});
        const int k = it == annotated.end() ? 0 : it->second;
        const std::size_t ci = static_cast<std::size_t>(img.regions[i].label);
        const std::size_t cj = static_cast<std::size_t>(img.regions[j].label);
        ++counts[(ci * C + cj) * K + static_cast<std::size_t>(k)];
      }
  }
  std::vector<double> m(C * C * K, 0.0);
  for (std::size_t f = 0; f < C * C; ++f) {
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < K; ++k) total += counts[f * K + k];
    if (total == 0) {
      for (std::size_t k = 0; k < K; ++k) m[f * K + k] = 1.0 / static_cast<double>(K);
    } else {
      for (std::size_t k = 0; k < K; ++k)
        m[f * K + k] = static_cast<double>(counts[f * K + k]) / static_cast<double>(total);
    }
  }
  return m;
}

inline KnowledgeBase build_knowledge_base(const std::vector<AnnotatedImage>& images,
                                          const DatasetSchema& schema) {
  KnowledgeBase kb;
  kb.schema = schema;
  kb.cooc = count_object_cooccurrence(images, schema);
  kb.prior = count_relation_prior(images, schema);
  return kb;
}

// The frequency baseline: return the prior fiber for (subj, obj). With
// exclude_norel the no-relationship entry is zeroed and the rest
// renormalized (uniform over k >= 1 if nothing remains). The argmax of the
// returned distribution is the baseline's prediction.
inline std::vector<double> freq_predict(const KnowledgeBase& kb, std::size_t subj_label,
                                        std::size_t obj_label, bool exclude_norel) {
  if (subj_label >= kb.C() || obj_label >= kb.C())
    throw validation_error("freq_predict: label out of range");
  std::vector<double> f = kb.fiber_vec(subj_label, obj_label);
  if (!exclude_norel) return f;
  f[0] = 0.0;
  double s = 0.0;
  for (double v : f) s += v;
  if (s <= 0.0) {
    const double u = 1.0 / static_cast<double>(kb.K() - 1);
    for (std::size_t k = 1; k < kb.K(); ++k) f[k] = u;
  } else {
    for (double& v : f) v /= s;
  }
  return f;
}

// Uniform ablations: every prior fiber becomes 1/K; with ablate_cooc the
// co-occurrence matrix additionally becomes 1/C everywhere.
inline KnowledgeBase make_uniform_ablation(const KnowledgeBase& kb, bool ablate_cooc = false) {
  KnowledgeBase out = kb;
  const double uk = 1.0 / static_cast<double>(kb.K());
  std::fill(out.prior.begin(), out.prior.end(), uk);
  if (ablate_cooc) {
    const double uc = 1.0 / static_cast<double>(kb.C());
    std::fill(out.cooc.begin(), out.cooc.end(), uc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: magic "KERNKB1", C, K, names, raw little-endian float64
// matrices, FNV-1a checksum.

inline constexpr char kKbMagic[7] = {'K', 'E', 'R', 'N', 'K', 'B', '1'};

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
  io::Writer w;
  w.raw(kKbMagic, sizeof kKbMagic);
  w.u32(static_cast<std::uint32_t>(kb.C()));
  w.u32(static_cast<std::uint32_t>(kb.K()));
  for (const auto& name : kb.schema.category_names) w.str(name);
  for (const auto& name : kb.schema.predicate_names) w.str(name);
  w.f64s(kb.cooc);
  w.f64s(kb.prior);
  io::write_checksummed(path, w);
}

inline KnowledgeBase load_kb(const std::string& path) {
  const auto buf = io::read_file(path);
  io::Reader r = io::open_checksummed(buf, path);
  char magic[7];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kKbMagic, sizeof magic) != 0)
    throw parse_error(path + ": not a knowledge-base file (bad magic)");
  KnowledgeBase kb;
  const std::uint32_t C = r.u32();
  const std::uint32_t K = r.u32();
  kb.schema.category_names.resize(C);
  for (auto& name : kb.schema.category_names) name = r.str();
  kb.schema.predicate_names.resize(K);
  for (auto& name : kb.schema.predicate_names) name = r.str();
  kb.schema.validate();
  r.f64s(kb.cooc, static_cast<std::size_t>(C) * C);
  r.f64s(kb.prior, static_cast<std::size_t>(C) * C * K);
  return kb;
}

}  // namespace kern
