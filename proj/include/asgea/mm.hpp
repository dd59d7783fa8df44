#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_set>

#include "asgea/kg.hpp"
#include "asgea/nn.hpp"

namespace asgea {

// Precomputed per-modality value features (row-major f32), keyed by string.
class FeatureStore {
 public:
  struct Modality {
    std::string name;
    int dim = 0;
    std::vector<float> rows;  // count × dim
    std::vector<std::string> keys;
    std::unordered_map<std::string, int32_t> key_ids;

    int count() const { return dim == 0 ? 0 : static_cast<int>(rows.size()) / dim; }
    std::span<const float> row(int32_t r) const {
      return {rows.data() + static_cast<size_t>(r) * dim, static_cast<size_t>(dim)};
    }
  };

  int add_modality(const std::string& name, int dim);
  int32_t add_feature(int modality, const std::string& key, std::span<const float> values);

  int num_modalities() const { return static_cast<int>(modalities_.size()); }
  const Modality& modality(int i) const { return modalities_[i]; }
  int modality_id(const std::string& name) const;

  // Resolves a value key across modalities (keys must be unique store-wide).
  std::optional<std::pair<int, int32_t>> lookup(const std::string& key) const;

  // Binary format: "ASGF" magic, u32 version, modality name, u32 count,
  // u32 dim, f32 rows; companion JSON file maps keys to row indices.
  void save_modality(int modality, const std::filesystem::path& bin_path,
                     const std::filesystem::path& keymap_path) const;
  int load_modality(const std::string& name, const std::filesystem::path& bin_path,
                    const std::filesystem::path& keymap_path);

 private:
  std::vector<Modality> modalities_;
  std::unordered_map<std::string, int> modality_ids_;
};

// Joined attribute view over both KGs: a shared attribute-type vocabulary
// (interned by name) and per-entity attribute lists resolved against the
// feature store.
struct AttrTable {
  std::vector<std::string> attr_names;
  std::unordered_map<std::string, int32_t> attr_ids;

  struct Entry {
    int32_t attr;
    int modality;   // -1 when the value has no feature row
    int32_t row;
  };
  std::vector<std::vector<Entry>> per_entity;

  bool has_attrs(EntityIdx e) const { return !per_entity[e].empty(); }
};

AttrTable build_attr_table(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                           const FeatureStore& store);

enum class ModalVariant { Full, NoValue, NoAlignAttention };

// Multi-modal attribute scorer: modality projection, pair-aware align
// attention, and the modal score head. Parameters live in the caller's
// store so checkpoints and the optimizer see one model.
template <typename T>
class MmScorer {
 public:
  MmScorer(nn::ParamStore<T>& store, const FeatureStore& features, const AttrTable& attrs,
           int dim, uint64_t init_seed, ModalVariant variant = ModalVariant::Full)
      : features_(&features), attrs_(&attrs), dim_(dim), variant_(variant) {
    std::mt19937_64 rng(init_seed);
    for (int mi = 0; mi < features.num_modalities(); ++mi) {
      proj_.push_back(store.add("mm.proj." + features.modality(mi).name,
                                features.modality(mi).dim, dim));
      nn::xavier_init(*proj_.back(), rng);
    }
    attr_emb_ = store.add("mm.attr_emb",
                          std::max<int>(1, static_cast<int>(attrs.attr_names.size())), dim);
    nn::xavier_init(*attr_emb_, rng);
    head_ = nn::Mlp<T>::create(store, "mm.head", dim, dim, 1);
    head_.init(rng);
  }

  ModalVariant variant() const { return variant_; }
  void set_variant(ModalVariant v) { variant_ = v; }

  // h_𝒜 rows for every attribute of `e`, in attribute-list order: the
  // projected value feature, or the attribute-type embedding itself in the
  // no-value variant.
  typename nn::Tape<T>::Ref attribute_rows(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      EntityIdx e) const {
    const auto& entries = attrs_->per_entity[e];
    std::vector<typename nn::Tape<T>::Ref> rows;
    rows.reserve(entries.size());
    for (const auto& en : entries) {
      if (variant_ == ModalVariant::NoValue || en.modality < 0) {
        rows.push_back(tape.gather_rows(leaf(tape, leaves, attr_emb_), {en.attr}));
        continue;
      }
      const auto& mod = features_->modality(en.modality);
      nn::Tensor<T> feat(1, mod.dim);
      auto src = mod.row(en.row);
      for (int j = 0; j < mod.dim; ++j) feat.v[j] = static_cast<T>(src[j]);
      rows.push_back(tape.matmul(tape.leaf(feat), leaf(tape, leaves, proj_[en.modality])));
    }
    return tape.concat_rows(rows);
  }

  // score_m(e_u, e_v) on the tape; zero when either entity is attribute-less.
  typename nn::Tape<T>::Ref score_single(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      EntityIdx e_u, EntityIdx e_v) const {
    if (!attrs_->has_attrs(e_u) || !attrs_->has_attrs(e_v)) return tape.zeros(1, 1);
    auto h_u = pair_aware(tape, leaves, e_u, e_v);
    auto h_v = pair_aware(tape, leaves, e_v, e_u);
    auto prod = tape.mul(h_u, h_v);
    return head_.apply(tape, prod, leaf(tape, leaves, head_.W1), leaf(tape, leaves, head_.b1),
                       leaf(tape, leaves, head_.W2), leaf(tape, leaves, head_.b2));
  }

  // (num_targets × 1) column of modal scores against one source.
  typename nn::Tape<T>::Ref score_targets(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      EntityIdx source, const std::vector<EntityIdx>& targets) const {
    std::vector<typename nn::Tape<T>::Ref> rows;
    rows.reserve(targets.size());
    for (EntityIdx v : targets) rows.push_back(score_single(tape, leaves, source, v));
    return tape.concat_rows(rows);
  }

  // Align-attention weights of e_u against e_v (plain values, for tests
  // and explanations).
  std::vector<T> attention_weights(EntityIdx e_u, EntityIdx e_v) const {
    nn::Tape<T> tape;
    std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref> leaves;
    auto w = align_weights(tape, leaves, e_u, e_v);
    return tape.val(w);
  }

 private:
  typename nn::Tape<T>::Ref leaf(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      nn::Param<T>* p) const {
    auto it = leaves.find(p);
    if (it != leaves.end()) return it->second;
    auto ref = tape.leaf(p->value);
    leaves.emplace(p, ref);
    return ref;
  }

  typename nn::Tape<T>::Ref align_weights(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      EntityIdx e_u, EntityIdx e_v) const {
    const auto& au = attrs_->per_entity[e_u];
    const auto& av = attrs_->per_entity[e_v];
    int nu = static_cast<int>(au.size());
    if (variant_ == ModalVariant::NoAlignAttention) {
      nn::Tensor<T> uniform(nu, 1);
      for (auto& x : uniform.v) x = T(1) / static_cast<T>(nu);
      return tape.leaf(uniform);
    }
    std::vector<int32_t> iu(nu), iv(av.size());
    for (int i = 0; i < nu; ++i) iu[i] = au[i].attr;
    for (size_t j = 0; j < av.size(); ++j) iv[j] = av[j].attr;
    auto emb = leaf(tape, leaves, attr_emb_);
    auto sim = tape.cosine_rows(tape.gather_rows(emb, iu), tape.gather_rows(emb, iv));
    auto logits = tape.row_sum(sim);
    return tape.segment_softmax(logits, std::vector<int32_t>(nu, 0));
  }

  typename nn::Tape<T>::Ref pair_aware(
      nn::Tape<T>& tape, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
      EntityIdx e_u, EntityIdx e_v) const {
    auto weights = align_weights(tape, leaves, e_u, e_v);
    auto values = attribute_rows(tape, leaves, e_u);
    return tape.col_sum(tape.colmul(weights, values));
  }

  const FeatureStore* features_;
  const AttrTable* attrs_;
  int dim_;
  ModalVariant variant_;
  std::vector<nn::Param<T>*> proj_;
  nn::Param<T>* attr_emb_;
  nn::Mlp<T> head_;
};

// Plain (non-tape) modality projection of one stored feature row.
template <typename T>
std::vector<T> encode_attribute(const nn::Param<T>& proj, const FeatureStore& store,
                                const std::string& key) {
  auto loc = store.lookup(key);
  if (!loc) throw DataError("unknown feature key: " + key);
  const auto& mod = store.modality(loc->first);
  if (proj.value.rows != mod.dim)
    throw DataError("projection input dim " + std::to_string(proj.value.rows) +
                    " does not match feature dim " + std::to_string(mod.dim));
  auto row = mod.row(loc->second);
  std::vector<T> out(proj.value.cols, T(0));
  for (int i = 0; i < mod.dim; ++i)
    for (int j = 0; j < proj.value.cols; ++j)
      out[j] += static_cast<T>(row[i]) * proj.value.at(i, j);
  return out;
}

// Mutual-nearest-neighbour anchor proposals over fused (averaged projected)
// per-entity features of one modality, cosine similarity >= tau. Proposed
// pairs become r_anchor edges only, never training positives.
template <typename T>
AnchorSet generate_modal_anchors(const FeatureStore& store, const AttrTable& attrs,
                                 const std::vector<nn::Param<T>*>& projections, int modality,
                                 size_t n1, size_t n_total, double tau,
                                 const AnchorSet& existing) {
  if (tau <= 0.0 || tau > 1.0) throw ConfigError("modal anchor threshold must lie in (0, 1]");
  const auto& mod = store.modality(modality);
  nn::Param<T>* proj = projections.at(modality);
  int d = proj->value.cols;

  // Fused feature per entity: mean of its projected rows in this modality.
  std::vector<std::vector<T>> fused(n_total);
  for (size_t e = 0; e < n_total; ++e) {
    int count = 0;
    std::vector<T> acc(d, T(0));
    for (const auto& en : attrs.per_entity[e]) {
      if (en.modality != modality) continue;
      auto row = mod.row(en.row);
      for (int i = 0; i < mod.dim; ++i)
        for (int j = 0; j < d; ++j) acc[j] += static_cast<T>(row[i]) * proj->value.at(i, j);
      ++count;
    }
    if (count > 0) {
      for (auto& x : acc) x /= static_cast<T>(count);
      fused[e] = std::move(acc);
    }
  }

  auto cosine = [&](const std::vector<T>& a, const std::vector<T>& b) {
    double dot = 0, na = 0, nb = 0;
    for (int j = 0; j < d; ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    if (na == 0 || nb == 0) return -1.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  // Best cross-side neighbour each way; ties resolved to the lowest id.
  auto best = [&](EntityIdx e, bool to_side2) {
    EntityIdx lo = to_side2 ? static_cast<EntityIdx>(n1) : 0;
    EntityIdx hi = to_side2 ? static_cast<EntityIdx>(n_total) : static_cast<EntityIdx>(n1);
    EntityIdx arg = -1;
    double bs = -2.0;
    for (EntityIdx o = lo; o < hi; ++o) {
      if (fused[o].empty()) continue;
      double s = cosine(fused[e], fused[o]);
      if (s > bs) {
        bs = s;
        arg = o;
      }
    }
    return std::pair{arg, bs};
  };

  std::unordered_set<int64_t> taken;
  for (const auto& [a, b] : existing) taken.insert(static_cast<int64_t>(a) << 32 | b);

  AnchorSet out;
  for (EntityIdx e1 = 0; e1 < static_cast<EntityIdx>(n1); ++e1) {
    if (fused[e1].empty()) continue;
    auto [e2, sim] = best(e1, true);
    if (e2 < 0 || sim < tau) continue;
    auto [back, _] = best(e2, false);
    if (back != e1) continue;
    if (taken.count(static_cast<int64_t>(e1) << 32 | e2)) continue;
    out.emplace_back(e1, e2);
  }
  return out;
}

}  // namespace asgea
