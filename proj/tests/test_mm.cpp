#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "asgea/mm.hpp"

using namespace asgea;
using nn::Param;
using nn::ParamStore;

namespace {

struct Fixture {
  KnowledgeGraph g1, g2;
  FeatureStore store;
  AttrTable attrs;

  Fixture() {
    g1.intern_entity("a0");
    g1.intern_entity("a1");  // attribute-less
    g2.intern_entity("b0");
    g2.intern_entity("b1");
    int vis = store.add_modality("vision", 3);
    store.add_feature(vis, "fa0", std::vector<float>{1.f, 0.f, 0.f});
    store.add_feature(vis, "fa0b", std::vector<float>{0.f, 1.f, 0.f});
    store.add_feature(vis, "fb0", std::vector<float>{0.f, 0.f, 1.f});
    g1.attr_triples.push_back({0, g1.intern_attribute("shape"), "fa0"});
    g1.attr_triples.push_back({0, g1.intern_attribute("color"), "fa0b"});
    g2.attr_triples.push_back({0, g2.intern_attribute("texture"), "fb0"});
    g2.attr_triples.push_back({1, g2.intern_attribute("shape"), "missing_key"});
    attrs = build_attr_table(g1, g2, store);
  }
};

}  // namespace

TEST_CASE("attribute table joins both KGs with a shared type vocabulary") {
  Fixture f;
  CHECK(f.attrs.attr_names == std::vector<std::string>{"shape", "color", "texture"});
  CHECK(f.attrs.per_entity.size() == 4);
  CHECK(f.attrs.has_attrs(0));
  CHECK_FALSE(f.attrs.has_attrs(1));
  CHECK(f.attrs.per_entity[0].size() == 2);
  // "shape" in KG2 maps to the same type id as in KG1.
  CHECK(f.attrs.per_entity[3][0].attr == f.attrs.attr_ids.at("shape"));
  // Unresolvable value keys keep the attribute but drop the feature.
  CHECK(f.attrs.per_entity[3][0].modality == -1);
  CHECK(f.attrs.per_entity[0][0].modality == f.store.modality_id("vision"));
}

TEST_CASE("align attention: singleton is certain, crafted logits match softmax") {
  Fixture f;
  ParamStore<double> params;
  MmScorer<double> scorer(params, f.store, f.attrs, 4, 1);

  // b0 has one attribute: weight 1 regardless of embeddings.
  auto w_single = scorer.attention_weights(2, 0);
  REQUIRE(w_single.size() == 1);
  CHECK(w_single[0] == doctest::Approx(1.0).epsilon(1e-12));

  // a0 has {shape, color}; partner b0 has {texture}. Make shape ∥ texture
  // and color ⟂ texture so the logits are [1, 0].
  Param<double>* emb = params.find("mm.attr_emb");
  REQUIRE(emb != nullptr);
  std::fill(emb->value.v.begin(), emb->value.v.end(), 0.0);
  emb->value.at(f.attrs.attr_ids.at("shape"), 0) = 1.0;
  emb->value.at(f.attrs.attr_ids.at("color"), 1) = 1.0;
  emb->value.at(f.attrs.attr_ids.at("texture"), 0) = 2.0;  // cosine ignores scale

  auto w = scorer.attention_weights(0, 2);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));

  scorer.set_variant(ModalVariant::NoAlignAttention);
  auto uniform = scorer.attention_weights(0, 2);
  CHECK(uniform[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(uniform[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("modal score is zero when either side lacks attributes") {
  Fixture f;
  ParamStore<double> params;
  MmScorer<double> scorer(params, f.store, f.attrs, 4, 2);
  nn::Tape<double> tape;
  std::unordered_map<const Param<double>*, nn::Tape<double>::Ref> leaves;
  auto s = scorer.score_single(tape, leaves, 1, 2);  // a1 has no attributes
  CHECK(tape.scalar(s) == 0.0);
  auto s2 = scorer.score_single(tape, leaves, 0, 2);
  CHECK(std::isfinite(tape.scalar(s2)));

  auto col = scorer.score_targets(tape, leaves, 0, {2, 3});
  CHECK(tape.val(col).size() == 2);
}

TEST_CASE("no-value variant scores from type embeddings only") {
  Fixture f;
  ParamStore<double> p1, p2;
  MmScorer<double> full(p1, f.store, f.attrs, 4, 3, ModalVariant::Full);
  MmScorer<double> novalue(p2, f.store, f.attrs, 4, 3, ModalVariant::NoValue);

  nn::Tape<double> t1, t2;
  std::unordered_map<const Param<double>*, nn::Tape<double>::Ref> l1, l2;
  double sf = t1.scalar(full.score_single(t1, l1, 0, 2));
  double sn = t2.scalar(novalue.score_single(t2, l2, 0, 2));
  CHECK(std::isfinite(sf));
  CHECK(std::isfinite(sn));
  CHECK(sf != sn);  // same seed, different value pathway
}

TEST_CASE("plain attribute encoding is the projected feature row") {
  Fixture f;
  ParamStore<double> params;
  MmScorer<double> scorer(params, f.store, f.attrs, 4, 4);
  Param<double>* proj = params.find("mm.proj.vision");
  REQUIRE(proj != nullptr);
  auto out = encode_attribute(*proj, f.store, "fa0b");
  REQUIRE(out.size() == 4);
  // fa0b is the unit vector on axis 1, so the projection is row 1 of W.
  for (int j = 0; j < 4; ++j) CHECK(out[j] == doctest::Approx(proj->value.at(1, j)).epsilon(1e-12));
  CHECK_THROWS_AS((void)encode_attribute(*proj, f.store, "nope"), DataError);
}

TEST_CASE("feature store round trips through disk") {
  Fixture f;
  auto bin = std::filesystem::temp_directory_path() / "asgea_mm_feat.bin";
  auto keys = std::filesystem::temp_directory_path() / "asgea_mm_feat.keys.json";
  f.store.save_modality(f.store.modality_id("vision"), bin, keys);
  FeatureStore loaded;
  loaded.load_modality("vision", bin, keys);
  const auto& a = f.store.modality(0);
  const auto& b = loaded.modality(0);
  CHECK(a.dim == b.dim);
  CHECK(a.rows == b.rows);
  CHECK(a.keys == b.keys);
  CHECK_THROWS_AS(loaded.load_modality("x", "/nonexistent.bin", keys), DataError);
}

TEST_CASE("modal anchor proposals match a brute-force mutual-NN oracle") {
  std::mt19937_64 rng(55);
  int n_side = 8, fdim = 5, d = 3;
  FeatureStore store;
  int vis = store.add_modality("vision", fdim);

  KnowledgeGraph g1, g2;
  AttrTable attrs;
  attrs.attr_names = {"feat"};
  attrs.attr_ids["feat"] = 0;
  attrs.per_entity.resize(2 * n_side);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int e = 0; e < 2 * n_side; ++e) {
    if (e % 3 == 2) continue;  // some entities stay featureless
    std::vector<float> feat(fdim);
    for (auto& x : feat) x = static_cast<float>(dist(rng));
    int32_t row = store.add_feature(vis, "k" + std::to_string(e), feat);
    attrs.per_entity[e].push_back({0, vis, row});
  }

  ParamStore<double> params;
  auto* proj = params.add("proj", fdim, d);
  nn::xavier_init(*proj, rng);

  AnchorSet existing = {{0, static_cast<EntityIdx>(n_side)}};
  double tau = 0.2;
  auto got = generate_modal_anchors<double>(store, attrs, {proj}, 0, n_side, 2 * n_side, tau,
                                            existing);

  // Oracle: project each entity's (single) feature row, mutual cosine NN.
  auto fused = [&](int e) {
    std::vector<double> out(d, 0.0);
    if (attrs.per_entity[e].empty()) return out;
    auto row = store.modality(vis).row(attrs.per_entity[e][0].row);
    for (int i = 0; i < fdim; ++i)
      for (int j = 0; j < d; ++j) out[j] += row[i] * proj->value.at(i, j);
    return out;
  };
  auto cos = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (int j = 0; j < d; ++j) dot += a[j] * b[j], na += a[j] * a[j], nb += b[j] * b[j];
    return na == 0 || nb == 0 ? -1.0 : dot / std::sqrt(na * nb);
  };
  AnchorSet expect;
  for (int u = 0; u < n_side; ++u) {
    if (attrs.per_entity[u].empty()) continue;
    int best_v = -1;
    double bs = -2;
    for (int vtx = n_side; vtx < 2 * n_side; ++vtx) {
      if (attrs.per_entity[vtx].empty()) continue;
      double s = cos(fused(u), fused(vtx));
      if (s > bs) bs = s, best_v = vtx;
    }
    if (best_v < 0 || bs < tau) continue;
    int back = -1;
    double bs2 = -2;
    for (int u2 = 0; u2 < n_side; ++u2) {
      if (attrs.per_entity[u2].empty()) continue;
      double s = cos(fused(best_v), fused(u2));
      if (s > bs2) bs2 = s, back = u2;
    }
    if (back != u) continue;
    if (u == 0 && best_v == n_side) continue;  // excluded as existing
    expect.emplace_back(u, best_v);
  }
  CHECK(got == expect);

  CHECK_THROWS_AS(generate_modal_anchors<double>(store, attrs, {proj}, 0, n_side, 2 * n_side,
                                                 0.0, {}),
                  ConfigError);
  CHECK_THROWS_AS(generate_modal_anchors<double>(store, attrs, {proj}, 0, n_side, 2 * n_side,
                                                 1.5, {}),
                  ConfigError);
}
