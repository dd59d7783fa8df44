#include "asgea/synth.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <unordered_set>

#include "json.hpp"

namespace asgea {

void SynthSpec::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError("synth spec: " + what); };
  if (entities_per_side < 4) bad("entities_per_side >= 4");
  if (templates.empty()) bad("at least one template");
  int used = 0;
  for (const auto& t : templates) {
    if (t.k1 < 1 || t.k1 > 3 || t.k2 < 1 || t.k2 > 3) bad("template hops in [1, 3]");
    used += t.k1 + t.k2;
  }
  if (relation_vocab < used) bad("relation_vocab must cover all template hops");
  if (noise_edges > 0 && relation_vocab == used)
    bad("noise edges need at least one non-template relation");
  if (witnesses_per_pair < 1) bad("witnesses_per_pair >= 1");
  if (noise_edges < 0) bad("noise_edges >= 0");
  if (seed_fraction <= 0.0 || seed_fraction >= 1.0) bad("seed_fraction in (0, 1)");
  if (with_attributes && feature_dim < 2) bad("feature_dim >= 2");
  if (feature_noise < 0.0) bad("feature_noise >= 0");
}

std::string SynthSpec::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& tp : templates) t.push_back({{"k1", tp.k1}, {"k2", tp.k2}});
  return nlohmann::json{{"entities_per_side", entities_per_side},
                        {"relation_vocab", relation_vocab},
                        {"templates", std::move(t)},
                        {"witnesses_per_pair", witnesses_per_pair},
                        {"noise_edges", noise_edges},
                        {"seed_fraction", seed_fraction},
                        {"rng_seed", rng_seed},
                        {"with_attributes", with_attributes},
                        {"feature_dim", feature_dim},
                        {"feature_noise", feature_noise}}
      .dump(2);
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synth spec JSON: ") + e.what());
  }
  SynthSpec s;
  s.entities_per_side = j.value("entities_per_side", s.entities_per_side);
  s.relation_vocab = j.value("relation_vocab", s.relation_vocab);
  if (j.contains("templates")) {
    s.templates.clear();
    for (const auto& t : j.at("templates"))
      s.templates.push_back({t.value("k1", 1), t.value("k2", 1)});
  }
  s.witnesses_per_pair = j.value("witnesses_per_pair", s.witnesses_per_pair);
  s.noise_edges = j.value("noise_edges", s.noise_edges);
  s.seed_fraction = j.value("seed_fraction", s.seed_fraction);
  s.rng_seed = j.value("rng_seed", s.rng_seed);
  s.with_attributes = j.value("with_attributes", s.with_attributes);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.feature_noise = j.value("feature_noise", s.feature_noise);
  s.validate();
  return s;
}

namespace {

std::vector<float> unit_gaussian(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<float> v(dim);
  double n2 = 0;
  for (auto& x : v) {
    x = static_cast<float>(nd(rng));
    n2 += static_cast<double>(x) * x;
  }
  double inv = 1.0 / std::sqrt(std::max(n2, 1e-12));
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

std::vector<float> perturb(const std::vector<float>& base, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<float> v(base.size());
  double n2 = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(base[i] + noise * nd(rng));
    n2 += static_cast<double>(v[i]) * v[i];
  }
  double inv = 1.0 / std::sqrt(std::max(n2, 1e-12));
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

}  // namespace

SynthResult generate_synth(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  SynthResult out;
  int n = spec.entities_per_side;

  for (int i = 0; i < n; ++i) out.g1.intern_entity("a" + std::to_string(i));
  for (int i = 0; i < n; ++i) out.g2.intern_entity("b" + std::to_string(i));

  std::vector<std::string> rels;
  for (int r = 0; r < spec.relation_vocab; ++r) rels.push_back("r" + std::to_string(r));

  // Disjoint relation blocks per template keep rule bodies unambiguous.
  struct Assigned {
    std::vector<std::string> src, tgt;
  };
  std::vector<Assigned> assigned;
  std::unordered_set<std::string> template_rels;
  int cursor = 0;
  for (const auto& t : spec.templates) {
    Assigned a;
    for (int s = 0; s < t.k1; ++s) a.src.push_back(rels[cursor++]);
    for (int s = 0; s < t.k2; ++s) a.tgt.push_back(rels[cursor++]);
    for (const auto& r : a.src) template_rels.insert(r);
    for (const auto& r : a.tgt) template_rels.insert(r);
    assigned.push_back(std::move(a));
  }
  for (size_t t = 0; t < assigned.size(); ++t) {
    RuleSignature sig;
    for (const auto& r : assigned[t].src) sig.source_steps.push_back({r, false});
    for (auto it = assigned[t].tgt.rbegin(); it != assigned[t].tgt.rend(); ++it)
      sig.target_steps.push_back({*it, true});
    out.truth.push_back(std::move(sig));
  }

  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
  int ns = static_cast<int>(std::floor(spec.seed_fraction * n));
  if (ns < 2 || ns >= n) throw ConfigError("synth spec: seed split leaves an empty side");
  std::vector<int> seed_idx(idx.begin(), idx.begin() + ns);
  std::vector<int> test_idx(idx.begin() + ns, idx.end());

  std::unordered_set<Triple, TripleHash> seen1, seen2;
  auto add1 = [&](EntityIdx h, const std::string& r, EntityIdx t) {
    Triple tr{h, out.g1.intern_relation(r), t};
    if (seen1.insert(tr).second) out.g1.triples.push_back(tr);
  };
  auto add2 = [&](EntityIdx h, const std::string& r, EntityIdx t) {
    Triple tr{h, out.g2.intern_relation(r), t};
    if (seen2.insert(tr).second) out.g2.triples.push_back(tr);
  };

  // Witness chains. Anchor reuse per (anchor, template) is discouraged by
  // rejection so distinct gold pairs rarely share a full rule instance.
  std::unordered_map<int64_t, int> combo_use;
  int mid1 = 0, mid2 = 0;
  for (int i = 0; i < n; ++i) {
    for (size_t t = 0; t < assigned.size(); ++t) {
      for (int w = 0; w < spec.witnesses_per_pair; ++w) {
        int j = -1;
        for (int tries = 0; tries < 50; ++tries) {
          int cand = seed_idx[rng() % seed_idx.size()];
          if (cand == i) continue;
          j = cand;
          if (combo_use[static_cast<int64_t>(cand) * 64 + static_cast<int64_t>(t)] == 0) break;
        }
        if (j < 0) j = seed_idx[0] == i ? seed_idx[1] : seed_idx[0];
        ++combo_use[static_cast<int64_t>(j) * 64 + static_cast<int64_t>(t)];

        const auto& a = assigned[t];
        EntityIdx prev = static_cast<EntityIdx>(i);
        for (size_t s = 0; s < a.src.size(); ++s) {
          EntityIdx nxt = s + 1 == a.src.size()
                              ? static_cast<EntityIdx>(j)
                              : out.g1.intern_entity("am" + std::to_string(mid1++));
          add1(prev, a.src[s], nxt);
          prev = nxt;
        }
        prev = static_cast<EntityIdx>(i);
        for (size_t s = 0; s < a.tgt.size(); ++s) {
          EntityIdx nxt = s + 1 == a.tgt.size()
                              ? static_cast<EntityIdx>(j)
                              : out.g2.intern_entity("bm" + std::to_string(mid2++));
          add2(prev, a.tgt[s], nxt);
          prev = nxt;
        }
      }
    }
  }

  // Same-side noise over non-template relations only, so noise can never
  // complete a planted rule body.
  std::vector<std::string> noise_rels;
  for (const auto& r : rels)
    if (!template_rels.count(r)) noise_rels.push_back(r);
  for (int side = 0; side < 2; ++side) {
    KnowledgeGraph& g = side == 0 ? out.g1 : out.g2;
    std::function<void(EntityIdx, const std::string&, EntityIdx)> add;
    if (side == 0)
      add = add1;
    else
      add = add2;
    int placed = 0;
    size_t attempts = 0, budget = 100 * static_cast<size_t>(spec.noise_edges) + 100;
    while (placed < spec.noise_edges) {
      if (++attempts > budget) throw DataError("noise edge sampling budget exceeded");
      EntityIdx h = static_cast<EntityIdx>(rng() % g.num_entities());
      EntityIdx t = static_cast<EntityIdx>(rng() % g.num_entities());
      const std::string& r = rels[rng() % rels.size()];
      if (h == t) continue;
      if (template_rels.count(r)) {
        ++out.rejected_noise;
        continue;
      }
      Triple tr{h, g.relation_ids.count(r) ? g.relation_ids.at(r) : -1, t};
      auto& seen = side == 0 ? seen1 : seen2;
      if (tr.rel >= 0 && seen.count(tr)) continue;
      add(h, r, t);
      ++placed;
    }
  }

  if (spec.with_attributes) {
    int vis = out.features.add_modality("vision", spec.feature_dim);
    auto profile1 = out.g1.intern_attribute("profile");
    auto junk1 = out.g1.intern_attribute("tag");
    auto profile2 = out.g2.intern_attribute("profile");
    auto junk2 = out.g2.intern_attribute("tag");
    for (int i = 0; i < n; ++i) {
      auto base = unit_gaussian(spec.feature_dim, rng);
      std::string ka = "fa" + std::to_string(i), kb = "fb" + std::to_string(i);
      out.features.add_feature(vis, ka, perturb(base, spec.feature_noise, rng));
      out.features.add_feature(vis, kb, perturb(base, spec.feature_noise, rng));
      std::string ja = "ja" + std::to_string(i), jb = "jb" + std::to_string(i);
      out.features.add_feature(vis, ja, unit_gaussian(spec.feature_dim, rng));
      out.features.add_feature(vis, jb, unit_gaussian(spec.feature_dim, rng));
      out.g1.attr_triples.push_back({static_cast<EntityIdx>(i), profile1, ka});
      out.g1.attr_triples.push_back({static_cast<EntityIdx>(i), junk1, ja});
      out.g2.attr_triples.push_back({static_cast<EntityIdx>(i), profile2, kb});
      out.g2.attr_triples.push_back({static_cast<EntityIdx>(i), junk2, jb});
    }
  }

  EntityIdx n1 = static_cast<EntityIdx>(out.g1.num_entities());
  for (int i = 0; i < n; ++i)
    out.gold.emplace_back(static_cast<EntityIdx>(i), n1 + static_cast<EntityIdx>(i));
  for (int i : seed_idx)
    out.seeds.emplace_back(static_cast<EntityIdx>(i), n1 + static_cast<EntityIdx>(i));
  for (int i : test_idx)
    out.test.emplace_back(static_cast<EntityIdx>(i), n1 + static_cast<EntityIdx>(i));
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthSpec& spec,
                 const SynthResult& result) {
  std::filesystem::create_directories(dir);
  write_triple_file(dir / "kg1.tsv", result.g1);
  write_triple_file(dir / "kg2.tsv", result.g2);
  write_anchor_file(dir / "seeds.tsv", result.seeds, result.g1, result.g2);
  write_anchor_file(dir / "test.tsv", result.test, result.g1, result.g2);

  std::ofstream spec_out(dir / "spec.json");
  spec_out << spec.to_json() << "\n";

  std::vector<MinedRule> truth;
  for (const auto& sig : result.truth) truth.push_back({sig, 0, 0.0});
  std::ofstream rules_out(dir / "rules_truth.json");
  rules_out << export_rules_json(truth) << "\n";

  if (spec.with_attributes) {
    auto write_attrs = [](const std::filesystem::path& p, const KnowledgeGraph& g) {
      std::ofstream os(p);
      for (const auto& at : g.attr_triples)
        os << g.entity_names[at.entity] << "\t" << g.attribute_names[at.attr] << "\t"
           << at.value_key << "\n";
    };
    write_attrs(dir / "attrs1.tsv", result.g1);
    write_attrs(dir / "attrs2.tsv", result.g2);
    int vis = result.features.modality_id("vision");
    result.features.save_modality(vis, dir / "features_vision.bin",
                                  dir / "features_vision.keys.json");
  }
}

}  // namespace asgea
