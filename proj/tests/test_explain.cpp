#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include "asgea/explain.hpp"

using namespace asgea;

namespace {

struct Pair {
  KnowledgeGraph g1, g2;
  MergedGraph merged;
};

Pair diamond() {
  // Two parallel routes a0 -> anchor -> b2 plus one longer route.
  KnowledgeGraph g1, g2;
  for (int i = 0; i < 3; ++i) g1.intern_entity("a" + std::to_string(i));
  for (int i = 0; i < 3; ++i) g2.intern_entity("b" + std::to_string(i));
  auto r = g1.intern_relation("likes");
  auto s = g1.intern_relation("knows");
  g1.triples.push_back({0, r, 1});
  g1.triples.push_back({0, s, 2});
  auto r2 = g2.intern_relation("likes");
  g2.triples.push_back({2, r2, 0});
  g2.triples.push_back({2, r2, 1});
  Pair p;
  p.merged = build_merged_graph(g1, g2, {{1, 3}, {2, 4}});
  p.g1 = std::move(g1);
  p.g2 = std::move(g2);
  return p;
}

AttentionMap constant_attention(const LayeredAsg& asg, double a) {
  AttentionMap map(asg.layers.size());
  for (size_t l = 0; l < asg.layers.size(); ++l)
    for (const Triple& e : asg.layers[l]) map[l][e] = a;
  return map;
}

std::set<std::vector<Triple>> edge_seqs(const std::vector<WeightedPath>& paths) {
  std::set<std::vector<Triple>> out;
  for (const auto& p : paths) out.insert(p.path.edges);
  return out;
}

std::set<std::vector<Triple>> edge_seqs(const std::vector<AlignmentPath>& paths) {
  std::set<std::vector<Triple>> out;
  for (const auto& p : paths) out.insert(p.edges);
  return out;
}

Pair random_pair(std::mt19937_64& rng) {
  Pair out;
  int n = 6;
  for (int i = 0; i < n; ++i) out.g1.intern_entity("a" + std::to_string(i));
  for (int i = 0; i < n; ++i) out.g2.intern_entity("b" + std::to_string(i));
  for (KnowledgeGraph* g : {&out.g1, &out.g2})
    for (int e = 0; e < 10; ++e) {
      Triple t{static_cast<EntityIdx>(rng() % n),
               g->intern_relation("r" + std::to_string(rng() % 2)),
               static_cast<EntityIdx>(rng() % n)};
      if (t.head != t.tail) g->triples.push_back(t);
    }
  out.merged = build_merged_graph(out.g1, out.g2,
                                  {{0, static_cast<EntityIdx>(n)},
                                   {2, static_cast<EntityIdx>(n + 2)}});
  return out;
}

}  // namespace

TEST_CASE("threshold zero reproduces the exhaustive walk set") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = random_pair(rng);
    int K = 3;
    EntityIdx u = static_cast<EntityIdx>(rng() % p.merged.n1);
    auto asg = extract_merged_asg(p.merged, u, K);
    auto att = constant_attention(asg, 0.4);
    for (EntityIdx v : asg.reachable_targets) {
      auto expl = extract_explanation(p.merged, asg, att, v, 0.0);
      auto oracle = enumerate_paths_oracle(p.merged, u, v, K);
      CHECK(edge_seqs(expl.paths) == edge_seqs(oracle));
      for (const auto& wp : expl.paths)
        CHECK(wp.weight == doctest::Approx(std::pow(0.4, wp.path.edges.size())).epsilon(1e-9));
    }
  }
}

TEST_CASE("raising the threshold only removes paths") {
  auto p = diamond();
  auto asg = extract_merged_asg(p.merged, 0, 3);
  auto att = constant_attention(asg, 0.5);
  // Strengthen one full route: a0 -likes-> a1 -anchor-> b0 <-likes- b2.
  RelationIdx likes = p.g1.relation_ids.at("likes");
  att[0][Triple{0, likes, 1}] = 0.9;
  att[1][Triple{1, p.merged.anchor_rel(), 3}] = 0.7;
  att[2][Triple{3, p.merged.reverse_of(likes), 5}] = 0.7;

  EntityIdx gold = 5;  // b2
  auto lo = extract_explanation(p.merged, asg, att, gold, 0.1);
  auto mid = extract_explanation(p.merged, asg, att, gold, 0.6);
  auto hi = extract_explanation(p.merged, asg, att, gold, 0.95);

  CHECK(lo.paths.size() > mid.paths.size());
  auto lo_set = edge_seqs(lo.paths);
  for (const auto& seq : edge_seqs(mid.paths)) CHECK(lo_set.count(seq) == 1);
  CHECK(mid.paths.size() >= 1);
  CHECK(hi.paths.empty());

  // Sorted by weight descending.
  for (size_t i = 1; i < lo.paths.size(); ++i)
    CHECK(lo.paths[i - 1].weight >= lo.paths[i].weight);

  // Fallback is the best-product path when nothing survives.
  REQUIRE(hi.fallback.has_value());
  CHECK(hi.fallback->path.edges.front() == Triple{0, likes, 1});
  CHECK(hi.fallback->weight == doctest::Approx(0.9 * 0.7 * 0.7).epsilon(1e-9));
}

TEST_CASE("self-loop attention entries never enter paths") {
  auto p = diamond();
  auto asg = extract_merged_asg(p.merged, 0, 3);
  auto att = constant_attention(asg, 0.8);
  for (size_t l = 0; l < att.size(); ++l)
    att[l][Triple{0, p.merged.self_loop_rel(), 0}] = 1.0;
  auto expl = extract_explanation(p.merged, asg, att, 5, 0.0);
  for (const auto& wp : expl.paths)
    for (const Triple& e : wp.path.edges) CHECK(e.rel != p.merged.self_loop_rel());
}

TEST_CASE("path signatures classify rule shapes") {
  auto p = diamond();
  RelationIdx likes = 0;
  RelationIdx anchor = p.merged.anchor_rel();
  RelationIdx likes_rev = p.merged.reverse_of(likes);

  AlignmentPath one_hop;
  one_hop.edges = {{0, likes, 1}, {1, anchor, 3}, {3, likes_rev, 5}};
  one_hop.anchor_positions = {1};
  auto sig = path_signature(p.merged, one_hop);
  CHECK(sig.classify() == RuleClass::OneHop);
  CHECK(sig.anchor_count == 1);
  REQUIRE(sig.source_steps.size() == 1);
  CHECK(sig.source_steps[0].relation == "likes");
  CHECK_FALSE(sig.source_steps[0].inverse);
  REQUIRE(sig.target_steps.size() == 1);
  CHECK(sig.target_steps[0].relation == "likes");
  CHECK(sig.target_steps[0].inverse);

  AlignmentPath asym;
  asym.edges = {{0, likes, 1}, {1, likes, 2}, {2, anchor, 4}, {4, likes_rev, 5}};
  auto asig = path_signature(p.merged, asym);
  CHECK(asig.classify() == RuleClass::Asymmetric);
  CHECK(asig.source_steps.size() == 2);

  AlignmentPath sym2;
  sym2.edges = {{0, likes, 1}, {1, likes, 2}, {2, anchor, 4},
                {4, likes_rev, 5}, {5, likes_rev, 3}};
  auto ssig = path_signature(p.merged, sym2);
  CHECK(ssig.classify() == RuleClass::Symmetric);

  AlignmentPath multi;
  multi.edges = {{1, anchor, 3}, {3, p.merged.anchor_rev_rel(), 1}, {1, anchor, 3}};
  auto msig = path_signature(p.merged, multi);
  CHECK(msig.anchor_count == 3);
  CHECK(msig.source_steps.empty());
  CHECK(msig.target_steps.empty());

  AlignmentPath no_anchor;
  no_anchor.edges = {{0, likes, 1}};
  CHECK_THROWS_AS((void)path_signature(p.merged, no_anchor), DataError);
}

TEST_CASE("rule mining ranks by support then mean weight") {
  auto p = diamond();
  RelationIdx likes = 0, knows = 1;
  RelationIdx anchor = p.merged.anchor_rel();
  RelationIdx likes_rev = p.merged.reverse_of(likes);

  auto mk = [&](RelationIdx first, double w) {
    WeightedPath wp;
    wp.path.edges = {{0, first, 1}, {1, anchor, 3}, {3, likes_rev, 5}};
    wp.path.anchor_positions = {1};
    wp.weight = w;
    return wp;
  };
  std::vector<WeightedPath> paths = {mk(likes, 0.2), mk(likes, 0.4), mk(knows, 0.9)};
  auto rules = mine_rules(p.merged, paths);
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].support == 2);
  CHECK(rules[0].signature.source_steps[0].relation == "likes");
  CHECK(rules[0].mean_weight == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rules[1].support == 1);
  CHECK(rules[1].mean_weight == doctest::Approx(0.9).epsilon(1e-12));

  // Equal support: higher mean weight first.
  auto rules2 = mine_rules(p.merged, {mk(likes, 0.1), mk(knows, 0.8)});
  CHECK(rules2[0].signature.source_steps[0].relation == "knows");

  auto json1 = export_rules_json(rules);
  CHECK(json1 == export_rules_json(rules));
  CHECK(json1.find("\"one-hop\"") != std::string::npos);
}

TEST_CASE("rule instances need exactly one anchor and no revisits") {
  auto p = diamond();
  RelationIdx likes = 0;
  RelationIdx anchor = p.merged.anchor_rel();
  RelationIdx likes_rev = p.merged.reverse_of(likes);

  AlignmentPath good;
  good.edges = {{0, likes, 1}, {1, anchor, 3}, {3, likes_rev, 5}};
  good.anchor_positions = {1};
  CHECK(is_rule_instance(good));

  AlignmentPath two_anchors;
  two_anchors.edges = {{1, anchor, 3}, {3, p.merged.anchor_rev_rel(), 1}, {1, anchor, 3}};
  two_anchors.anchor_positions = {0, 1, 2};
  CHECK_FALSE(is_rule_instance(two_anchors));

  AlignmentPath revisits;
  revisits.edges = {{0, likes, 1}, {1, anchor, 3}, {3, likes_rev, 5}, {5, likes, 3}};
  revisits.anchor_positions = {1};
  CHECK_FALSE(is_rule_instance(revisits));

  AlignmentPath empty;
  CHECK_FALSE(is_rule_instance(empty));
}

TEST_CASE("pair-level mining counts each pair once per signature") {
  auto p = diamond();
  RelationIdx likes = 0;
  RelationIdx anchor = p.merged.anchor_rel();
  RelationIdx likes_rev = p.merged.reverse_of(likes);
  auto mk = [&](double w) {
    WeightedPath wp;
    wp.path.edges = {{0, likes, 1}, {1, anchor, 3}, {3, likes_rev, 5}};
    wp.path.anchor_positions = {1};
    wp.weight = w;
    return wp;
  };
  std::vector<std::vector<WeightedPath>> per_pair = {{mk(0.2), mk(0.4)}, {mk(0.6)}};
  auto rules = mine_rules(p.merged, per_pair);
  REQUIRE(rules.size() == 1);
  CHECK(rules[0].support == 2);  // pairs, not the three walks
  CHECK(rules[0].mean_weight == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("precision scoring rewards rules that land on gold") {
  auto p = diamond();
  RelationIdx likes = 0;
  RelationIdx anchor = p.merged.anchor_rel();
  RelationIdx likes_rev = p.merged.reverse_of(likes);

  WeightedPath exact;
  exact.path.edges = {{0, likes, 1}, {1, anchor, 3}, {3, likes_rev, 5}};
  exact.path.anchor_positions = {1};
  exact.weight = 0.5;
  WeightedPath stops_short;  // only reaches the anchored entity, never gold
  stops_short.path.edges = {{0, likes, 1}, {1, anchor, 3}};
  stops_short.path.anchor_positions = {1};
  stops_short.weight = 0.9;

  auto rules = mine_rules(p.merged, {stops_short, exact});
  REQUIRE(rules.size() == 2);
  score_rules(p.merged, rules, {{0, 5}});
  CHECK(rules[0].signature.target_steps.size() == 1);
  CHECK(rules[0].precision == doctest::Approx(1.0));
  CHECK(rules[0].pairs_fired == 1);
  CHECK(rules[1].precision == doctest::Approx(0.0));
  CHECK(rules[1].pairs_fired == 1);

  auto js = export_rules_json(rules);
  CHECK(js.find("\"precision\"") != std::string::npos);
}

TEST_CASE("exports are deterministic and readable") {
  auto p = diamond();
  auto asg = extract_merged_asg(p.merged, 0, 3);
  auto att = constant_attention(asg, 0.7);
  auto expl = extract_explanation(p.merged, asg, att, 5, 0.0);
  REQUIRE(!expl.paths.empty());

  auto dot = export_paths_dot(p.merged, expl.paths, &p.g1, &p.g2);
  CHECK(dot == export_paths_dot(p.merged, expl.paths, &p.g1, &p.g2));
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("a0") != std::string::npos);
  CHECK(dot.find("style=dashed") != std::string::npos);  // anchor edges stand out

  auto js = export_paths_json(p.merged, expl.paths, &p.g1, &p.g2);
  CHECK(js == export_paths_json(p.merged, expl.paths, &p.g1, &p.g2));
  CHECK(js.find("\"b2\"") != std::string::npos);
  CHECK(js.find("anchor") != std::string::npos);
}

TEST_CASE("mismatched attention maps are rejected") {
  auto p = diamond();
  auto asg = extract_merged_asg(p.merged, 0, 3);
  AttentionMap wrong_depth(2);
  CHECK_THROWS_AS((void)extract_explanation(p.merged, asg, wrong_depth, 5, 0.0), DataError);
  auto missing = constant_attention(asg, 0.5);
  missing[0].clear();
  CHECK_THROWS_AS((void)extract_explanation(p.merged, asg, missing, 5, 0.0), DataError);
}
