#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "asgea/model.hpp"

using namespace asgea;
using nn::Param;

namespace {

MergedGraph chain_graph() {
  // a0 -r-> a1, anchor (a1, b0), b1 -r-> b0; global ids a0=0 a1=1 b0=2 b1=3.
  KnowledgeGraph g1, g2;
  g1.intern_entity("a0");
  g1.intern_entity("a1");
  g1.triples.push_back({0, g1.intern_relation("r"), 1});
  g2.intern_entity("b0");
  g2.intern_entity("b1");
  g2.triples.push_back({1, g2.intern_relation("r"), 0});
  return build_merged_graph(g1, g2, {{1, 2}});
}

struct RandomPair {
  KnowledgeGraph g1, g2;
  MergedGraph merged;
};

RandomPair random_graph(std::mt19937_64& rng, int n = 6) {
  RandomPair out;
  for (int i = 0; i < n; ++i) out.g1.intern_entity("a" + std::to_string(i));
  for (int i = 0; i < n; ++i) out.g2.intern_entity("b" + std::to_string(i));
  for (KnowledgeGraph* g : {&out.g1, &out.g2})
    for (int e = 0; e < 2 * n; ++e) {
      Triple t{static_cast<EntityIdx>(rng() % n),
               g->intern_relation("r" + std::to_string(rng() % 2)),
               static_cast<EntityIdx>(rng() % n)};
      if (t.head != t.tail) g->triples.push_back(t);
    }
  AnchorSet anchors = {{0, static_cast<EntityIdx>(n)},
                       {1, static_cast<EntityIdx>(n + 1)}};
  out.merged = build_merged_graph(out.g1, out.g2, anchors);
  return out;
}

}  // namespace

TEST_CASE("all-zero parameters give half attention and zero scores") {
  auto m = chain_graph();
  ModelConfig cfg;
  cfg.depth = 3;
  cfg.dim = 4;
  cfg.dim_kg = 2;
  cfg.dim_kg_out = 2;
  AsgnnModel<double> model(cfg, m.num_entities(), m.num_relations(), 1);
  for (const auto& p : model.params()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);

  auto asg = extract_merged_asg(m, 0, 3);
  std::mt19937_64 rng(0);
  auto fr = model.forward(asg, false, rng, m.self_loop_rel());
  for (const auto& layer : fr.attention.layers)
    for (const auto& [edge, a] : layer) CHECK(a == doctest::Approx(0.5).epsilon(1e-12));
  for (double s : fr.tape.val(fr.scores)) CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fr.score_of(99) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("forward matches a scalar re-derivation on the chain") {
  auto m = chain_graph();
  ModelConfig cfg;
  cfg.depth = 3;
  cfg.dim = 1;
  cfg.dim_kg = 1;
  cfg.dim_kg_out = 1;
  AsgnnModel<double> model(cfg, m.num_entities(), m.num_relations(), 2);

  // Deterministic, distinct parameter values.
  double v = 0.05;
  for (const auto& p : model.params())
    for (auto& x : p->value.v) {
      x = std::sin(v) * 0.4;
      v += 0.31;
    }

  auto asg = extract_merged_asg(m, 0, 3);
  std::mt19937_64 rng(0);
  auto fr = model.forward(asg, false, rng, m.self_loop_rel());

  // Scalar re-derivation with plain doubles (dim = 1 throughout).
  auto P = [&](const std::string& name) -> const std::vector<double>& {
    return model.params().find(name)->value.v;
  };
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  auto relu = [](double x) { return x > 0 ? x : 0.0; };
  auto mlp = [&](const std::string& pfx, double x) {
    return relu(x * P(pfx + ".W1")[0] + P(pfx + ".b1")[0]) * P(pfx + ".W2")[0] + P(pfx + ".b2")[0];
  };
  auto attn_mlp = [&](int l, double hj, double r, double fg) {
    std::string pfx = "attn." + std::to_string(l);
    const auto& W1 = P(pfx + ".W1");  // 3×1
    double hidden = relu(hj * W1[0] + r * W1[1] + fg * W1[2] + P(pfx + ".b1")[0]);
    return hidden * P(pfx + ".W2")[0] + P(pfx + ".b2")[0];
  };
  auto gru = [&](double h, double x) {
    double z = sigmoid(x * P("gru.Wz")[0] + h * P("gru.Uz")[0] + P("gru.bz")[0]);
    double r = sigmoid(x * P("gru.Wr")[0] + h * P("gru.Ur")[0] + P("gru.br")[0]);
    double n = std::tanh(x * P("gru.Wn")[0] + r * h * P("gru.Un")[0] + P("gru.bn")[0]);
    return (1 - z) * n + z * h;
  };
  auto fg_of = [&](EntityIdx j, EntityIdx i) {
    return P("emb")[j] * P("kg.W")[0] + P("emb")[i] * P("kg.W")[1] + P("kg.b")[0];
  };

  RelationIdx sl = m.self_loop_rel();
  std::vector<double> h(4, 0.0);
  std::vector<bool> active(4, false);
  active[0] = true;
  for (int l = 0; l < 3; ++l) {
    std::vector<Triple> edges = asg.layers[l];
    for (EntityIdx e = 0; e < 4; ++e)
      if (active[e]) edges.push_back({e, sl, e});
    const auto& rel = P("rel_emb." + std::to_string(l + 1));
    std::vector<double> agg(4, 0.0);
    std::vector<bool> updated(4, false);
    for (const Triple& e : edges) {
      double r = rel[e.rel];
      double a = sigmoid(attn_mlp(l + 1, h[e.head], r, fg_of(e.head, e.tail)));
      agg[e.tail] += a * (h[e.head] + r);
      updated[e.tail] = true;
    }
    std::vector<double> nh = h;
    for (EntityIdx e = 0; e < 4; ++e)
      if (updated[e]) {
        nh[e] = gru(h[e], agg[e] * P("W." + std::to_string(l + 1))[0]);
        active[e] = true;
      }
    h = nh;
  }

  REQUIRE(fr.targets.size() == 2);
  for (size_t i = 0; i < fr.targets.size(); ++i) {
    double expect = mlp("score", h[fr.targets[i]]);
    CHECK(fr.tape.val(fr.scores)[i] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("end-to-end gradient matches central finite differences") {
  std::mt19937_64 rng(77);
  auto rp = random_graph(rng);
  ModelConfig cfg;
  cfg.depth = 3;
  cfg.dim = 3;
  cfg.dim_kg = 2;
  cfg.dim_kg_out = 2;
  AsgnnModel<double> model(cfg, rp.merged.num_entities(), rp.merged.num_relations(), 3);

  EntityIdx src = 2;
  auto asg = extract_merged_asg(rp.merged, src, 3);
  REQUIRE(asg.reachable_targets.size() >= 2);
  EntityIdx gold = asg.reachable_targets[1];

  auto loss_value = [&]() {
    std::mt19937_64 r(0);
    auto fr = model.forward(asg, false, r, rp.merged.self_loop_rel());
    auto lse = fr.tape.logsumexp(fr.scores);
    auto loss = fr.tape.sub(lse, fr.tape.pick(fr.scores, fr.target_row.at(gold), 0));
    return std::pair{fr.tape.scalar(loss), std::move(fr)};
  };

  model.params().zero_grad();
  {
    auto [val, fr] = loss_value();
    auto lse = fr.tape.logsumexp(fr.scores);
    auto loss = fr.tape.sub(lse, fr.tape.pick(fr.scores, fr.target_row.at(gold), 0));
    fr.accumulate_grads(loss);
  }

  const double h = 1e-5;
  size_t checked = 0;
  for (const auto& p : model.params()) {
    for (size_t j = 0; j < p->value.v.size(); j += std::max<size_t>(1, p->value.v.size() / 6)) {
      double keep = p->value.v[j];
      p->value.v[j] = keep + h;
      double fp = loss_value().first;
      p->value.v[j] = keep - h;
      double fm = loss_value().first;
      p->value.v[j] = keep;
      double num = (fp - fm) / (2 * h);
      double ana = p->grad.v[j];
      CHECK(std::abs(num - ana) / std::max({1.0, std::abs(num), std::abs(ana)}) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("forward is deterministic in eval mode and validates depth") {
  std::mt19937_64 rng(88);
  auto rp = random_graph(rng);
  ModelConfig cfg;
  cfg.depth = 3;
  AsgnnModel<float> m1(cfg, rp.merged.num_entities(), rp.merged.num_relations(), 4);
  AsgnnModel<float> m2(cfg, rp.merged.num_entities(), rp.merged.num_relations(), 4);

  auto asg = extract_merged_asg(rp.merged, 0, 3);
  std::mt19937_64 ra(0), rb(0);
  auto f1 = m1.forward(asg, false, ra, rp.merged.self_loop_rel());
  auto f2 = m2.forward(asg, false, rb, rp.merged.self_loop_rel());
  CHECK(f1.tape.val(f1.scores) == f2.tape.val(f2.scores));

  auto wrong = extract_merged_asg(rp.merged, 0, 2);
  CHECK_THROWS_AS((void)m1.forward(wrong, false, ra, rp.merged.self_loop_rel()), ConfigError);
}

TEST_CASE("softmax attention normalizes over in-edges per node") {
  std::mt19937_64 rng(99);
  auto rp = random_graph(rng);
  ModelConfig cfg;
  cfg.depth = 3;
  cfg.attention = AttentionKind::SoftmaxInEdges;
  AsgnnModel<double> model(cfg, rp.merged.num_entities(), rp.merged.num_relations(), 5);

  auto asg = extract_merged_asg(rp.merged, 0, 3);
  std::mt19937_64 r(0);
  auto fr = model.forward(asg, false, r, rp.merged.self_loop_rel());
  for (const auto& layer : fr.attention.layers) {
    std::unordered_map<EntityIdx, double> totals;
    for (const auto& [edge, a] : layer) totals[edge.tail] += a;
    for (const auto& [tail, total] : totals) CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}
