#pragma once

#include <functional>
#include <unordered_map>

#include "asgea/asg.hpp"
#include "asgea/nn.hpp"

namespace asgea {

enum class AttentionKind { SigmoidGate, SoftmaxInEdges };

struct ModelConfig {
  int depth = 5;
  int dim = 32;
  int dim_kg = 8;      // graph-knowledge entity embedding size
  int dim_kg_out = 8;  // MLP_kg output size
  AttentionKind attention = AttentionKind::SigmoidGate;
  double dropout = 0.0;
};

// Attention weights keyed by (layer, edge) — the interpretable output.
template <typename T>
struct EdgeAttention {
  // attention[l][k] pairs with the k-th message edge of layer l+1
  // (self-loop padding edges included, marked by rel kind).
  std::vector<std::vector<std::pair<Triple, T>>> layers;
};

template <typename T>
struct ForwardResult {
  nn::Tape<T> tape;
  typename nn::Tape<T>::Ref scores = -1;          // (num_targets × 1)
  std::vector<EntityIdx> targets;                 // row ↔ entity
  std::unordered_map<EntityIdx, int> target_row;
  EdgeAttention<T> attention;
  std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref> leaves;

  T score_of(EntityIdx e) const {
    auto it = target_row.find(e);
    if (it == target_row.end()) return -std::numeric_limits<T>::infinity();
    return tape.val(scores)[it->second];
  }

  // Run backward from a scalar loss and fold leaf gradients into the
  // parameter grad buffers.
  void accumulate_grads(typename nn::Tape<T>::Ref loss) {
    tape.backward(loss);
    for (auto& [param, ref] : leaves) {
      auto* p = const_cast<nn::Param<T>*>(param);
      const auto& g = tape.grad(ref);
      for (size_t i = 0; i < g.size(); ++i) p->grad.v[i] += g[i];
    }
  }
};

// Path-based message passing over a LayeredAsg (scores every reachable
// opposite-side candidate of the subgraph).
template <typename T>
class AsgnnModel {
 public:
  AsgnnModel(ModelConfig cfg, size_t num_entities, size_t num_relations, uint64_t init_seed)
      : cfg_(cfg), num_relations_(num_relations) {
    std::mt19937_64 rng(init_seed);
    for (int l = 1; l <= cfg_.depth; ++l) {
      rel_emb_.push_back(store_.add("rel_emb." + std::to_string(l),
                                    static_cast<int>(num_relations), cfg_.dim));
      nn::xavier_init(*rel_emb_.back(), rng);
      attn_.push_back(nn::Mlp<T>::create(store_, "attn." + std::to_string(l),
                                         2 * cfg_.dim + cfg_.dim_kg_out, cfg_.dim, 1));
      attn_.back().init(rng);
      transform_.push_back(store_.add("W." + std::to_string(l), cfg_.dim, cfg_.dim));
      nn::xavier_init(*transform_.back(), rng);
    }
    emb_ = store_.add("emb", static_cast<int>(num_entities), cfg_.dim_kg);
    nn::xavier_init(*emb_, rng);
    kg_w_ = store_.add("kg.W", 2 * cfg_.dim_kg, cfg_.dim_kg_out);
    nn::xavier_init(*kg_w_, rng);
    kg_b_ = store_.add("kg.b", 1, cfg_.dim_kg_out);
    gru_ = nn::GruCell<T>::create(store_, "gru", cfg_.dim);
    gru_.init(rng);
    score_ = nn::Mlp<T>::create(store_, "score", cfg_.dim, cfg_.dim, 1);
    score_.init(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }

  // Optional extra scoring term added per target row, built on the same
  // tape (the multi-modal score head plugs in here).
  using ExtraScore = std::function<typename nn::Tape<T>::Ref(
      nn::Tape<T>&, std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>&,
      EntityIdx source, const std::vector<EntityIdx>& targets)>;

  ForwardResult<T> forward(const LayeredAsg& asg, bool training, std::mt19937_64& rng,
                           RelationIdx self_loop_rel, const ExtraScore& extra = nullptr) const {
    if (asg.depth != cfg_.depth)
      throw ConfigError("ASG depth " + std::to_string(asg.depth) +
                        " does not match model depth " + std::to_string(cfg_.depth));

    ForwardResult<T> res;
    auto& tape = res.tape;
    auto leaf = [&](nn::Param<T>* p) {
      auto it = res.leaves.find(p);
      if (it != res.leaves.end()) return it->second;
      auto ref = tape.leaf(p->value);
      res.leaves.emplace(p, ref);
      return ref;
    };

    // Local node index over everything the subgraph touches.
    std::vector<EntityIdx> nodes = asg.active_nodes(cfg_.depth);
    std::unordered_map<EntityIdx, int32_t> local;
    for (size_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], static_cast<int32_t>(i));
    int n = static_cast<int>(nodes.size());

    auto h = tape.zeros(n, cfg_.dim);
    res.attention.layers.resize(cfg_.depth);

    std::vector<uint8_t> active(n, 0);
    active[local.at(asg.source)] = 1;

    for (int l = 0; l < cfg_.depth; ++l) {
      // Message edges: this layer's ASG edges plus a self-loop on every
      // node that already carries state, so shorter paths survive to the
      // final layer.
      std::vector<Triple> edges;
      if (l < static_cast<int>(asg.layers.size()))
        edges.insert(edges.end(), asg.layers[l].begin(), asg.layers[l].end());
      for (int i = 0; i < n; ++i)
        if (active[i]) edges.push_back({nodes[i], self_loop_rel, nodes[i]});

      std::vector<int32_t> heads, tails, rels;
      heads.reserve(edges.size());
      tails.reserve(edges.size());
      rels.reserve(edges.size());
      for (const auto& e : edges) {
        heads.push_back(local.at(e.head));
        tails.push_back(local.at(e.tail));
        rels.push_back(e.rel);
      }

      auto rel_rows = tape.gather_rows(leaf(rel_emb_[l]), rels);
      auto h_heads = tape.gather_rows(h, heads);
      auto emb_ref = leaf(emb_);
      std::vector<int32_t> ghead(edges.size()), gtail(edges.size());
      for (size_t k = 0; k < edges.size(); ++k) {
        ghead[k] = edges[k].head;
        gtail[k] = edges[k].tail;
      }
      auto fg = tape.add_bias(
          tape.matmul(tape.concat_cols(std::array{tape.gather_rows(emb_ref, ghead),
                                                  tape.gather_rows(emb_ref, gtail)}),
                      leaf(kg_w_)),
          leaf(kg_b_));

      auto attn_in = tape.concat_cols(std::array{h_heads, rel_rows, fg});
      attn_in = tape.dropout(attn_in, cfg_.dropout, rng, training);
      auto logits = attn_[l].apply(tape, attn_in, leaf(attn_[l].W1), leaf(attn_[l].b1),
                                   leaf(attn_[l].W2), leaf(attn_[l].b2));
      auto alpha = cfg_.attention == AttentionKind::SigmoidGate
                       ? tape.sigmoid(logits)
                       : tape.segment_softmax(logits, tails);

      auto& att_layer = res.attention.layers[l];
      att_layer.reserve(edges.size());
      for (size_t k = 0; k < edges.size(); ++k)
        att_layer.emplace_back(edges[k], tape.val(alpha)[k]);

      auto messages = tape.colmul(alpha, tape.add(h_heads, rel_rows));
      auto agg = tape.scatter_add_rows(messages, tails, n);
      auto x = tape.matmul(agg, leaf(transform_[l]));

      // GRU update restricted to nodes with in-edges this layer; everything
      // else keeps a zero state.
      std::vector<int32_t> upd(tails);
      std::sort(upd.begin(), upd.end());
      upd.erase(std::unique(upd.begin(), upd.end()), upd.end());
      auto to_leaf = [&](nn::Param<T>* p) { return leaf(p); };
      std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref> gru_leaves;
      for (nn::Param<T>* p : {gru_.Wz, gru_.Uz, gru_.bz, gru_.Wr, gru_.Ur, gru_.br, gru_.Wn,
                              gru_.Un, gru_.bn})
        gru_leaves.emplace(p, to_leaf(p));
      auto h_upd = nn::gru_step(tape, gru_, gru_leaves, tape.gather_rows(h, upd),
                                tape.gather_rows(x, upd));
      h = tape.scatter_add_rows(h_upd, upd, n);
      for (int32_t i : upd) active[i] = 1;
    }

    res.targets = asg.reachable_targets;
    for (size_t i = 0; i < res.targets.size(); ++i)
      res.target_row.emplace(res.targets[i], static_cast<int>(i));
    if (!res.targets.empty()) {
      std::vector<int32_t> trows;
      trows.reserve(res.targets.size());
      for (EntityIdx v : res.targets) trows.push_back(local.at(v));
      auto h_t = tape.gather_rows(h, trows);
      h_t = tape.dropout(h_t, cfg_.dropout, rng, training);
      res.scores = score_.apply(tape, h_t, leaf(score_.W1), leaf(score_.b1), leaf(score_.W2),
                                leaf(score_.b2));
      if (extra) res.scores = tape.add(res.scores, extra(tape, res.leaves, asg.source, res.targets));
    } else {
      res.scores = tape.zeros(0, 1);
    }
    return res;
  }

 private:
  ModelConfig cfg_;
  size_t num_relations_;
  nn::ParamStore<T> store_;
  std::vector<nn::Param<T>*> rel_emb_;
  std::vector<nn::Mlp<T>> attn_;
  std::vector<nn::Param<T>*> transform_;
  nn::Param<T>* emb_;
  nn::Param<T>*kg_w_, *kg_b_;
  nn::GruCell<T> gru_;
  nn::Mlp<T> score_;
};

// Evaluation-time score rows: one merged extraction + forward per source.
template <typename T>
std::vector<std::unordered_map<EntityIdx, T>> score_pairs(const AsgnnModel<T>& model,
                                                          const MergedGraph& graph,
                                                          const std::vector<EntityIdx>& sources,
                                                          int K) {
  if (K != model.config().depth) throw ConfigError("K must equal the model depth");
  std::vector<std::unordered_map<EntityIdx, T>> rows;
  rows.reserve(sources.size());
  std::mt19937_64 rng(0);
  for (EntityIdx u : sources) {
    auto asg = extract_merged_asg(graph, u, K);
    auto fr = model.forward(asg, false, rng, graph.self_loop_rel());
    std::unordered_map<EntityIdx, T> row;
    for (size_t i = 0; i < fr.targets.size(); ++i)
      row.emplace(fr.targets[i], fr.tape.val(fr.scores)[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace asgea
