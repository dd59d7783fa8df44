#pragma once

#include <atomic>
#include <functional>
#include <thread>

#include "asgea/mm.hpp"
#include "asgea/model.hpp"

namespace asgea {

enum class Variant { Stru, MM, MMNoValue, MMNoAms, Symmetric };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;   // [1e-4, 1e-2]
  double weight_decay = 1e-5;    // [1e-5, 1e-2]
  double dropout = 0.0;          // [0, 0.3]
  int batch_size = 8;            // {4, 8, 16}
  int epochs = 50;
  int depth = 5;
  int dim = 32;                  // {32, 48, 64}
  int dim_kg = 8;
  int dim_kg_out = 8;
  uint64_t rng_seed = 0;
  Variant variant = Variant::Stru;
  AttentionKind attention = AttentionKind::SigmoidGate;
  double anchor_fraction = 0.75;
  bool resplit_each_epoch = false;
  double clip_norm = 5.0;
  double modal_anchor_threshold = 0.0;  // <= 0 disables modal anchors
  int threads = 1;

  void validate() const;
};

struct EvalReport {
  double hits1 = 0, hits10 = 0, mrr = 0;
  double coverage = 0, reachability = 0;
  std::vector<int64_t> ranks;  // per query, both directions interleaved (fwd, rev, ...)
  size_t num_queries = 0;

  // Per-direction breakdown (KG1→KG2 and KG2→KG1).
  double hits1_fwd = 0, hits1_rev = 0, mrr_fwd = 0, mrr_rev = 0;
};

struct EpochStats {
  double mean_loss = 0;
  size_t pairs_seen = 0;
  size_t skipped_unreachable = 0;
};

// Eq. (8) on plain score values: log Σ e^{s} − s_gold, max-shifted.
// Unreachable candidates are simply absent (they contribute e^{−∞} = 0).
double pair_loss(const std::vector<double>& scores, size_t gold_index);

// Metrics from raw gold ranks.
void fill_rank_metrics(EvalReport& report);

// Rank of gold among scored candidates over a full candidate range
// [cand_lo, cand_hi): reachable candidates ordered by score descending
// (ties by id ascending), unreachable ones after them by id.
template <typename T>
int64_t rank_of_gold(const std::unordered_map<EntityIdx, T>& scores, EntityIdx gold,
                     EntityIdx cand_lo, EntityIdx cand_hi) {
  auto git = scores.find(gold);
  if (git == scores.end()) {
    // Unreachable gold: placed after every reachable candidate, unreachable
    // block ordered by id.
    int64_t rank = static_cast<int64_t>(scores.size()) + 1;
    for (EntityIdx c = cand_lo; c < gold; ++c)
      if (!scores.count(c)) ++rank;
    return rank;
  }
  T gs = git->second;
  int64_t rank = 1;
  for (const auto& [c, s] : scores) {
    if (c == gold) continue;
    if (s > gs || (s == gs && c < gold)) ++rank;
  }
  (void)cand_hi;
  return rank;
}

template <typename T>
class Trainer {
 public:
  struct Dataset {
    const KnowledgeGraph* g1;
    const KnowledgeGraph* g2;
    AnchorSet seeds;  // S
    AnchorSet test;   // S_te
    const FeatureStore* features = nullptr;
    const AttrTable* attrs = nullptr;
  };

  Trainer(TrainConfig cfg, Dataset data) : cfg_(cfg), data_(std::move(data)) {
    cfg_.validate();
    ModelConfig mc;
    mc.depth = cfg_.depth;
    mc.dim = cfg_.dim;
    mc.dim_kg = cfg_.dim_kg;
    mc.dim_kg_out = cfg_.dim_kg_out;
    mc.attention = cfg_.attention;
    mc.dropout = cfg_.dropout;

    // Relation vocabulary is fixed by the merged graph layout, which only
    // depends on the two KGs (anchor sets do not add relations).
    MergedGraph probe = build_merged_graph(*data_.g1, *data_.g2, {});
    num_entities_ = probe.num_entities();
    num_relations_ = probe.num_relations();

    model_ = std::make_unique<AsgnnModel<T>>(mc, num_entities_, num_relations_, cfg_.rng_seed);
    if (uses_mm()) {
      if (!data_.features || !data_.attrs)
        throw ConfigError("multi-modal variant requires attribute features");
      ModalVariant mv = cfg_.variant == Variant::MMNoValue ? ModalVariant::NoValue
                        : cfg_.variant == Variant::MMNoAms ? ModalVariant::NoAlignAttention
                                                           : ModalVariant::Full;
      mm_ = std::make_unique<MmScorer<T>>(model_->params(), *data_.features, *data_.attrs,
                                          cfg_.dim, cfg_.rng_seed + 1, mv);
    }

    split_ = split_seeds(data_.seeds, cfg_.anchor_fraction, cfg_.rng_seed);
    rebuild_graphs();
  }

  bool uses_mm() const {
    return cfg_.variant == Variant::MM || cfg_.variant == Variant::MMNoValue ||
           cfg_.variant == Variant::MMNoAms;
  }
  bool symmetric_only() const { return cfg_.variant == Variant::Symmetric; }

  AsgnnModel<T>& model() { return *model_; }
  const SeedSplit& split() const { return split_; }
  const MergedGraph& train_graph() const { return *train_graph_; }
  const MergedGraph& eval_graph() const { return *eval_graph_; }
  const AnchorSet& modal_anchors() const { return modal_anchors_; }
  MmScorer<T>* mm_scorer() { return mm_.get(); }
  const TrainConfig& config() const { return cfg_; }

  LayeredAsg extract(const MergedGraph& g, EntityIdx u) const {
    return symmetric_only() ? extract_symmetric_merged_asg(g, u, cfg_.depth)
                            : extract_merged_asg(g, u, cfg_.depth);
  }

  typename AsgnnModel<T>::ExtraScore extra_score() const {
    if (!mm_) return nullptr;
    return [this](nn::Tape<T>& tape,
                  std::unordered_map<const nn::Param<T>*, typename nn::Tape<T>::Ref>& leaves,
                  EntityIdx source, const std::vector<EntityIdx>& targets) {
      return mm_->score_targets(tape, leaves, source, targets);
    };
  }

  // One pass over S_train (both directions per pair), Adam step per batch.
  EpochStats run_epoch(int epoch_index) {
    if (split_.train.empty()) throw DataError("empty training split");
    if (cfg_.resplit_each_epoch && epoch_index > 0) {
      split_ = split_seeds(data_.seeds, cfg_.anchor_fraction,
                           cfg_.rng_seed + static_cast<uint64_t>(epoch_index));
      rebuild_graphs();
    }
    std::mt19937_64 rng(cfg_.rng_seed ^ (0x9e3779b97f4a7c15ULL * (epoch_index + 1)));

    std::vector<size_t> order(split_.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

    EpochStats stats;
    double loss_sum = 0;
    size_t loss_count = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      size_t batch_end = std::min(pos + static_cast<size_t>(cfg_.batch_size), order.size());
      size_t batch_pairs = batch_end - pos;
      model_->params().zero_grad();
      for (size_t b = pos; b < batch_end; ++b) {
        const auto& [e1, e2] = split_.train[order[b]];
        for (auto [src, gold] : {std::pair{e1, e2}, std::pair{e2, e1}}) {
          auto asg = extract(*train_graph_, src);
          auto fr = model_->forward(asg, true, rng, train_graph_->self_loop_rel(), extra_score());
          auto it = fr.target_row.find(gold);
          if (it == fr.target_row.end()) {
            ++stats.skipped_unreachable;
            continue;
          }
          auto lse = fr.tape.logsumexp(fr.scores);
          auto loss = fr.tape.sub(lse, fr.tape.pick(fr.scores, it->second, 0));
          loss_sum += static_cast<double>(fr.tape.scalar(loss));
          ++loss_count;
          auto scaled = fr.tape.scale(loss, T(1) / static_cast<T>(2 * batch_pairs));
          fr.accumulate_grads(scaled);
        }
        ++stats.pairs_seen;
      }
      adam_.lr = cfg_.learning_rate;
      adam_.weight_decay = cfg_.weight_decay;
      adam_.clip_norm = cfg_.clip_norm;
      nn::adam_step(adam_, model_->params());
      pos = batch_end;
    }
    stats.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    return stats;
  }

  // Full run: fixed epoch count, keeping the best-by-train-loss snapshot.
  std::vector<EpochStats> train(const std::function<void(int, const EpochStats&)>& on_epoch = {}) {
    std::vector<EpochStats> history;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<T>> best;
    for (int e = 0; e < cfg_.epochs; ++e) {
      auto stats = run_epoch(e);
      history.push_back(stats);
      if (on_epoch) on_epoch(e, stats);
      if (stats.mean_loss < best_loss) {
        best_loss = stats.mean_loss;
        best.clear();
        for (const auto& p : model_->params()) best.push_back(p->value.v);
      }
    }
    if (!best.empty()) {
      size_t i = 0;
      for (const auto& p : model_->params()) p->value.v = best[i++];
    }
    return history;
  }

  // Scores every test pair in both directions against all opposite-KG
  // candidates, test-time anchors = all seeds (plus modal anchors).
  EvalReport evaluate() const { return evaluate_pairs(data_.test); }

  EvalReport evaluate_pairs(const AnchorSet& pairs) const {
    if (pairs.empty()) throw DataError("empty test set");
    struct QueryOut {
      int64_t rank;
      double coverage;
      bool gold_reached;
      bool forward_dir;
    };
    std::vector<QueryOut> outs(pairs.size() * 2);

    auto run_query = [&](size_t qi) {
      EntityIdx src = qi % 2 == 0 ? pairs[qi / 2].first : pairs[qi / 2].second;
      EntityIdx gold = qi % 2 == 0 ? pairs[qi / 2].second : pairs[qi / 2].first;
      auto asg = extract(*eval_graph_, src);
      std::mt19937_64 rng(0);
      auto fr = model_->forward(asg, false, rng, eval_graph_->self_loop_rel(), extra_score());
      std::unordered_map<EntityIdx, T> scores;
      for (size_t i = 0; i < fr.targets.size(); ++i)
        scores.emplace(fr.targets[i], fr.tape.val(fr.scores)[i]);
      bool fwd = eval_graph_->side_of(src) == Side::KG1;
      EntityIdx lo = fwd ? static_cast<EntityIdx>(eval_graph_->n1) : 0;
      EntityIdx hi = fwd ? static_cast<EntityIdx>(eval_graph_->num_entities())
                         : static_cast<EntityIdx>(eval_graph_->n1);
      size_t side_size = static_cast<size_t>(hi - lo);
      outs[qi] = {rank_of_gold(scores, gold, lo, hi),
                  static_cast<double>(scores.size()) / static_cast<double>(side_size),
                  scores.count(gold) > 0, fwd};
    };

    size_t nq = outs.size();
    int threads = std::max(1, cfg_.threads);
    if (threads == 1) {
      for (size_t qi = 0; qi < nq; ++qi) run_query(qi);
    } else {
      std::vector<std::thread> pool;
      std::atomic<size_t> next{0};
      for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
          for (size_t qi = next.fetch_add(1); qi < nq; qi = next.fetch_add(1)) run_query(qi);
        });
      for (auto& th : pool) th.join();
    }

    EvalReport rep;
    rep.num_queries = nq;
    double cov = 0;
    size_t reached = 0;
    double h1f = 0, h1r = 0, mf = 0, mr2 = 0;
    size_t nf = 0, nr = 0;
    for (const auto& q : outs) {
      rep.ranks.push_back(q.rank);
      cov += q.coverage;
      reached += q.gold_reached ? 1 : 0;
      if (q.forward_dir) {
        ++nf;
        h1f += q.rank == 1;
        mf += 1.0 / static_cast<double>(q.rank);
      } else {
        ++nr;
        h1r += q.rank == 1;
        mr2 += 1.0 / static_cast<double>(q.rank);
      }
    }
    fill_rank_metrics(rep);
    rep.coverage = cov / static_cast<double>(nq);
    rep.reachability = static_cast<double>(reached) / static_cast<double>(nq);
    rep.hits1_fwd = nf ? h1f / nf : 0;
    rep.hits1_rev = nr ? h1r / nr : 0;
    rep.mrr_fwd = nf ? mf / nf : 0;
    rep.mrr_rev = nr ? mr2 / nr : 0;
    return rep;
  }

 private:
  void rebuild_graphs() {
    if (uses_mm() && cfg_.modal_anchor_threshold > 0) {
      // Generated once from the initial projections; vision-only by default.
      if (modal_anchors_.empty()) {
        std::vector<nn::Param<T>*> projections;
        for (int m = 0; m < data_.features->num_modalities(); ++m)
          projections.push_back(
              model_->params().find("mm.proj." + data_.features->modality(m).name));
        int vis = 0;
        for (int m = 0; m < data_.features->num_modalities(); ++m)
          if (data_.features->modality(m).name == "vision") vis = m;
        modal_anchors_ = generate_modal_anchors(*data_.features, *data_.attrs, projections, vis,
                                                data_.g1->num_entities(), num_entities_,
                                                cfg_.modal_anchor_threshold, data_.seeds);
      }
    }
    AnchorSet train_anchors = split_.anchors;
    AnchorSet eval_anchors = data_.seeds;
    train_anchors.insert(train_anchors.end(), modal_anchors_.begin(), modal_anchors_.end());
    eval_anchors.insert(eval_anchors.end(), modal_anchors_.begin(), modal_anchors_.end());
    train_graph_ = std::make_unique<MergedGraph>(build_merged_graph(*data_.g1, *data_.g2, train_anchors));
    eval_graph_ = std::make_unique<MergedGraph>(build_merged_graph(*data_.g1, *data_.g2, eval_anchors));
  }

  TrainConfig cfg_;
  Dataset data_;
  size_t num_entities_ = 0, num_relations_ = 0;
  std::unique_ptr<AsgnnModel<T>> model_;
  std::unique_ptr<MmScorer<T>> mm_;
  SeedSplit split_;
  std::unique_ptr<MergedGraph> train_graph_, eval_graph_;
  AnchorSet modal_anchors_;
  nn::AdamState<T> adam_;
};

}  // namespace asgea
