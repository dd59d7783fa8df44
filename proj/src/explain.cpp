#include "asgea/explain.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"

namespace asgea {

namespace {

constexpr size_t kExpansionBudget = 5'000'000;

struct LayerAdj {
  // head -> (edge, attention) for one layer, self-loops dropped.
  std::unordered_map<EntityIdx, std::vector<std::pair<Triple, double>>> by_head;
};

std::vector<LayerAdj> build_adjacency(const MergedGraph& graph, const LayeredAsg& asg,
                                      const AttentionMap& attention, double threshold) {
  if (attention.size() != asg.layers.size())
    throw DataError("attention map does not match ASG depth");
  std::vector<LayerAdj> adj(asg.layers.size());
  for (size_t l = 0; l < asg.layers.size(); ++l) {
    for (const Triple& e : asg.layers[l]) {
      if (e.rel == graph.self_loop_rel()) continue;
      auto it = attention[l].find(e);
      if (it == attention[l].end()) throw DataError("ASG edge missing from attention map");
      if (it->second < threshold) continue;
      adj[l].by_head[e.head].emplace_back(e, it->second);
    }
  }
  for (auto& layer : adj)
    for (auto& [h, v] : layer.by_head)
      std::sort(v.begin(), v.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
  return adj;
}

std::string entity_label(const MergedGraph& graph, EntityIdx e, const KnowledgeGraph* g1,
                         const KnowledgeGraph* g2) {
  if (graph.side_of(e) == Side::KG1) {
    if (g1) return g1->entity_names.at(e);
  } else if (g2) {
    return g2->entity_names.at(e - static_cast<EntityIdx>(graph.n1));
  }
  return "e" + std::to_string(e);
}

}  // namespace

Explanation extract_explanation(const MergedGraph& graph, const LayeredAsg& asg,
                                const AttentionMap& attention, EntityIdx gold,
                                double threshold) {
  auto adj = build_adjacency(graph, asg, attention, threshold);
  Explanation out;

  std::vector<std::pair<Triple, double>> stack;
  size_t expansions = 0;
  auto dfs = [&](auto&& self, EntityIdx node, size_t layer) -> void {
    if (node == gold && !stack.empty()) {
      WeightedPath wp;
      double w = 1;
      for (const auto& [e, a] : stack) {
        wp.path.edges.push_back(e);
        if (graph.kind_of(e.rel) == RelKind::Anchor || graph.kind_of(e.rel) == RelKind::AnchorReversed)
          wp.path.anchor_positions.push_back(wp.path.edges.size() - 1);
        w *= a;
      }
      wp.weight = w;
      out.paths.push_back(std::move(wp));
    }
    if (layer >= adj.size()) return;
    auto it = adj[layer].by_head.find(node);
    if (it == adj[layer].by_head.end()) return;
    for (const auto& [e, a] : it->second) {
      if (++expansions > kExpansionBudget) throw DataError("explanation path budget exceeded");
      stack.emplace_back(e, a);
      self(self, e.tail, layer + 1);
      stack.pop_back();
    }
  };
  dfs(dfs, asg.source, 0);

  std::sort(out.paths.begin(), out.paths.end(), [](const WeightedPath& a, const WeightedPath& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.path.edges < b.path.edges;
  });

  if (out.paths.empty()) {
    // Viterbi over layers with the unthresholded attentions: the single
    // highest-weight source→gold path, as a diagnostic.
    auto full = build_adjacency(graph, asg, attention, -1.0);
    struct Cell {
      double w = -1;
      Triple via{};
      bool has_via = false;
    };
    std::vector<std::unordered_map<EntityIdx, Cell>> best(full.size() + 1);
    best[0][asg.source] = {1.0, {}, false};
    WeightedPath best_arrival;
    size_t best_layer = 0;
    bool found = false;
    for (size_t l = 0; l < full.size(); ++l) {
      for (const auto& [node, cell] : best[l]) {
        auto it = full[l].by_head.find(node);
        if (it == full[l].by_head.end()) continue;
        for (const auto& [e, a] : it->second) {
          double w = cell.w * a;
          auto& nxt = best[l + 1][e.tail];
          if (w > nxt.w) nxt = {w, e, true};
          if (e.tail == gold && w > best_arrival.weight) {
            best_arrival.weight = w;
            best_layer = l + 1;
            found = true;
          }
        }
      }
    }
    if (found) {
      EntityIdx node = gold;
      std::vector<Triple> rev;
      for (size_t l = best_layer; l > 0; --l) {
        const Cell& c = best[l].at(node);
        rev.push_back(c.via);
        node = c.via.head;
      }
      std::reverse(rev.begin(), rev.end());
      best_arrival.path.edges = std::move(rev);
      for (size_t i = 0; i < best_arrival.path.edges.size(); ++i) {
        RelKind k = graph.kind_of(best_arrival.path.edges[i].rel);
        if (k == RelKind::Anchor || k == RelKind::AnchorReversed)
          best_arrival.path.anchor_positions.push_back(i);
      }
      out.fallback = std::move(best_arrival);
    }
  }
  return out;
}

RuleClass RuleSignature::classify() const {
  if (source_steps.size() == 1 && target_steps.size() == 1) return RuleClass::OneHop;
  if (source_steps.size() == target_steps.size()) return RuleClass::Symmetric;
  return RuleClass::Asymmetric;
}

std::string RuleSignature::key() const {
  std::string k;
  for (const auto& s : source_steps) k += (s.inverse ? "~" : "") + s.relation + ",";
  k += "|a" + std::to_string(anchor_count) + "|";
  for (const auto& s : target_steps) k += (s.inverse ? "~" : "") + s.relation + ",";
  return k;
}

RuleSignature path_signature(const MergedGraph& graph, const AlignmentPath& path) {
  RuleSignature sig;
  sig.anchor_count = 0;
  size_t first_anchor = path.edges.size(), last_anchor = 0;
  for (size_t i = 0; i < path.edges.size(); ++i) {
    RelKind k = graph.kind_of(path.edges[i].rel);
    if (k == RelKind::Anchor || k == RelKind::AnchorReversed) {
      ++sig.anchor_count;
      first_anchor = std::min(first_anchor, i);
      last_anchor = i;
    }
  }
  if (sig.anchor_count == 0) throw DataError("alignment path without anchor crossing");
  auto step_of = [&](const Triple& e) {
    RelKind k = graph.kind_of(e.rel);
    return RuleStep{graph.forward_relation_names.at(graph.forward_of(e.rel)),
                    k == RelKind::Reversed};
  };
  for (size_t i = 0; i < first_anchor; ++i) sig.source_steps.push_back(step_of(path.edges[i]));
  for (size_t i = last_anchor + 1; i < path.edges.size(); ++i)
    sig.target_steps.push_back(step_of(path.edges[i]));
  return sig;
}

bool is_rule_instance(const AlignmentPath& path) {
  if (path.anchor_positions.size() != 1) return false;
  if (path.edges.empty()) return false;
  std::set<EntityIdx> nodes{path.edges.front().head};
  for (const Triple& e : path.edges)
    if (!nodes.insert(e.tail).second) return false;
  return true;
}

namespace {

struct RuleAccum {
  MinedRule rule;
  double weight_sum = 0;
  size_t path_count = 0;
};

std::vector<MinedRule> finish_rules(std::map<std::string, RuleAccum>&& groups) {
  std::vector<MinedRule> out;
  for (auto& [k, acc] : groups) {
    acc.rule.mean_weight = acc.weight_sum / static_cast<double>(acc.path_count);
    out.push_back(std::move(acc.rule));
  }
  std::sort(out.begin(), out.end(), [](const MinedRule& a, const MinedRule& b) {
    if (a.support != b.support) return a.support > b.support;
    if (a.mean_weight != b.mean_weight) return a.mean_weight > b.mean_weight;
    return a.signature.key() < b.signature.key();
  });
  return out;
}

}  // namespace

std::vector<MinedRule> mine_rules(const MergedGraph& graph,
                                  const std::vector<WeightedPath>& paths) {
  std::map<std::string, RuleAccum> groups;
  for (const auto& wp : paths) {
    if (!is_rule_instance(wp.path)) continue;
    RuleSignature sig = path_signature(graph, wp.path);
    std::string k = sig.key();
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) it->second.rule.signature = std::move(sig);
    ++it->second.rule.support;
    ++it->second.path_count;
    it->second.weight_sum += wp.weight;
  }
  return finish_rules(std::move(groups));
}

std::vector<MinedRule> mine_rules(const MergedGraph& graph,
                                  const std::vector<std::vector<WeightedPath>>& per_pair) {
  std::map<std::string, RuleAccum> groups;
  for (const auto& paths : per_pair) {
    std::set<std::string> seen;
    for (const auto& wp : paths) {
      if (!is_rule_instance(wp.path)) continue;
      RuleSignature sig = path_signature(graph, wp.path);
      std::string k = sig.key();
      auto [it, fresh] = groups.try_emplace(k);
      if (fresh) it->second.rule.signature = std::move(sig);
      if (seen.insert(k).second) ++it->second.rule.support;
      ++it->second.path_count;
      it->second.weight_sum += wp.weight;
    }
  }
  return finish_rules(std::move(groups));
}

void score_rules(const MergedGraph& graph, std::vector<MinedRule>& rules, const AnchorSet& pairs) {
  std::unordered_map<std::string, RelationIdx> forward_ids;
  for (size_t r = 0; r < graph.forward_relation_names.size(); ++r)
    forward_ids.emplace(graph.forward_relation_names[r], static_cast<RelationIdx>(r));
  RelationIdx num_fw = static_cast<RelationIdx>(graph.num_forward_relations);

  auto follow = [&](const std::set<EntityIdx>& frontier, RelationIdx rel, RelationIdx rel2) {
    std::set<EntityIdx> next;
    for (EntityIdx e : frontier)
      for (int32_t ei : graph.out_of(e)) {
        const Triple& t = graph.edges[ei];
        if (t.rel == rel || t.rel == rel2) next.insert(t.tail);
      }
    return next;
  };
  auto apply_steps = [&](std::set<EntityIdx> frontier, const std::vector<RuleStep>& steps) {
    for (const RuleStep& s : steps) {
      if (frontier.empty()) break;
      auto it = forward_ids.find(s.relation);
      if (it == forward_ids.end()) return std::set<EntityIdx>{};
      RelationIdx rel = s.inverse ? it->second + num_fw : it->second;
      frontier = follow(frontier, rel, rel);
    }
    return frontier;
  };

  for (MinedRule& rule : rules) {
    size_t hits = 0, reached = 0, fired = 0;
    for (const auto& [u, gold] : pairs) {
      auto frontier = apply_steps({u}, rule.signature.source_steps);
      if (!frontier.empty())
        frontier = follow(frontier, graph.anchor_rel(), graph.anchor_rev_rel());
      frontier = apply_steps(std::move(frontier), rule.signature.target_steps);
      if (frontier.empty()) continue;
      ++fired;
      reached += frontier.size();
      hits += frontier.count(gold);
    }
    rule.pairs_fired = fired;
    rule.precision = reached ? static_cast<double>(hits) / static_cast<double>(reached) : 0.0;
  }
  std::sort(rules.begin(), rules.end(), [](const MinedRule& a, const MinedRule& b) {
    if (a.precision != b.precision) return a.precision > b.precision;
    if (a.support != b.support) return a.support > b.support;
    if (a.mean_weight != b.mean_weight) return a.mean_weight > b.mean_weight;
    return a.signature.key() < b.signature.key();
  });
}

std::string export_paths_dot(const MergedGraph& graph, const std::vector<WeightedPath>& paths,
                             const KnowledgeGraph* g1, const KnowledgeGraph* g2) {
  std::set<EntityIdx> nodes;
  std::map<Triple, double> edges;  // max weight of any path using the edge
  for (const auto& wp : paths)
    for (const Triple& e : wp.path.edges) {
      nodes.insert(e.head);
      nodes.insert(e.tail);
      auto [it, fresh] = edges.try_emplace(e, wp.weight);
      if (!fresh) it->second = std::max(it->second, wp.weight);
    }
  std::ostringstream os;
  os << "digraph alignment_paths {\n  rankdir=LR;\n";
  for (EntityIdx n : nodes) {
    const char* shape = graph.side_of(n) == Side::KG1 ? "box" : "ellipse";
    os << "  n" << n << " [label=\"" << entity_label(graph, n, g1, g2) << "\", shape=" << shape
       << "];\n";
  }
  for (const auto& [e, w] : edges) {
    RelKind k = graph.kind_of(e.rel);
    bool anchor = k == RelKind::Anchor || k == RelKind::AnchorReversed;
    os << "  n" << e.head << " -> n" << e.tail << " [label=\"" << graph.relation_name(e.rel)
       << " (" << w << ")\"" << (anchor ? ", style=dashed" : "") << "];\n";
  }
  os << "}\n";
  return os.str();
}

std::string export_paths_json(const MergedGraph& graph, const std::vector<WeightedPath>& paths,
                              const KnowledgeGraph* g1, const KnowledgeGraph* g2) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& wp : paths) {
    nlohmann::json edges = nlohmann::json::array();
    for (const Triple& e : wp.path.edges)
      edges.push_back({{"head", entity_label(graph, e.head, g1, g2)},
                       {"relation", graph.relation_name(e.rel)},
                       {"tail", entity_label(graph, e.tail, g1, g2)}});
    arr.push_back({{"weight", wp.weight},
                   {"edges", std::move(edges)},
                   {"anchor_positions", wp.path.anchor_positions}});
  }
  return nlohmann::json{{"paths", std::move(arr)}}.dump(2);
}

std::string export_rules_json(const std::vector<MinedRule>& rules) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rules) {
    auto steps = [](const std::vector<RuleStep>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& s : v) a.push_back({{"relation", s.relation}, {"inverse", s.inverse}});
      return a;
    };
    const char* cls = r.signature.classify() == RuleClass::OneHop     ? "one-hop"
                      : r.signature.classify() == RuleClass::Symmetric ? "symmetric"
                                                                       : "asymmetric";
    arr.push_back({{"source_steps", steps(r.signature.source_steps)},
                   {"target_steps", steps(r.signature.target_steps)},
                   {"anchor_count", r.signature.anchor_count},
                   {"class", cls},
                   {"support", r.support},
                   {"mean_weight", r.mean_weight},
                   {"pairs_fired", r.pairs_fired},
                   {"precision", r.precision},
                   {"key", r.signature.key()}});
  }
  return nlohmann::json{{"rules", std::move(arr)}}.dump(2);
}

}  // namespace asgea
