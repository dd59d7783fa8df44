#include "asgea/asg.hpp"

#include <algorithm>
#include <bit>
#include <unordered_set>

namespace asgea {

namespace {

constexpr int kInf = 1 << 20;

// Per-node bitmask of walk lengths: bit t set = reachable by a walk of
// exactly t steps. K is capped well below the mask width.
using LenMask = uint32_t;

int min_len(LenMask m) { return m == 0 ? kInf : std::countr_zero(m); }

struct Frontiers {
  std::vector<LenMask> mask;
  std::vector<std::vector<EntityIdx>> at;  // at[t] = nodes gaining bit t
};

// Forward walk-length masks from `sources`, following out-edges. When
// `within` is set, only edges with both endpoints on that side are used.
Frontiers forward_masks(const MergedGraph& g, const std::vector<EntityIdx>& sources, int K,
                        std::optional<Side> within = std::nullopt) {
  Frontiers f;
  f.mask.assign(g.num_entities(), 0);
  f.at.assign(K + 1, {});
  for (EntityIdx s : sources) {
    if (!(f.mask[s] & 1u)) {
      f.mask[s] |= 1u;
      f.at[0].push_back(s);
    }
  }
  for (int t = 1; t <= K; ++t) {
    for (EntityIdx a : f.at[t - 1]) {
      if (within && g.side_of(a) != *within) continue;
      for (int32_t ei : g.out_of(a)) {
        const Triple& e = g.edges[ei];
        if (within && g.side_of(e.tail) != *within) continue;
        if (!(f.mask[e.tail] >> t & 1u)) {
          f.mask[e.tail] |= 1u << t;
          f.at[t].push_back(e.tail);
        }
      }
    }
  }
  return f;
}

// Backward masks: bit t = some walk of exactly t steps from the node into
// `targets`.
Frontiers backward_masks(const MergedGraph& g, const std::vector<EntityIdx>& targets, int K,
                         std::optional<Side> within = std::nullopt) {
  Frontiers b;
  b.mask.assign(g.num_entities(), 0);
  b.at.assign(K + 1, {});
  for (EntityIdx s : targets) {
    if (!(b.mask[s] & 1u)) {
      b.mask[s] |= 1u;
      b.at[0].push_back(s);
    }
  }
  for (int t = 1; t <= K; ++t) {
    for (EntityIdx v : b.at[t - 1]) {
      if (within && g.side_of(v) != *within) continue;
      for (int32_t ei : g.in_of(v)) {
        const Triple& e = g.edges[ei];
        if (within && g.side_of(e.head) != *within) continue;
        if (!(b.mask[e.head] >> t & 1u)) {
          b.mask[e.head] |= 1u << t;
          b.at[t].push_back(e.head);
        }
      }
    }
  }
  return b;
}

void check_depth(int K) {
  if (K < 1) throw ConfigError("hop budget K must be >= 1");
  if (K > 24) throw ConfigError("hop budget K too large (max 24)");
}

// Keeps every edge lying on some source→target walk of length <= K, layered
// by step position: edge (a,r,b) sits in layer i iff a is reachable in
// exactly i-1 steps and b still reaches a target within K-i steps.
LayeredAsg assemble(const MergedGraph& g, EntityIdx e_u, int K, const Frontiers& fwd,
                    const Frontiers& bwd, Side target_side) {
  LayeredAsg asg;
  asg.source = e_u;
  asg.depth = K;
  asg.layers.assign(K, {});
  for (int i = 1; i <= K; ++i) {
    for (EntityIdx a : fwd.at[i - 1]) {
      for (int32_t ei : g.out_of(a)) {
        const Triple& e = g.edges[ei];
        if (i + min_len(bwd.mask[e.tail]) <= K) asg.layers[i - 1].push_back(e);
      }
    }
  }
  for (int t = 0; t <= K; ++t)
    for (EntityIdx v : fwd.at[t])
      if (g.side_of(v) == target_side && (bwd.mask[v] & 1u)) asg.reachable_targets.push_back(v);
  std::sort(asg.reachable_targets.begin(), asg.reachable_targets.end());
  return asg;
}

}  // namespace

std::vector<Triple> LayeredAsg::edge_set() const {
  std::vector<Triple> all;
  for (const auto& layer : layers) all.insert(all.end(), layer.begin(), layer.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

size_t LayeredAsg::total_edges() const {
  size_t n = 0;
  for (const auto& layer : layers) n += layer.size();
  return n;
}

std::vector<EntityIdx> LayeredAsg::active_nodes(int upto_layer) const {
  std::vector<EntityIdx> nodes{source};
  for (int l = 0; l < upto_layer && l < depth; ++l)
    for (const auto& e : layers[l]) nodes.push_back(e.tail);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

LayeredAsg extract_pair_asg(const MergedGraph& g, EntityIdx e_u, EntityIdx e_v, int K) {
  check_depth(K);
  if (g.side_of(e_u) == g.side_of(e_v))
    throw DataError("pair extraction requires entities on opposite sides");
  auto fwd = forward_masks(g, {e_u}, K);
  auto bwd = backward_masks(g, {e_v}, K);
  return assemble(g, e_u, K, fwd, bwd, g.side_of(e_v));
}

LayeredAsg extract_merged_asg(const MergedGraph& g, EntityIdx e_u, int K) {
  check_depth(K);
  Side ts = opposite(g.side_of(e_u));
  std::vector<EntityIdx> targets;
  EntityIdx lo = ts == Side::KG1 ? 0 : static_cast<EntityIdx>(g.n1);
  EntityIdx hi = ts == Side::KG1 ? static_cast<EntityIdx>(g.n1) : static_cast<EntityIdx>(g.num_entities());
  for (EntityIdx v = lo; v < hi; ++v) targets.push_back(v);
  auto fwd = forward_masks(g, {e_u}, K);
  auto bwd = backward_masks(g, targets, K);
  return assemble(g, e_u, K, fwd, bwd, ts);
}

namespace {

// Symmetric extraction core. A surviving walk has shape
//   u --(m edges, source side)--> x --anchor--> y --(m edges, target side)--> v
// with 2m+1 <= K. Edge membership is decided per feasible m via side-local
// walk-length masks.
LayeredAsg symmetric_asg(const MergedGraph& g, EntityIdx e_u, int K,
                         const std::vector<EntityIdx>& targets) {
  Side s1 = g.side_of(e_u);
  Side s2 = opposite(s1);

  auto f1 = forward_masks(g, {e_u}, K, s1);
  auto b2 = backward_masks(g, targets, K, s2);

  LayeredAsg asg;
  asg.source = e_u;
  asg.depth = K;
  asg.layers.assign(K, {});
  std::vector<std::unordered_set<Triple, TripleHash>> layer_sets(K);
  std::unordered_set<EntityIdx> target_set;

  for (int m = 0; 2 * m + 1 <= K; ++m) {
    // Anchor endpoints feasible at this half-length.
    std::vector<EntityIdx> prefix_ends;  // x: anchor partner y closes in m steps
    std::vector<EntityIdx> suffix_starts;  // y: anchor partner x reached in m steps
    std::vector<std::pair<int32_t, bool>> cross_edges;  // (edge idx, feasible both ways)
    for (size_t ei = 0; ei < g.edges.size(); ++ei) {
      const Triple& e = g.edges[ei];
      if (g.side_of(e.head) != s1 || g.side_of(e.tail) != s2) continue;
      bool pre_ok = (f1.mask[e.head] >> m & 1u) != 0;
      bool suf_ok = (b2.mask[e.tail] >> m & 1u) != 0;
      if (suf_ok) prefix_ends.push_back(e.head);
      if (pre_ok) suffix_starts.push_back(e.tail);
      if (pre_ok && suf_ok) layer_sets[m].insert(e);
    }
    if (prefix_ends.empty() && suffix_starts.empty()) continue;

    // Source-side edges: position i needs a prefix continuation of length
    // m-i into some feasible anchor head.
    auto r1 = backward_masks(g, prefix_ends, m, s1);
    for (int i = 1; i <= m; ++i) {
      for (EntityIdx a : f1.at[i - 1]) {
        for (int32_t ei : g.out_of(a)) {
          const Triple& e = g.edges[ei];
          if (g.side_of(e.tail) != s1) continue;
          if (r1.mask[e.tail] >> (m - i) & 1u) layer_sets[i - 1].insert(e);
        }
      }
    }

    // Target-side edges: position j counts q = j - m - 1 steps past the anchor.
    auto s2f = forward_masks(g, suffix_starts, m, s2);
    for (int q = 1; q <= m; ++q) {
      for (EntityIdx c : s2f.at[q - 1]) {
        for (int32_t ei : g.out_of(c)) {
          const Triple& e = g.edges[ei];
          if (g.side_of(e.tail) != s2) continue;
          if (b2.mask[e.tail] >> (m - q) & 1u) layer_sets[m + q].insert(e);
        }
      }
    }
    for (EntityIdx v : s2f.at[m])
      if (b2.mask[v] & 1u) target_set.insert(v);
  }

  for (int l = 0; l < K; ++l) {
    asg.layers[l].assign(layer_sets[l].begin(), layer_sets[l].end());
    std::sort(asg.layers[l].begin(), asg.layers[l].end());
  }
  asg.reachable_targets.assign(target_set.begin(), target_set.end());
  std::sort(asg.reachable_targets.begin(), asg.reachable_targets.end());
  return asg;
}

}  // namespace

LayeredAsg extract_symmetric_asg(const MergedGraph& g, EntityIdx e_u, int K) {
  check_depth(K);
  return extract_symmetric_merged_asg(g, e_u, K);
}

LayeredAsg extract_symmetric_merged_asg(const MergedGraph& g, EntityIdx e_u, int K) {
  check_depth(K);
  Side ts = opposite(g.side_of(e_u));
  std::vector<EntityIdx> targets;
  EntityIdx lo = ts == Side::KG1 ? 0 : static_cast<EntityIdx>(g.n1);
  EntityIdx hi = ts == Side::KG1 ? static_cast<EntityIdx>(g.n1) : static_cast<EntityIdx>(g.num_entities());
  for (EntityIdx v = lo; v < hi; ++v) targets.push_back(v);
  return symmetric_asg(g, e_u, K, targets);
}

std::vector<AlignmentPath> enumerate_paths_oracle(const MergedGraph& g, EntityIdx e_u,
                                                  EntityIdx e_v, int K, size_t max_prefixes) {
  check_depth(K);
  if (g.side_of(e_u) == g.side_of(e_v))
    throw DataError("oracle enumeration requires entities on opposite sides");

  std::vector<AlignmentPath> out;
  std::vector<Triple> stack;
  size_t expanded = 0;

  auto dfs = [&](auto&& self, EntityIdx node) -> void {
    if (++expanded > max_prefixes) throw DataError("path enumeration budget exceeded");
    if (node == e_v && !stack.empty()) {
      AlignmentPath p;
      p.edges = stack;
      for (size_t i = 0; i < stack.size(); ++i) {
        RelKind k = g.kind_of(stack[i].rel);
        if (k == RelKind::Anchor || k == RelKind::AnchorReversed)
          p.anchor_positions.push_back(static_cast<int>(i));
      }
      out.push_back(std::move(p));
    }
    if (static_cast<int>(stack.size()) == K) return;
    for (int32_t ei : g.out_of(node)) {
      stack.push_back(g.edges[ei]);
      self(self, g.edges[ei].tail);
      stack.pop_back();
    }
  };
  dfs(dfs, e_u);
  return out;
}

bool is_symmetric_path(const MergedGraph& g, EntityIdx e_u, const AlignmentPath& path) {
  size_t n = path.edges.size();
  if (n % 2 == 0) return false;
  size_t m = n / 2;  // n = 2m+1
  Side s1 = g.side_of(e_u);
  for (size_t i = 0; i < n; ++i) {
    Side head_side = i <= m ? s1 : opposite(s1);
    Side tail_side = i < m ? s1 : opposite(s1);
    if (g.side_of(path.edges[i].head) != head_side) return false;
    if (g.side_of(path.edges[i].tail) != tail_side) return false;
  }
  return true;
}

}  // namespace asgea
