#pragma once

#include <vector>

#include "asgea/kg.hpp"

namespace asgea {

// An extracted Align-Subgraph as a layered DAG rooted at `source`.
// Layer i (1-based; layers[i-1]) holds the edges usable as the i-th step
// of some surviving source→target walk of length ≤ depth. An edge may
// appear in several layers when walks of different lengths pass through it.
struct LayeredAsg {
  EntityIdx source = -1;
  int depth = 0;
  std::vector<std::vector<Triple>> layers;
  std::vector<EntityIdx> reachable_targets;  // opposite-side entities in the final frontier

  // Union of all layers, deduplicated, sorted.
  std::vector<Triple> edge_set() const;
  size_t total_edges() const;
  // Nodes carrying state at the end of layer l (source plus tails of
  // layers 1..l), sorted.
  std::vector<EntityIdx> active_nodes(int upto_layer) const;
};

// Appendix-algorithm extraction: pair, merged (union over all opposite-side
// targets), and symmetric-rule-only variants.
LayeredAsg extract_pair_asg(const MergedGraph& graph, EntityIdx e_u, EntityIdx e_v, int K);
LayeredAsg extract_merged_asg(const MergedGraph& graph, EntityIdx e_u, int K);
LayeredAsg extract_symmetric_asg(const MergedGraph& graph, EntityIdx e_u, int K);
// Merged extraction keeping only symmetric-rule paths to every target.
LayeredAsg extract_symmetric_merged_asg(const MergedGraph& graph, EntityIdx e_u, int K);

struct AlignmentPath {
  std::vector<Triple> edges;            // chained head→tail
  std::vector<int> anchor_positions;    // 0-based indices of anchor/anchor_rev edges
  bool crosses_anchor() const { return !anchor_positions.empty(); }
};

// Exhaustive walk enumeration between a pair, for testing the extraction
// algorithms against the path-set definition. Walks may revisit nodes;
// length is the step count. Guarded against blowup.
std::vector<AlignmentPath> enumerate_paths_oracle(const MergedGraph& graph, EntityIdx e_u,
                                                  EntityIdx e_v, int K,
                                                  size_t max_prefixes = 1000000);

// True when the walk's node sides follow the symmetric-rule shape: odd
// length 2m+1, first m+1 nodes on the source side, rest on the other side.
bool is_symmetric_path(const MergedGraph& graph, EntityIdx e_u, const AlignmentPath& path);

}  // namespace asgea
