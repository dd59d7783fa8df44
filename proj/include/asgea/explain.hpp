#pragma once

#include <map>
#include <optional>
#include <unordered_map>

#include "asgea/asg.hpp"
#include "asgea/kg.hpp"

namespace asgea {

// Attention values per layer, keyed by edge. Layer l holds the edges active
// at message-passing step l+1 (same layout as LayeredAsg::layers).
using AttentionMap = std::vector<std::unordered_map<Triple, double, TripleHash>>;

struct WeightedPath {
  AlignmentPath path;
  double weight = 0;  // product of edge attentions
};

struct Explanation {
  std::vector<WeightedPath> paths;          // weight desc, edges asc
  std::optional<WeightedPath> fallback;     // max-attention path when paths is empty
};

// All source→gold paths through the ASG whose every edge has attention >= θ.
// Self-loop edges never appear in paths. θ = 0 keeps every path.
Explanation extract_explanation(const MergedGraph& graph, const LayeredAsg& asg,
                                const AttentionMap& attention, EntityIdx gold,
                                double threshold);

// One relation step of a rule body: the forward relation name plus the
// traversal direction relative to that forward orientation.
struct RuleStep {
  std::string relation;
  bool inverse = false;

  auto operator<=>(const RuleStep&) const = default;
};

enum class RuleClass { OneHop, Symmetric, Asymmetric };

struct RuleSignature {
  std::vector<RuleStep> source_steps;  // before the first anchor crossing
  std::vector<RuleStep> target_steps;  // after the last anchor crossing
  int anchor_count = 1;

  RuleClass classify() const;
  std::string key() const;

  auto operator<=>(const RuleSignature&) const = default;
};

struct MinedRule {
  RuleSignature signature;
  size_t support = 0;
  double mean_weight = 0;
  size_t pairs_fired = 0;   // pairs whose source instantiates the rule at all
  double precision = 0;     // gold fraction of everything the rule reaches
};

// Signature of one alignment path; anchor edges are dropped, relation steps
// before/after them are resolved to forward names with direction flags.
RuleSignature path_signature(const MergedGraph& graph, const AlignmentPath& path);

// True for exact rule instantiations: a single anchor crossing and no
// repeated node (walks that wander or wobble across anchors are evidence
// for the model but not for a rule).
bool is_rule_instance(const AlignmentPath& path);

// Groups rule-instance paths by signature, ranked by support desc, then
// mean weight desc, then key asc. Support counts paths; non-instance
// paths are ignored.
std::vector<MinedRule> mine_rules(const MergedGraph& graph,
                                  const std::vector<WeightedPath>& paths);

// Mining over many aligned pairs: support counts the pairs exhibiting a
// signature, so walk multiplicity within one pair cannot inflate a rule.
std::vector<MinedRule> mine_rules(const MergedGraph& graph,
                                  const std::vector<std::vector<WeightedPath>>& per_pair);

// Fires every rule forward from each pair's source over the whole graph
// and scores precision = gold targets reached / all targets reached.
// Compositions of simpler rules fire far and wide, exact rules stay
// narrow, so this separates them where support cannot. Re-sorts by
// precision desc, then support desc, mean weight desc, key asc.
void score_rules(const MergedGraph& graph, std::vector<MinedRule>& rules, const AnchorSet& pairs);

// Entity labels come from the original KGs when given, otherwise "e<id>".
std::string export_paths_dot(const MergedGraph& graph, const std::vector<WeightedPath>& paths,
                             const KnowledgeGraph* g1 = nullptr,
                             const KnowledgeGraph* g2 = nullptr);
std::string export_paths_json(const MergedGraph& graph, const std::vector<WeightedPath>& paths,
                              const KnowledgeGraph* g1 = nullptr,
                              const KnowledgeGraph* g2 = nullptr);
std::string export_rules_json(const std::vector<MinedRule>& rules);

}  // namespace asgea
