#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asgea/types.hpp"

namespace asgea {

// One side of the alignment problem: interned entities/relations plus the
// raw relation and attribute triples in local dense ids.
struct KnowledgeGraph {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<std::string> attribute_names;
  std::unordered_map<std::string, EntityIdx> entity_ids;
  std::unordered_map<std::string, RelationIdx> relation_ids;
  std::unordered_map<std::string, int32_t> attribute_ids;

  std::vector<Triple> triples;  // local ids

  struct AttrTriple {
    EntityIdx entity;
    int32_t attr;
    std::string value_key;  // key into a FeatureStore
  };
  std::vector<AttrTriple> attr_triples;

  size_t num_entities() const { return entity_names.size(); }
  size_t num_relations() const { return relation_names.size(); }

  EntityIdx intern_entity(const std::string& name);
  RelationIdx intern_relation(const std::string& name);
  int32_t intern_attribute(const std::string& name);

  EntityIdx entity(const std::string& name) const;  // throws DataError if absent
};

struct LoadStats {
  size_t duplicate_triples = 0;
};

KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::optional<std::filesystem::path>& attr_path = std::nullopt,
                       LoadStats* stats = nullptr);

// Id maps round-trip through JSON so checkpoints stay tied to a dataset.
std::string dump_id_maps(const KnowledgeGraph& g);
void load_id_maps(KnowledgeGraph& g, const std::string& json_text);

// Aligned cross-KG entity pairs in global ids (first ∈ KG1, second ∈ KG2).
using AnchorSet = std::vector<std::pair<EntityIdx, EntityIdx>>;

struct SeedSplit {
  AnchorSet anchors;  // installed as r_anchor edges during training
  AnchorSet train;    // supervision pairs, never anchor edges
  double anchor_fraction = 0.75;
};

SeedSplit split_seeds(const AnchorSet& seeds, double anchor_fraction, uint64_t rng_seed);

// Union graph over both KGs: forward triples of each side, anchor links,
// and the reverse of every edge. Indexed both ways for frontier expansion.
//
// Relation id layout: [0, num_forward) forward relations interned by name
// across both KGs, [num_forward, 2*num_forward) their reverses, then
// anchor, anchor_reversed, self_loop.
struct MergedGraph {
  size_t n1 = 0;  // entities on side 1; global ids [0, n1)
  size_t n2 = 0;  // side 2; global ids [n1, n1+n2)
  size_t num_forward_relations = 0;

  std::vector<Triple> edges;
  std::vector<std::string> forward_relation_names;

  // CSR adjacency: edge indices sorted by head / by tail.
  std::vector<int32_t> out_offsets, out_edges;
  std::vector<int32_t> in_offsets, in_edges;

  size_t num_entities() const { return n1 + n2; }
  size_t num_relations() const { return 2 * num_forward_relations + 3; }

  RelationIdx anchor_rel() const { return static_cast<RelationIdx>(2 * num_forward_relations); }
  RelationIdx anchor_rev_rel() const { return anchor_rel() + 1; }
  RelationIdx self_loop_rel() const { return anchor_rel() + 2; }

  Side side_of(EntityIdx e) const {
    return static_cast<size_t>(e) < n1 ? Side::KG1 : Side::KG2;
  }
  RelKind kind_of(RelationIdx r) const;
  // Forward relation index underlying r (identity for forward, r - R for
  // reversed); anchor/self-loop ids map to themselves.
  RelationIdx forward_of(RelationIdx r) const;
  RelationIdx reverse_of(RelationIdx r) const;
  std::string relation_name(RelationIdx r) const;

  std::span<const int32_t> out_of(EntityIdx e) const {
    return {out_edges.data() + out_offsets[e], static_cast<size_t>(out_offsets[e + 1] - out_offsets[e])};
  }
  std::span<const int32_t> in_of(EntityIdx e) const {
    return {in_edges.data() + in_offsets[e], static_cast<size_t>(in_offsets[e + 1] - in_offsets[e])};
  }
};

MergedGraph build_merged_graph(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                               const AnchorSet& anchors);

AnchorSet load_anchor_file(const std::filesystem::path& path, const KnowledgeGraph& g1,
                           const KnowledgeGraph& g2);

void write_triple_file(const std::filesystem::path& path, const KnowledgeGraph& g);
void write_anchor_file(const std::filesystem::path& path, const AnchorSet& pairs,
                       const KnowledgeGraph& g1, const KnowledgeGraph& g2);

}  // namespace asgea
