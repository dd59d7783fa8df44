#include "asgea/kg.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <span>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace asgea {

EntityIdx KnowledgeGraph::intern_entity(const std::string& name) {
  auto it = entity_ids.find(name);
  if (it != entity_ids.end()) return it->second;
  EntityIdx id = static_cast<EntityIdx>(entity_names.size());
  entity_names.push_back(name);
  entity_ids.emplace(name, id);
  return id;
}

RelationIdx KnowledgeGraph::intern_relation(const std::string& name) {
  auto it = relation_ids.find(name);
  if (it != relation_ids.end()) return it->second;
  RelationIdx id = static_cast<RelationIdx>(relation_names.size());
  relation_names.push_back(name);
  relation_ids.emplace(name, id);
  return id;
}

int32_t KnowledgeGraph::intern_attribute(const std::string& name) {
  auto it = attribute_ids.find(name);
  if (it != attribute_ids.end()) return it->second;
  int32_t id = static_cast<int32_t>(attribute_names.size());
  attribute_names.push_back(name);
  attribute_ids.emplace(name, id);
  return id;
}

EntityIdx KnowledgeGraph::entity(const std::string& name) const {
  auto it = entity_ids.find(name);
  if (it == entity_ids.end()) throw DataError("unknown entity: " + name);
  return it->second;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::optional<std::filesystem::path>& attr_path, LoadStats* stats) {
  std::ifstream in(triples_path);
  if (!in) throw DataError("cannot open triple file: " + triples_path.string());

  KnowledgeGraph g;
  std::unordered_set<Triple, TripleHash> seen;
  std::string line;
  size_t line_no = 0;
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3)
      throw DataError(triples_path.string() + ":" + std::to_string(line_no) +
                      ": expected 3 tab-separated columns, got " + std::to_string(cols.size()));
    ++rows;
    Triple t{g.intern_entity(cols[0]), g.intern_relation(cols[1]), g.intern_entity(cols[2])};
    if (!seen.insert(t).second) {
      if (stats) ++stats->duplicate_triples;
      continue;
    }
    g.triples.push_back(t);
  }
  if (rows == 0) throw DataError("empty triple file: " + triples_path.string());

  if (attr_path) {
    std::ifstream ain(*attr_path);
    if (!ain) throw DataError("cannot open attribute file: " + attr_path->string());
    line_no = 0;
    while (std::getline(ain, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto cols = split_tabs(line);
      if (cols.size() != 3)
        throw DataError(attr_path->string() + ":" + std::to_string(line_no) +
                        ": expected 3 tab-separated columns, got " + std::to_string(cols.size()));
      auto eit = g.entity_ids.find(cols[0]);
      if (eit == g.entity_ids.end())
        throw DataError(attr_path->string() + ":" + std::to_string(line_no) +
                        ": attribute triple references unknown entity " + cols[0]);
      g.attr_triples.push_back({eit->second, g.intern_attribute(cols[1]), cols[2]});
    }
  }
  return g;
}

std::string dump_id_maps(const KnowledgeGraph& g) {
  nlohmann::json j;
  j["entities"] = g.entity_names;
  j["relations"] = g.relation_names;
  j["attributes"] = g.attribute_names;
  return j.dump(2);
}

void load_id_maps(KnowledgeGraph& g, const std::string& json_text) {
  auto j = nlohmann::json::parse(json_text);
  g.entity_names = j.at("entities").get<std::vector<std::string>>();
  g.relation_names = j.at("relations").get<std::vector<std::string>>();
  g.attribute_names = j.value("attributes", std::vector<std::string>{});
  g.entity_ids.clear();
  g.relation_ids.clear();
  g.attribute_ids.clear();
  for (size_t i = 0; i < g.entity_names.size(); ++i)
    g.entity_ids.emplace(g.entity_names[i], static_cast<EntityIdx>(i));
  for (size_t i = 0; i < g.relation_names.size(); ++i)
    g.relation_ids.emplace(g.relation_names[i], static_cast<RelationIdx>(i));
  for (size_t i = 0; i < g.attribute_names.size(); ++i)
    g.attribute_ids.emplace(g.attribute_names[i], static_cast<int32_t>(i));
}

SeedSplit split_seeds(const AnchorSet& seeds, double anchor_fraction, uint64_t rng_seed) {
  if (anchor_fraction <= 0.0 || anchor_fraction >= 1.0)
    throw ConfigError("anchor fraction must lie in (0, 1)");
  if (seeds.size() < 2) throw DataError("need at least 2 seed pairs to split");

  std::vector<size_t> order(seeds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(rng_seed);
  for (size_t i = order.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }

  size_t n_anchor = static_cast<size_t>(anchor_fraction * static_cast<double>(seeds.size()));
  SeedSplit split;
  split.anchor_fraction = anchor_fraction;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_anchor ? split.anchors : split.train).push_back(seeds[order[i]]);
  }
  return split;
}

RelKind MergedGraph::kind_of(RelationIdx r) const {
  size_t R = num_forward_relations;
  size_t u = static_cast<size_t>(r);
  if (u < R) return RelKind::Forward;
  if (u < 2 * R) return RelKind::Reversed;
  if (u == 2 * R) return RelKind::Anchor;
  if (u == 2 * R + 1) return RelKind::AnchorReversed;
  return RelKind::SelfLoop;
}

RelationIdx MergedGraph::forward_of(RelationIdx r) const {
  return kind_of(r) == RelKind::Reversed ? r - static_cast<RelationIdx>(num_forward_relations) : r;
}

RelationIdx MergedGraph::reverse_of(RelationIdx r) const {
  auto R = static_cast<RelationIdx>(num_forward_relations);
  switch (kind_of(r)) {
    case RelKind::Forward: return r + R;
    case RelKind::Reversed: return r - R;
    case RelKind::Anchor: return r + 1;
    case RelKind::AnchorReversed: return r - 1;
    case RelKind::SelfLoop: return r;
  }
  return r;
}

std::string MergedGraph::relation_name(RelationIdx r) const {
  switch (kind_of(r)) {
    case RelKind::Forward: return forward_relation_names[r];
    case RelKind::Reversed: return forward_relation_names[forward_of(r)] + "^-1";
    case RelKind::Anchor: return "anchor";
    case RelKind::AnchorReversed: return "anchor^-1";
    case RelKind::SelfLoop: return "self_loop";
  }
  return "?";
}

namespace {

void build_csr(const std::vector<Triple>& edges, size_t n, bool by_head,
               std::vector<int32_t>& offsets, std::vector<int32_t>& index) {
  offsets.assign(n + 1, 0);
  for (const auto& e : edges) ++offsets[(by_head ? e.head : e.tail) + 1];
  for (size_t i = 1; i <= n; ++i) offsets[i] += offsets[i - 1];
  index.resize(edges.size());
  std::vector<int32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (size_t i = 0; i < edges.size(); ++i) {
    EntityIdx key = by_head ? edges[i].head : edges[i].tail;
    index[cursor[key]++] = static_cast<int32_t>(i);
  }
}

}  // namespace

MergedGraph build_merged_graph(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                               const AnchorSet& anchors) {
  MergedGraph m;
  m.n1 = g1.num_entities();
  m.n2 = g2.num_entities();

  // Global forward relation table interned by name across both sides.
  std::unordered_map<std::string, RelationIdx> rel_ids;
  auto intern = [&](const std::string& name) {
    auto it = rel_ids.find(name);
    if (it != rel_ids.end()) return it->second;
    auto id = static_cast<RelationIdx>(m.forward_relation_names.size());
    m.forward_relation_names.push_back(name);
    rel_ids.emplace(name, id);
    return id;
  };
  std::vector<RelationIdx> map1(g1.num_relations()), map2(g2.num_relations());
  for (size_t i = 0; i < g1.num_relations(); ++i) map1[i] = intern(g1.relation_names[i]);
  for (size_t i = 0; i < g2.num_relations(); ++i) map2[i] = intern(g2.relation_names[i]);
  m.num_forward_relations = m.forward_relation_names.size();

  auto offset2 = static_cast<EntityIdx>(m.n1);
  m.edges.reserve(2 * (g1.triples.size() + g2.triples.size() + anchors.size()));
  for (const auto& t : g1.triples) m.edges.push_back({t.head, map1[t.rel], t.tail});
  for (const auto& t : g2.triples)
    m.edges.push_back({t.head + offset2, map2[t.rel], t.tail + offset2});
  for (const auto& [e1, e2] : anchors) {
    if (e1 < 0 || static_cast<size_t>(e1) >= m.n1 || e2 < offset2 ||
        static_cast<size_t>(e2) >= m.num_entities())
      throw DataError("anchor pair (" + std::to_string(e1) + ", " + std::to_string(e2) +
                      ") does not reference one entity per side");
    m.edges.push_back({e1, m.anchor_rel(), e2});
  }
  size_t half = m.edges.size();
  for (size_t i = 0; i < half; ++i) {
    const auto& e = m.edges[i];
    m.edges.push_back({e.tail, m.reverse_of(e.rel), e.head});
  }

  build_csr(m.edges, m.num_entities(), true, m.out_offsets, m.out_edges);
  build_csr(m.edges, m.num_entities(), false, m.in_offsets, m.in_edges);
  return m;
}

AnchorSet load_anchor_file(const std::filesystem::path& path, const KnowledgeGraph& g1,
                           const KnowledgeGraph& g2) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open anchor file: " + path.string());
  AnchorSet out;
  std::string line;
  size_t line_no = 0;
  auto offset2 = static_cast<EntityIdx>(g1.num_entities());
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 2 tab-separated columns, got " + std::to_string(cols.size()));
    out.emplace_back(g1.entity(cols[0]), g2.entity(cols[1]) + offset2);
  }
  return out;
}

void write_triple_file(const std::filesystem::path& path, const KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write triple file: " + path.string());
  for (const auto& t : g.triples)
    out << g.entity_names[t.head] << '\t' << g.relation_names[t.rel] << '\t'
        << g.entity_names[t.tail] << '\n';
}

void write_anchor_file(const std::filesystem::path& path, const AnchorSet& pairs,
                       const KnowledgeGraph& g1, const KnowledgeGraph& g2) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write anchor file: " + path.string());
  auto offset2 = static_cast<EntityIdx>(g1.num_entities());
  for (const auto& [a, b] : pairs)
    out << g1.entity_names[a] << '\t' << g2.entity_names[b - offset2] << '\n';
}

}  // namespace asgea
