#include "asgea/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "asgea/explain.hpp"
#include "asgea/synth.hpp"
#include "asgea/train.hpp"
#include "json.hpp"

namespace asgea::pipeline {

namespace {

using nlohmann::json;

json parse_config(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
}

std::string fnv64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for hashing: " + path.string());
  uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    for (std::streamsize i = 0; i < in.gcount(); ++i)
      h = (h ^ static_cast<uint8_t>(buf[i])) * 1099511628211ULL;
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

struct LoadedData {
  KnowledgeGraph g1, g2;
  AnchorSet seeds, test;
  FeatureStore features;
  AttrTable attrs;
  bool has_features = false;
  json input_hashes = json::object();
};

// "data_dir" expands to the file layout written by gen-synth; explicit
// paths in the "data" block win.
json data_block(const json& cfg) {
  json d = cfg.value("data", json::object());
  if (cfg.contains("data_dir")) {
    std::filesystem::path dir = cfg.at("data_dir").get<std::string>();
    auto put = [&](const char* key, const std::filesystem::path& p) {
      if (!d.contains(key) && std::filesystem::exists(p)) d[key] = p.string();
    };
    put("kg1", dir / "kg1.tsv");
    put("kg2", dir / "kg2.tsv");
    put("seeds", dir / "seeds.tsv");
    put("test", dir / "test.tsv");
    put("attrs1", dir / "attrs1.tsv");
    put("attrs2", dir / "attrs2.tsv");
    if (!d.contains("features") && std::filesystem::exists(dir / "features_vision.bin"))
      d["features"] = json::array({{{"name", "vision"},
                                    {"bin", (dir / "features_vision.bin").string()},
                                    {"keys", (dir / "features_vision.keys.json").string()}}});
  }
  return d;
}

LoadedData load_data(const json& cfg, bool need_test) {
  json d = data_block(cfg);
  for (const char* key : {"kg1", "kg2", "seeds"})
    if (!d.contains(key)) throw ConfigError(std::string("missing data path: ") + key);

  LoadedData out;
  auto note = [&](const std::string& key, const std::string& path) {
    out.input_hashes[key] = {{"path", path}, {"fnv64", fnv64_file(path)}};
  };

  std::optional<std::filesystem::path> a1, a2;
  if (d.contains("attrs1")) a1 = d.at("attrs1").get<std::string>();
  if (d.contains("attrs2")) a2 = d.at("attrs2").get<std::string>();
  out.g1 = load_kg(d.at("kg1").get<std::string>(), a1);
  out.g2 = load_kg(d.at("kg2").get<std::string>(), a2);
  note("kg1", d.at("kg1"));
  note("kg2", d.at("kg2"));
  if (a1) note("attrs1", a1->string());
  if (a2) note("attrs2", a2->string());

  out.seeds = load_anchor_file(d.at("seeds").get<std::string>(), out.g1, out.g2);
  note("seeds", d.at("seeds"));
  if (d.contains("test")) {
    out.test = load_anchor_file(d.at("test").get<std::string>(), out.g1, out.g2);
    note("test", d.at("test"));
  } else if (need_test) {
    throw ConfigError("missing data path: test");
  }

  if (d.contains("features")) {
    for (const auto& f : d.at("features")) {
      out.features.load_modality(f.at("name").get<std::string>(),
                                 f.at("bin").get<std::string>(), f.at("keys").get<std::string>());
      note("features." + f.at("name").get<std::string>(), f.at("bin"));
    }
    out.has_features = true;
  }
  out.attrs = build_attr_table(out.g1, out.g2, out.features);
  return out;
}

AttentionKind parse_attention(const std::string& s) {
  if (s == "sigmoid") return AttentionKind::SigmoidGate;
  if (s == "softmax") return AttentionKind::SoftmaxInEdges;
  throw ConfigError("unknown attention kind: " + s);
}

TrainConfig parse_train_config(const json& cfg) {
  json t = cfg.value("train", json::object());
  TrainConfig c;
  c.learning_rate = t.value("learning_rate", c.learning_rate);
  c.weight_decay = t.value("weight_decay", c.weight_decay);
  c.dropout = t.value("dropout", c.dropout);
  c.batch_size = t.value("batch_size", c.batch_size);
  c.epochs = t.value("epochs", c.epochs);
  c.depth = t.value("depth", c.depth);
  c.dim = t.value("dim", c.dim);
  c.dim_kg = t.value("dim_kg", c.dim_kg);
  c.dim_kg_out = t.value("dim_kg_out", c.dim_kg_out);
  c.rng_seed = t.value("seed", c.rng_seed);
  if (t.contains("variant")) c.variant = parse_variant(t.at("variant").get<std::string>());
  if (t.contains("attention")) c.attention = parse_attention(t.at("attention").get<std::string>());
  c.anchor_fraction = t.value("anchor_fraction", c.anchor_fraction);
  c.resplit_each_epoch = t.value("resplit_each_epoch", c.resplit_each_epoch);
  c.modal_anchor_threshold = t.value("modal_anchor_threshold", c.modal_anchor_threshold);
  c.threads = t.value("threads", c.threads);
  c.validate();
  return c;
}

json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"dropout", c.dropout},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"depth", c.depth},
          {"dim", c.dim},
          {"dim_kg", c.dim_kg},
          {"dim_kg_out", c.dim_kg_out},
          {"seed", c.rng_seed},
          {"variant", variant_name(c.variant)},
          {"attention", c.attention == AttentionKind::SigmoidGate ? "sigmoid" : "softmax"},
          {"anchor_fraction", c.anchor_fraction},
          {"resplit_each_epoch", c.resplit_each_epoch},
          {"modal_anchor_threshold", c.modal_anchor_threshold},
          {"threads", c.threads}};
}

json report_json(const EvalReport& r) {
  return {{"hits_at_1", r.hits1},
          {"hits_at_10", r.hits10},
          {"mrr", r.mrr},
          {"coverage", r.coverage},
          {"reachability", r.reachability},
          {"num_queries", r.num_queries},
          {"hits_at_1_kg1_to_kg2", r.hits1_fwd},
          {"hits_at_1_kg2_to_kg1", r.hits1_rev},
          {"mrr_kg1_to_kg2", r.mrr_fwd},
          {"mrr_kg2_to_kg1", r.mrr_rev}};
}

std::string precision_of(const json& cfg) {
  std::string p = cfg.value("precision", "f32");
  if (p != "f32" && p != "f64") throw ConfigError("precision must be f32 or f64");
  return p;
}

template <typename T>
std::string train_impl(const json& cfg, const TrainConfig& tc, LoadedData& data) {
  typename Trainer<T>::Dataset ds{&data.g1, &data.g2, data.seeds, data.test,
                                  data.has_features ? &data.features : nullptr,
                                  data.has_features ? &data.attrs : nullptr};
  Trainer<T> trainer(tc, std::move(ds));

  json epochs = json::array();
  auto history = trainer.train([&](int e, const EpochStats& s) {
    epochs.push_back({{"epoch", e},
                      {"mean_loss", s.mean_loss},
                      {"pairs", s.pairs_seen},
                      {"skipped_unreachable", s.skipped_unreachable}});
  });

  json result;
  result["epochs"] = std::move(epochs);
  if (!data.test.empty()) result["eval"] = report_json(trainer.evaluate());

  if (cfg.contains("out_dir")) {
    std::filesystem::path out = cfg.at("out_dir").get<std::string>();
    std::filesystem::create_directories(out);
    nn::save_checkpoint(out / "checkpoint.bin", trainer.model().params());
    json meta = {{"train", train_config_json(tc)},
                 {"precision", cfg.value("precision", "f32")},
                 {"inputs", data.input_hashes}};
    std::ofstream(out / "checkpoint.meta.json") << meta.dump(2) << "\n";
    json manifest = meta;
    manifest["result"] = result;
    std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
    result["checkpoint"] = (out / "checkpoint.bin").string();
  }
  return result.dump(2);
}

// Rebuilds the trained model around a checkpoint; the meta file pins the
// architecture and variant.
template <typename T>
Trainer<T> restore_trainer(const json& cfg, LoadedData& data, TrainConfig* out_tc = nullptr) {
  std::filesystem::path ckpt = cfg.at("checkpoint").get<std::string>();
  std::ifstream meta_in(ckpt.parent_path() / "checkpoint.meta.json");
  json merged = cfg;
  if (meta_in) {
    json meta = json::parse(meta_in);
    json t = meta.value("train", json::object());
    // Config-file values override the meta defaults.
    if (merged.contains("train")) t.update(merged.at("train"));
    merged["train"] = t;
  }
  TrainConfig tc = parse_train_config(merged);
  if (out_tc) *out_tc = tc;
  typename Trainer<T>::Dataset ds{&data.g1, &data.g2, data.seeds, data.test,
                                  data.has_features ? &data.features : nullptr,
                                  data.has_features ? &data.attrs : nullptr};
  Trainer<T> trainer(tc, std::move(ds));
  nn::load_checkpoint(ckpt, trainer.model().params());
  return trainer;
}

template <typename T>
std::string evaluate_impl(const json& cfg, LoadedData& data) {
  auto trainer = restore_trainer<T>(cfg, data);
  return report_json(trainer.evaluate()).dump(2);
}

std::pair<EntityIdx, EntityIdx> resolve_pair(const json& cfg, const LoadedData& data,
                                             const MergedGraph& graph) {
  std::string sname = cfg.at("source").get<std::string>();
  std::string tname = cfg.at("target").get<std::string>();
  int skg = cfg.value("source_kg", 1);
  if (skg != 1 && skg != 2) throw ConfigError("source_kg must be 1 or 2");
  EntityIdx n1 = static_cast<EntityIdx>(graph.n1);
  if (skg == 1) return {data.g1.entity(sname), n1 + data.g2.entity(tname)};
  return {n1 + data.g2.entity(sname), data.g1.entity(tname)};
}

template <typename T>
AttentionMap to_attention_map(const ForwardResult<T>& fr) {
  AttentionMap map(fr.attention.layers.size());
  for (size_t l = 0; l < map.size(); ++l)
    for (const auto& [edge, a] : fr.attention.layers[l])
      map[l][edge] = static_cast<double>(a);
  return map;
}

template <typename T>
std::string explain_impl(const json& cfg, LoadedData& data) {
  auto trainer = restore_trainer<T>(cfg, data);
  const MergedGraph& graph = trainer.eval_graph();
  auto [src, gold] = resolve_pair(cfg, data, graph);
  double theta = cfg.value("threshold", 0.5);

  auto asg = trainer.extract(graph, src);
  std::mt19937_64 rng(0);
  auto fr = trainer.model().forward(asg, false, rng, graph.self_loop_rel(),
                                    trainer.extra_score());
  auto expl = extract_explanation(graph, asg, to_attention_map(fr), gold, theta);

  json result = json::parse(export_paths_json(graph, expl.paths, &data.g1, &data.g2));
  result["threshold"] = theta;
  if (expl.fallback) {
    json fb = json::parse(
        export_paths_json(graph, {*expl.fallback}, &data.g1, &data.g2));
    result["fallback"] = fb.at("paths").at(0);
  }
  auto rules = mine_rules(graph, expl.paths);
  score_rules(graph, rules, {{src, gold}});
  result["rules"] = json::parse(export_rules_json(rules)).at("rules");
  if (cfg.contains("dot_out"))
    std::ofstream(cfg.at("dot_out").get<std::string>())
        << export_paths_dot(graph, expl.paths, &data.g1, &data.g2);
  return result.dump(2);
}

template <typename T>
std::string mine_impl(const json& cfg, LoadedData& data) {
  auto trainer = restore_trainer<T>(cfg, data);
  const MergedGraph& graph = trainer.eval_graph();
  double theta = cfg.value("threshold", 0.5);
  std::string which = cfg.value("pairs", "test");
  const AnchorSet& pairs = which == "test"    ? data.test
                           : which == "seeds" ? data.seeds
                                              : throw ConfigError("pairs must be test or seeds");
  if (pairs.empty()) throw DataError("no pairs to mine rules from");

  std::vector<std::vector<WeightedPath>> per_pair;
  size_t total_paths = 0;
  std::mt19937_64 rng(0);
  for (const auto& [u, v] : pairs) {
    auto asg = trainer.extract(graph, u);
    auto fr = trainer.model().forward(asg, false, rng, graph.self_loop_rel(),
                                      trainer.extra_score());
    auto expl = extract_explanation(graph, asg, to_attention_map(fr), v, theta);
    total_paths += expl.paths.size();
    per_pair.push_back(std::move(expl.paths));
  }
  auto rules = mine_rules(graph, per_pair);
  size_t top_k = cfg.value("top_k", size_t{20});
  // Score a support-filtered shortlist; precision ranking promotes exact
  // rules over their far-firing compositions.
  if (rules.size() > std::max<size_t>(5 * top_k, 50))
    rules.resize(std::max<size_t>(5 * top_k, 50));
  score_rules(graph, rules, pairs);
  if (rules.size() > top_k) rules.resize(top_k);
  json result = json::parse(export_rules_json(rules));
  result["pairs_used"] = pairs.size();
  result["paths_used"] = total_paths;
  result["threshold"] = theta;
  return result.dump(2);
}

}  // namespace

struct DatasetHandle {
  LoadedData data;
};

DatasetHandle* open_dataset(const std::string& config_json) {
  json cfg = parse_config(config_json);
  auto* h = new DatasetHandle{load_data(cfg, false)};
  return h;
}

void close_dataset(DatasetHandle* h) { delete h; }

std::string dataset_stats(const DatasetHandle* h) {
  const LoadedData& d = h->data;
  MergedGraph graph = build_merged_graph(d.g1, d.g2, d.seeds);
  size_t attr_entities = 0;
  for (EntityIdx e = 0; e < static_cast<EntityIdx>(graph.num_entities()); ++e)
    if (d.attrs.has_attrs(e)) ++attr_entities;
  return json{{"entities_kg1", d.g1.num_entities()},
              {"entities_kg2", d.g2.num_entities()},
              {"relations_kg1", d.g1.num_relations()},
              {"relations_kg2", d.g2.num_relations()},
              {"triples_kg1", d.g1.triples.size()},
              {"triples_kg2", d.g2.triples.size()},
              {"seed_pairs", d.seeds.size()},
              {"test_pairs", d.test.size()},
              {"merged_edges", graph.edges.size()},
              {"merged_relations", graph.num_relations()},
              {"entities_with_attributes", attr_entities}}
      .dump(2);
}

std::string gen_synth(const std::string& config_json) {
  json cfg = parse_config(config_json);
  SynthSpec spec = SynthSpec::from_json(cfg.value("spec", json::object()).dump());
  SynthResult result = generate_synth(spec);
  json out = {{"entities_kg1", result.g1.num_entities()},
              {"entities_kg2", result.g2.num_entities()},
              {"triples_kg1", result.g1.triples.size()},
              {"triples_kg2", result.g2.triples.size()},
              {"seed_pairs", result.seeds.size()},
              {"test_pairs", result.test.size()},
              {"rejected_noise", result.rejected_noise},
              {"planted_rules", json::parse(export_rules_json([&] {
                                  std::vector<MinedRule> t;
                                  for (const auto& s : result.truth) t.push_back({s, 0, 0.0});
                                  return t;
                                }())).at("rules")}};
  if (cfg.contains("out_dir")) {
    write_synth(cfg.at("out_dir").get<std::string>(), spec, result);
    out["out_dir"] = cfg.at("out_dir");
  }
  return out.dump(2);
}

std::string extract(const std::string& config_json) {
  json cfg = parse_config(config_json);
  LoadedData data = load_data(cfg, false);
  MergedGraph graph = build_merged_graph(data.g1, data.g2, data.seeds);

  std::string name = cfg.at("entity").get<std::string>();
  int kg = cfg.value("entity_kg", 1);
  if (kg != 1 && kg != 2) throw ConfigError("entity_kg must be 1 or 2");
  EntityIdx src = kg == 1 ? data.g1.entity(name)
                          : static_cast<EntityIdx>(graph.n1) + data.g2.entity(name);
  int depth = cfg.value("depth", 5);
  bool symmetric = cfg.value("symmetric", false);

  LayeredAsg asg;
  if (cfg.contains("target")) {
    int tkg = kg == 1 ? 2 : 1;
    EntityIdx tgt = tkg == 1
                        ? data.g1.entity(cfg.at("target").get<std::string>())
                        : static_cast<EntityIdx>(graph.n1) +
                              data.g2.entity(cfg.at("target").get<std::string>());
    if (symmetric) throw ConfigError("symmetric extraction does not take a target");
    asg = extract_pair_asg(graph, src, tgt, depth);
  } else {
    asg = symmetric ? extract_symmetric_merged_asg(graph, src, depth)
                    : extract_merged_asg(graph, src, depth);
  }

  auto label = [&](EntityIdx e) {
    return graph.side_of(e) == Side::KG1
               ? data.g1.entity_names[e]
               : data.g2.entity_names[e - static_cast<EntityIdx>(graph.n1)];
  };
  json layers = json::array();
  for (const auto& layer : asg.layers) {
    json edges = json::array();
    for (const Triple& e : layer)
      edges.push_back({{"head", label(e.head)},
                       {"relation", graph.relation_name(e.rel)},
                       {"tail", label(e.tail)}});
    layers.push_back(std::move(edges));
  }
  json targets = json::array();
  for (EntityIdx v : asg.reachable_targets) targets.push_back(label(v));
  return json{{"source", label(asg.source)},
              {"depth", asg.depth},
              {"total_edges", asg.total_edges()},
              {"active_nodes", asg.active_nodes(asg.depth).size()},
              {"reachable_targets", std::move(targets)},
              {"layers", std::move(layers)}}
      .dump(2);
}

std::string train(const std::string& config_json) {
  json cfg = parse_config(config_json);
  TrainConfig tc = parse_train_config(cfg);
  LoadedData data = load_data(cfg, false);
  if (precision_of(cfg) == "f64") return train_impl<double>(cfg, tc, data);
  return train_impl<float>(cfg, tc, data);
}

std::string evaluate(const std::string& config_json) {
  json cfg = parse_config(config_json);
  LoadedData data = load_data(cfg, true);
  if (precision_of(cfg) == "f64") return evaluate_impl<double>(cfg, data);
  return evaluate_impl<float>(cfg, data);
}

std::string explain(const std::string& config_json) {
  json cfg = parse_config(config_json);
  LoadedData data = load_data(cfg, false);
  if (precision_of(cfg) == "f64") return explain_impl<double>(cfg, data);
  return explain_impl<float>(cfg, data);
}

std::string mine(const std::string& config_json) {
  json cfg = parse_config(config_json);
  LoadedData data = load_data(cfg, true);
  if (precision_of(cfg) == "f64") return mine_impl<double>(cfg, data);
  return mine_impl<float>(cfg, data);
}

}  // namespace asgea::pipeline
