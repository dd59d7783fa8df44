// Command-line front end; all real work goes through the C surface in
// asgea.h so the tool doubles as a consumer of the shared library.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "asgea.h"
#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

using nlohmann::json;

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open config file: " << path << "\n";
    std::exit(1);
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "bad config file " << path << ": " << e.what() << "\n";
    std::exit(1);
  }
}

// Sets a dotted path like "train.epochs" in the config document.
void set_path(json& cfg, const std::string& dotted, json value) {
  json* cur = &cfg;
  size_t start = 0;
  for (size_t dot = dotted.find('.'); dot != std::string::npos;
       start = dot + 1, dot = dotted.find('.', start))
    cur = &(*cur)[dotted.substr(start, dot - start)];
  (*cur)[dotted.substr(start)] = std::move(value);
}

struct Overrides {
  std::vector<std::pair<std::string, json>> values;

  void apply(json& cfg) const {
    for (const auto& [path, v] : values) set_path(cfg, path, v);
  }
};

// Command-line flags override config-file values, which override defaults.
void add_string_opt(CLI::App* cmd, Overrides& ov, const std::string& flag,
                    const std::string& path, const std::string& help) {
  auto holder = std::make_shared<std::string>();
  cmd->add_option_function<std::string>(
      flag, [&ov, path](const std::string& v) { ov.values.emplace_back(path, v); }, help);
  (void)holder;
}

void add_double_opt(CLI::App* cmd, Overrides& ov, const std::string& flag,
                    const std::string& path, const std::string& help) {
  cmd->add_option_function<double>(
      flag, [&ov, path](double v) { ov.values.emplace_back(path, v); }, help);
}

void add_int_opt(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& path,
                 const std::string& help) {
  cmd->add_option_function<int64_t>(
      flag, [&ov, path](int64_t v) { ov.values.emplace_back(path, v); }, help);
}

void add_flag_opt(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& path,
                  const std::string& help) {
  cmd->add_flag_function(
      flag, [&ov, path](int64_t n) { if (n) ov.values.emplace_back(path, true); }, help);
}

void add_data_opts(CLI::App* cmd, Overrides& ov) {
  add_string_opt(cmd, ov, "--data-dir", "data_dir", "directory with the standard file layout");
  add_string_opt(cmd, ov, "--kg1", "data.kg1", "KG1 triple TSV");
  add_string_opt(cmd, ov, "--kg2", "data.kg2", "KG2 triple TSV");
  add_string_opt(cmd, ov, "--seeds", "data.seeds", "seed alignment TSV");
  add_string_opt(cmd, ov, "--test", "data.test", "test alignment TSV");
  add_string_opt(cmd, ov, "--attrs1", "data.attrs1", "KG1 attribute TSV");
  add_string_opt(cmd, ov, "--attrs2", "data.attrs2", "KG2 attribute TSV");
}

void add_train_opts(CLI::App* cmd, Overrides& ov) {
  add_double_opt(cmd, ov, "--lr", "train.learning_rate", "learning rate");
  add_double_opt(cmd, ov, "--weight-decay", "train.weight_decay", "weight decay");
  add_double_opt(cmd, ov, "--dropout", "train.dropout", "dropout rate");
  add_int_opt(cmd, ov, "--batch-size", "train.batch_size", "pairs per optimizer step");
  add_int_opt(cmd, ov, "--epochs", "train.epochs", "training epochs");
  add_int_opt(cmd, ov, "--depth", "train.depth", "subgraph hop bound / model depth");
  add_int_opt(cmd, ov, "--dim", "train.dim", "hidden size");
  add_int_opt(cmd, ov, "--seed", "train.seed", "rng seed");
  add_string_opt(cmd, ov, "--variant", "train.variant",
                 "stru | mm | mm-novalue | mm-noams | symmetric");
  add_string_opt(cmd, ov, "--attention", "train.attention", "sigmoid | softmax");
  add_double_opt(cmd, ov, "--anchor-fraction", "train.anchor_fraction",
                 "seed fraction used as anchors");
  add_double_opt(cmd, ov, "--modal-anchor-threshold", "train.modal_anchor_threshold",
                 "mutual-NN cosine threshold for feature-based anchors");
  add_string_opt(cmd, ov, "--precision", "precision", "f32 | f64");
}

int run(const std::string& config_path, const Overrides& ov, bool threads_set, int threads,
        asgea_status (*fn)(const char*, char**)) {
  json cfg = config_path.empty() ? json::object() : load_config_file(config_path);
  ov.apply(cfg);
  if (threads_set) {
    set_path(cfg, "train.threads", threads);
  } else if (const char* env = std::getenv("ASG_THREADS")) {
    set_path(cfg, "train.threads", std::atoi(env));
  }
  char* result = nullptr;
  asgea_status st = fn(cfg.dump().c_str(), &result);
  if (st != ASGEA_OK) {
    std::cerr << "error: " << asgea_last_error() << "\n";
    return static_cast<int>(st);
  }
  std::cout << result << "\n";
  asgea_string_free(result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees large per-step buffers; keep them on the
  // heap instead of returning them to the kernel every iteration.
  mallopt(M_MMAP_THRESHOLD, 1 << 28);
  mallopt(M_TRIM_THRESHOLD, 1 << 28);
#endif
  CLI::App app{"Knowledge-graph entity alignment over align-subgraphs"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = 1;
  bool threads_set = false;
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_option("--threads", threads, "worker threads for evaluation")
      ->each([&](const std::string&) { threads_set = true; });

  struct Cmd {
    CLI::App* app;
    Overrides ov;
    asgea_status (*fn)(const char*, char**);
  };
  std::vector<std::unique_ptr<Cmd>> cmds;
  auto make = [&](const char* name, const char* help, asgea_status (*fn)(const char*, char**)) {
    auto c = std::make_unique<Cmd>();
    c->app = app.add_subcommand(name, help);
    c->fn = fn;
    cmds.push_back(std::move(c));
    return cmds.back().get();
  };

  auto* gen = make("gen-synth", "generate a synthetic benchmark", asgea_gen_synth);
  add_string_opt(gen->app, gen->ov, "--out-dir", "out_dir", "output directory");
  add_string_opt(gen->app, gen->ov, "--spec-file", "spec_file", "synth spec JSON file");
  add_int_opt(gen->app, gen->ov, "--entities", "spec.entities_per_side", "core entities per KG");
  add_int_opt(gen->app, gen->ov, "--seed", "spec.rng_seed", "rng seed");
  add_double_opt(gen->app, gen->ov, "--seed-fraction", "spec.seed_fraction",
                 "fraction of pairs used as seeds");
  add_flag_opt(gen->app, gen->ov, "--with-attributes", "spec.with_attributes",
               "emit attribute features");

  auto* ext = make("extract", "extract an align-subgraph", asgea_extract);
  add_data_opts(ext->app, ext->ov);
  add_string_opt(ext->app, ext->ov, "--entity", "entity", "source entity name");
  add_int_opt(ext->app, ext->ov, "--entity-kg", "entity_kg", "side of the source entity (1|2)");
  add_string_opt(ext->app, ext->ov, "--target", "target", "restrict to one candidate entity");
  add_int_opt(ext->app, ext->ov, "--depth", "depth", "hop bound K");
  add_flag_opt(ext->app, ext->ov, "--symmetric", "symmetric", "symmetric paths only");

  auto* tr = make("train", "train an alignment model", asgea_train);
  add_data_opts(tr->app, tr->ov);
  add_train_opts(tr->app, tr->ov);
  add_string_opt(tr->app, tr->ov, "--out-dir", "out_dir", "checkpoint/manifest directory");

  auto* ev = make("eval", "evaluate a checkpoint", asgea_evaluate);
  add_data_opts(ev->app, ev->ov);
  add_string_opt(ev->app, ev->ov, "--checkpoint", "checkpoint", "checkpoint file");
  add_string_opt(ev->app, ev->ov, "--precision", "precision", "f32 | f64");

  auto* ex = make("explain", "explain one alignment decision", asgea_explain);
  add_data_opts(ex->app, ex->ov);
  add_string_opt(ex->app, ex->ov, "--checkpoint", "checkpoint", "checkpoint file");
  add_string_opt(ex->app, ex->ov, "--source", "source", "source entity name");
  add_string_opt(ex->app, ex->ov, "--target", "target", "candidate entity name");
  add_int_opt(ex->app, ex->ov, "--source-kg", "source_kg", "side of the source entity (1|2)");
  add_double_opt(ex->app, ex->ov, "--threshold", "threshold", "attention threshold");
  add_string_opt(ex->app, ex->ov, "--dot-out", "dot_out", "write Graphviz output here");
  add_string_opt(ex->app, ex->ov, "--precision", "precision", "f32 | f64");

  auto* mi = make("mine-rules", "mine alignment rules from explanations", asgea_mine_rules);
  add_data_opts(mi->app, mi->ov);
  add_string_opt(mi->app, mi->ov, "--checkpoint", "checkpoint", "checkpoint file");
  add_double_opt(mi->app, mi->ov, "--threshold", "threshold", "attention threshold");
  add_string_opt(mi->app, mi->ov, "--pairs", "pairs", "pair set to mine from: test | seeds");
  add_int_opt(mi->app, mi->ov, "--top-k", "top_k", "rules to keep");
  add_string_opt(mi->app, mi->ov, "--precision", "precision", "f32 | f64");

  CLI11_PARSE(app, argc, argv);

  for (auto& c : cmds)
    if (c->app->parsed()) {
      // --spec-file expands before overrides so flags can still win.
      auto it = std::find_if(c->ov.values.begin(), c->ov.values.end(),
                             [](const auto& kv) { return kv.first == "spec_file"; });
      if (it != c->ov.values.end()) {
        json spec = load_config_file(it->second.template get<std::string>());
        c->ov.values.erase(it);
        c->ov.values.insert(c->ov.values.begin(), {"spec", std::move(spec)});
      }
      return run(config_path, c->ov, threads_set, threads, c->fn);
    }
  return 1;
}
