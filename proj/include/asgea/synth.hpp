#pragma once

#include "asgea/explain.hpp"
#include "asgea/mm.hpp"

namespace asgea {

// Synthetic alignment benchmark with planted cross-KG rules. Each gold pair
// is witnessed by rule-shaped chains through seed anchors; noise edges are
// rejection-sampled so they never use a planted rule's relations.
struct SynthSpec {
  struct Template {
    int k1 = 1;  // source-side hops, [1, 3]
    int k2 = 1;  // target-side hops, [1, 3]
  };

  int entities_per_side = 100;  // alignable core entities per KG
  int relation_vocab = 12;
  std::vector<Template> templates = {{1, 1}};
  int witnesses_per_pair = 3;   // chain instances per (pair, template)
  int noise_edges = 50;         // per side
  double seed_fraction = 0.3;
  uint64_t rng_seed = 7;

  bool with_attributes = false;
  int feature_dim = 16;
  double feature_noise = 0.1;   // per-side perturbation of shared base vectors

  void validate() const;
  std::string to_json() const;
  static SynthSpec from_json(const std::string& text);
};

struct SynthResult {
  KnowledgeGraph g1, g2;
  AnchorSet gold;   // all aligned core pairs, global ids
  AnchorSet seeds;  // S
  AnchorSet test;   // S_te = gold \ S
  FeatureStore features;
  std::vector<RuleSignature> truth;  // planted rule per template, same order
  size_t rejected_noise = 0;
};

SynthResult generate_synth(const SynthSpec& spec);

// kg{1,2}.tsv, seeds.tsv, test.tsv, rules_truth.json, spec.json, and with
// attributes also attrs{1,2}.tsv + features_vision.{bin,keys.json}.
void write_synth(const std::filesystem::path& dir, const SynthSpec& spec,
                 const SynthResult& result);

}  // namespace asgea
