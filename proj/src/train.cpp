#include "asgea/train.hpp"

#include <algorithm>
#include <cmath>

namespace asgea {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Stru: return "stru";
    case Variant::MM: return "mm";
    case Variant::MMNoValue: return "mm-novalue";
    case Variant::MMNoAms: return "mm-noams";
    case Variant::Symmetric: return "symmetric";
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(const std::string& s) {
  if (s == "stru") return Variant::Stru;
  if (s == "mm") return Variant::MM;
  if (s == "mm-novalue") return Variant::MMNoValue;
  if (s == "mm-noams") return Variant::MMNoAms;
  if (s == "symmetric") return Variant::Symmetric;
  throw ConfigError("unknown variant: " + s);
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError("config out of range: " + what); };
  if (learning_rate < 1e-4 || learning_rate > 1e-2) bad("learning_rate in [1e-4, 1e-2]");
  if (weight_decay < 1e-5 || weight_decay > 1e-2) bad("weight_decay in [1e-5, 1e-2]");
  if (dropout < 0.0 || dropout > 0.3) bad("dropout in [0, 0.3]");
  if (batch_size != 4 && batch_size != 8 && batch_size != 16) bad("batch_size in {4, 8, 16}");
  if (dim != 32 && dim != 48 && dim != 64) bad("dim in {32, 48, 64}");
  if (epochs < 1) bad("epochs >= 1");
  if (depth < 1 || depth > 24) bad("depth in [1, 24]");
  if (anchor_fraction <= 0.0 || anchor_fraction >= 1.0) bad("anchor_fraction in (0, 1)");
  if (modal_anchor_threshold > 1.0) bad("modal_anchor_threshold in (0, 1]");
  if (threads < 1) bad("threads >= 1");
}

double pair_loss(const std::vector<double>& scores, size_t gold_index) {
  if (gold_index >= scores.size()) throw DataError("gold index out of range in pair_loss");
  double m = *std::max_element(scores.begin(), scores.end());
  double s = 0;
  for (double x : scores) s += std::exp(x - m);
  return m + std::log(s) - scores[gold_index];
}

void fill_rank_metrics(EvalReport& report) {
  if (report.ranks.empty()) return;
  double h1 = 0, h10 = 0, mrr = 0;
  for (int64_t r : report.ranks) {
    h1 += r <= 1;
    h10 += r <= 10;
    mrr += 1.0 / static_cast<double>(r);
  }
  double n = static_cast<double>(report.ranks.size());
  report.hits1 = h1 / n;
  report.hits10 = h10 / n;
  report.mrr = mrr / n;
}

}  // namespace asgea
