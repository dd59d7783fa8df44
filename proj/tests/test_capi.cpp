#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "asgea.h"
#include "json.hpp"

using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  asgea_string_free(s);
  return out;
}

std::filesystem::path make_dataset() {
  auto dir = std::filesystem::temp_directory_path() / "asgea_capi_data";
  std::filesystem::remove_all(dir);
  json cfg = {{"out_dir", dir.string()},
              {"spec",
               {{"entities_per_side", 30},
                {"relation_vocab", 8},
                {"with_attributes", true},
                {"rng_seed", 11}}}};
  char* result = nullptr;
  REQUIRE(asgea_gen_synth(cfg.dump().c_str(), &result) == ASGEA_OK);
  json r = json::parse(take(result));
  REQUIRE(r.at("entities_kg1").get<int>() >= 30);
  return dir;
}

}  // namespace

TEST_CASE("null arguments are config errors") {
  char* out = nullptr;
  CHECK(asgea_gen_synth(nullptr, &out) == ASGEA_ERR_CONFIG);
  CHECK(asgea_gen_synth("{}", nullptr) == ASGEA_ERR_CONFIG);
  CHECK(out == nullptr);
  CHECK(std::strlen(asgea_last_error()) > 0);

  asgea_dataset* ds = nullptr;
  CHECK(asgea_dataset_open(nullptr, &ds) == ASGEA_ERR_CONFIG);
  CHECK(asgea_dataset_stats(nullptr, &out) == ASGEA_ERR_CONFIG);
  asgea_dataset_close(nullptr);  // must be a harmless no-op
}

TEST_CASE("malformed config and missing data map to distinct statuses") {
  char* out = nullptr;
  CHECK(asgea_train("{not json", &out) == ASGEA_ERR_CONFIG);
  CHECK(out == nullptr);

  json cfg = {{"data",
               {{"kg1", "/nonexistent/kg1.tsv"},
                {"kg2", "/nonexistent/kg2.tsv"},
                {"seeds", "/nonexistent/seeds.tsv"}}}};
  CHECK(asgea_train(cfg.dump().c_str(), &out) == ASGEA_ERR_DATA);
  CHECK(out == nullptr);
  std::string err = asgea_last_error();
  CHECK(err.find("kg1") != std::string::npos);
}

TEST_CASE("dataset handle round trip") {
  auto dir = make_dataset();
  json cfg = {{"data_dir", dir.string()}};

  asgea_dataset* ds = nullptr;
  REQUIRE(asgea_dataset_open(cfg.dump().c_str(), &ds) == ASGEA_OK);
  REQUIRE(ds != nullptr);

  char* out = nullptr;
  REQUIRE(asgea_dataset_stats(ds, &out) == ASGEA_OK);
  json stats = json::parse(take(out));
  CHECK(stats.at("seed_pairs").get<int>() > 0);
  CHECK(stats.at("test_pairs").get<int>() > 0);
  CHECK(stats.at("merged_edges").get<int>() > 0);
  CHECK(stats.at("entities_with_attributes").get<int>() > 0);
  asgea_dataset_close(ds);
}

TEST_CASE("extract, train, evaluate, and mine through the C surface") {
  auto dir = make_dataset();
  auto out_dir = std::filesystem::temp_directory_path() / "asgea_capi_run";
  std::filesystem::remove_all(out_dir);

  json ex = {{"data_dir", dir.string()}, {"entity", "a0"}, {"entity_kg", 1}, {"depth", 3}};
  char* out = nullptr;
  REQUIRE(asgea_extract(ex.dump().c_str(), &out) == ASGEA_OK);
  json asg = json::parse(take(out));
  CHECK(asg.at("layers").size() == 3);

  json tr = {{"data_dir", dir.string()},
             {"out_dir", out_dir.string()},
             {"train", {{"epochs", 2}, {"depth", 3}, {"seed", 3}}}};
  REQUIRE(asgea_train(tr.dump().c_str(), &out) == ASGEA_OK);
  json trained = json::parse(take(out));
  CHECK(trained.contains("eval"));
  CHECK(std::filesystem::exists(out_dir / "checkpoint.bin"));

  json ev = {{"data_dir", dir.string()},
             {"checkpoint", (out_dir / "checkpoint.bin").string()}};
  REQUIRE(asgea_evaluate(ev.dump().c_str(), &out) == ASGEA_OK);
  json report = json::parse(take(out));
  CHECK(report.at("hits_at_1").get<double>() >= 0.0);
  CHECK(report.at("num_queries").get<int>() > 0);

  json mine = {{"data_dir", dir.string()},
               {"checkpoint", (out_dir / "checkpoint.bin").string()},
               {"pairs", "seeds"},
               {"top_k", 5}};
  REQUIRE(asgea_mine_rules(mine.dump().c_str(), &out) == ASGEA_OK);
  json rules = json::parse(take(out));
  CHECK(rules.at("rules").is_array());

  // Bad checkpoint path surfaces as a data error, with the message retained.
  json bad = ev;
  bad["checkpoint"] = (out_dir / "missing.bin").string();
  char* unused = nullptr;
  CHECK(asgea_evaluate(bad.dump().c_str(), &unused) == ASGEA_ERR_DATA);
  CHECK(std::strlen(asgea_last_error()) > 0);
}
