#include "asgea.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "asgea/pipeline.hpp"
#include "asgea/types.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
asgea_status guarded(Fn&& fn) {
  try {
    fn();
    return ASGEA_OK;
  } catch (const asgea::ConfigError& e) {
    g_last_error = e.what();
    return ASGEA_ERR_CONFIG;
  } catch (const asgea::DataError& e) {
    g_last_error = e.what();
    return ASGEA_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ASGEA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ASGEA_ERR_INTERNAL;
  }
}

asgea_status run_json(const char* config_json, char** result_out,
                      std::string (*fn)(const std::string&)) {
  if (!config_json || !result_out) {
    g_last_error = "null argument";
    return ASGEA_ERR_CONFIG;
  }
  return guarded([&] { *result_out = dup_string(fn(config_json)); });
}

}  // namespace

extern "C" {

const char* asgea_last_error(void) { return g_last_error.c_str(); }

void asgea_string_free(char* s) { std::free(s); }

asgea_status asgea_gen_synth(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::gen_synth);
}
asgea_status asgea_extract(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::extract);
}
asgea_status asgea_train(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::train);
}
asgea_status asgea_evaluate(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::evaluate);
}
asgea_status asgea_explain(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::explain);
}
asgea_status asgea_mine_rules(const char* c, char** r) {
  return run_json(c, r, asgea::pipeline::mine);
}

asgea_status asgea_dataset_open(const char* config_json, asgea_dataset** out) {
  if (!config_json || !out) {
    g_last_error = "null argument";
    return ASGEA_ERR_CONFIG;
  }
  return guarded([&] {
    *out = reinterpret_cast<asgea_dataset*>(asgea::pipeline::open_dataset(config_json));
  });
}

void asgea_dataset_close(asgea_dataset* dataset) {
  asgea::pipeline::close_dataset(reinterpret_cast<asgea::pipeline::DatasetHandle*>(dataset));
}

asgea_status asgea_dataset_stats(const asgea_dataset* dataset, char** result_out) {
  if (!dataset || !result_out) {
    g_last_error = "null argument";
    return ASGEA_ERR_CONFIG;
  }
  return guarded([&] {
    *result_out = dup_string(asgea::pipeline::dataset_stats(
        reinterpret_cast<const asgea::pipeline::DatasetHandle*>(dataset)));
  });
}

}  // extern "C"
