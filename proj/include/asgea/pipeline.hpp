#pragma once

#include <string>

namespace asgea::pipeline {

// JSON-in / JSON-out entry points shared by the shared-library surface and
// the command-line tool. Each takes a config document and returns a result
// document; errors surface as ConfigError / DataError.

std::string gen_synth(const std::string& config_json);
std::string extract(const std::string& config_json);
std::string train(const std::string& config_json);
std::string evaluate(const std::string& config_json);
std::string explain(const std::string& config_json);
std::string mine(const std::string& config_json);

// Loaded-dataset handle backing the opaque pointer in the C surface.
struct DatasetHandle;
DatasetHandle* open_dataset(const std::string& config_json);
void close_dataset(DatasetHandle* h);
std::string dataset_stats(const DatasetHandle* h);

}  // namespace asgea::pipeline
