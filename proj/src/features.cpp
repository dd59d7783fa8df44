#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "asgea/mm.hpp"

namespace asgea {

int FeatureStore::add_modality(const std::string& name, int dim) {
  if (modality_ids_.count(name)) throw ConfigError("modality already registered: " + name);
  if (dim <= 0) throw ConfigError("modality dimension must be positive");
  int id = static_cast<int>(modalities_.size());
  modalities_.push_back({name, dim, {}, {}, {}});
  modality_ids_.emplace(name, id);
  return id;
}

int32_t FeatureStore::add_feature(int modality, const std::string& key,
                                  std::span<const float> values) {
  auto& mod = modalities_.at(modality);
  if (static_cast<int>(values.size()) != mod.dim)
    throw DataError("feature row for key '" + key + "' has dim " +
                    std::to_string(values.size()) + ", expected " + std::to_string(mod.dim));
  if (mod.key_ids.count(key)) throw DataError("duplicate feature key: " + key);
  int32_t row = mod.count();
  mod.rows.insert(mod.rows.end(), values.begin(), values.end());
  mod.keys.push_back(key);
  mod.key_ids.emplace(key, row);
  return row;
}

int FeatureStore::modality_id(const std::string& name) const {
  auto it = modality_ids_.find(name);
  if (it == modality_ids_.end()) throw DataError("unknown modality: " + name);
  return it->second;
}

std::optional<std::pair<int, int32_t>> FeatureStore::lookup(const std::string& key) const {
  for (size_t m = 0; m < modalities_.size(); ++m) {
    auto it = modalities_[m].key_ids.find(key);
    if (it != modalities_[m].key_ids.end()) return std::pair{static_cast<int>(m), it->second};
  }
  return std::nullopt;
}

namespace {
constexpr char kMagic[4] = {'A', 'S', 'G', 'F'};
constexpr uint32_t kVersion = 1;
}  // namespace

void FeatureStore::save_modality(int modality, const std::filesystem::path& bin_path,
                                 const std::filesystem::path& keymap_path) const {
  const auto& mod = modalities_.at(modality);
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + bin_path.string());
  out.write(kMagic, 4);
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  w32(kVersion);
  w32(static_cast<uint32_t>(mod.name.size()));
  out.write(mod.name.data(), static_cast<std::streamsize>(mod.name.size()));
  w32(static_cast<uint32_t>(mod.count()));
  w32(static_cast<uint32_t>(mod.dim));
  out.write(reinterpret_cast<const char*>(mod.rows.data()),
            static_cast<std::streamsize>(mod.rows.size() * sizeof(float)));

  nlohmann::json j;
  for (size_t i = 0; i < mod.keys.size(); ++i) j[mod.keys[i]] = i;
  std::ofstream km(keymap_path);
  if (!km) throw DataError("cannot write key map: " + keymap_path.string());
  km << j.dump(2) << '\n';
}

int FeatureStore::load_modality(const std::string& name, const std::filesystem::path& bin_path,
                                const std::filesystem::path& keymap_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + bin_path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a feature file: " + bin_path.string());
  auto r32 = [&]() {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw DataError("truncated feature file: " + bin_path.string());
    return v;
  };
  if (r32() != kVersion) throw DataError("unsupported feature file version");
  std::string stored_name(r32(), '\0');
  in.read(stored_name.data(), static_cast<std::streamsize>(stored_name.size()));
  uint32_t count = r32(), dim = r32();

  int id = add_modality(name, static_cast<int>(dim));
  auto& mod = modalities_[id];
  mod.rows.resize(static_cast<size_t>(count) * dim);
  in.read(reinterpret_cast<char*>(mod.rows.data()),
          static_cast<std::streamsize>(mod.rows.size() * sizeof(float)));
  if (!in) throw DataError("truncated feature file: " + bin_path.string());

  std::ifstream km(keymap_path);
  if (!km) throw DataError("cannot open key map: " + keymap_path.string());
  nlohmann::json j = nlohmann::json::parse(km);
  mod.keys.resize(count);
  for (auto& [key, row] : j.items()) {
    auto r = row.get<int32_t>();
    if (r < 0 || static_cast<uint32_t>(r) >= count)
      throw DataError("key map row out of range for key: " + key);
    mod.keys[r] = key;
    mod.key_ids.emplace(key, r);
  }
  return id;
}

AttrTable build_attr_table(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                           const FeatureStore& store) {
  AttrTable table;
  table.per_entity.resize(g1.num_entities() + g2.num_entities());
  auto intern = [&](const std::string& name) {
    auto it = table.attr_ids.find(name);
    if (it != table.attr_ids.end()) return it->second;
    auto id = static_cast<int32_t>(table.attr_names.size());
    table.attr_names.push_back(name);
    table.attr_ids.emplace(name, id);
    return id;
  };
  auto ingest = [&](const KnowledgeGraph& g, EntityIdx offset) {
    for (const auto& at : g.attr_triples) {
      AttrTable::Entry en;
      en.attr = intern(g.attribute_names[at.attr]);
      if (auto loc = store.lookup(at.value_key)) {
        en.modality = loc->first;
        en.row = loc->second;
      } else {
        en.modality = -1;
        en.row = -1;
      }
      table.per_entity[at.entity + offset].push_back(en);
    }
  };
  ingest(g1, 0);
  ingest(g2, static_cast<EntityIdx>(g1.num_entities()));
  return table;
}

}  // namespace asgea
