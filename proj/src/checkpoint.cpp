#include <bit>
#include <cstring>
#include <fstream>

#include "asgea/nn.hpp"

namespace asgea::nn {

namespace {

constexpr char kMagic[4] = {'A', 'S', 'G', 'C'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated checkpoint file");
  return v;
}

}  // namespace

void save_checkpoint_f32(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>>&
        params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<uint64_t>(params.size()));
  for (const auto& [name, payload] : params) {
    const auto& [shape, data] = payload;
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<uint32_t>(2));
    write_pod(out, static_cast<uint64_t>(shape.first));
    write_pod(out, static_cast<uint64_t>(shape.second));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failure on checkpoint: " + path.string());
}

std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>>
load_checkpoint_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  auto version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  auto count = read_pod<uint64_t>(in);

  std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    auto name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto rank = read_pod<uint32_t>(in);
    if (rank != 2) throw DataError("unexpected tensor rank in checkpoint: " + name);
    auto rows = static_cast<int>(read_pod<uint64_t>(in));
    auto cols = static_cast<int>(read_pod<uint64_t>(in));
    std::vector<float> data(static_cast<size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint file: " + path.string());
    out.push_back({std::move(name), {{rows, cols}, std::move(data)}});
  }
  return out;
}

}  // namespace asgea::nn
