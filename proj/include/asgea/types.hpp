#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace asgea {

enum class Side : uint8_t { KG1 = 0, KG2 = 1 };

inline Side opposite(Side s) { return s == Side::KG1 ? Side::KG2 : Side::KG1; }

// Dense entity id over the union of both KGs. Side-1 entities occupy
// [0, n1), side-2 entities [n1, n1+n2).
using EntityIdx = int32_t;
using RelationIdx = int32_t;

enum class RelKind : uint8_t {
  Forward = 0,
  Reversed = 1,
  Anchor = 2,
  AnchorReversed = 3,
  SelfLoop = 4,
};

struct Triple {
  EntityIdx head;
  RelationIdx rel;
  EntityIdx tail;

  friend bool operator==(const Triple& a, const Triple& b) = default;
  friend auto operator<=>(const Triple& a, const Triple& b) = default;
};

struct TripleHash {
  size_t operator()(const Triple& t) const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v;
      h *= 1099511628211ULL;
    };
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.head)));
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.rel)));
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.tail)));
    return static_cast<size_t>(h);
  }
};

// Error categories mirrored by the C API status codes and CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace asgea
