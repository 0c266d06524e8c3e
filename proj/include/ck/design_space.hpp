#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ck/util.hpp"

namespace ck::autotune {

// Deterministic PRNG for exploration traces. Bounded draws use rejection
// sampling: draw r, reject while r < 2^64 mod n, return r % n.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t below(uint64_t n) {
    uint64_t rem = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next();
      if (r >= rem) return r % n;
    }
  }

 private:
  uint64_t state_;
};

struct Domain {
  enum class Kind { categorical, int_range, boolean };
  Kind kind = Kind::boolean;
  std::vector<Json> values;  // categorical
  long long lo = 0, hi = 0, step = 1;  // int_range

  size_t size() const;
  Json value_at(size_t index) const;
  bool contains(const Json& v) const;
};

struct ParameterDecl {
  std::string pointer;  // JSON Pointer into the pipeline state
  Domain domain;
  Json default_value;
};

void to_json(Json& j, const ParameterDecl& p);
void from_json(const Json& j, ParameterDecl& p);

struct DesignSpace {
  std::vector<ParameterDecl> params;

  // Product of domain sizes, saturating at SIZE_MAX.
  size_t cardinality() const;
};

void to_json(Json& j, const DesignSpace& s);
void from_json(const Json& j, DesignSpace& s);

// A design point: JSON Pointer -> value. std::map keeps serialization
// deterministic; draw order is declaration order regardless.
using Point = std::map<std::string, Json>;

inline constexpr size_t kDefaultGridCap = 1'000'000;

// Full cross-product, declaration-order lexicographic, last parameter
// varying fastest. Throws SpaceTooLarge beyond the cap.
std::vector<Point> enumerate_grid(const DesignSpace& space, size_t cap = kDefaultGridCap);

// n uniform draws per parameter (duplicates allowed), fully determined by
// the seed. Points are drawn outer-loop, parameters inner-loop.
std::vector<Point> sample_random(const DesignSpace& space, uint64_t seed, size_t n);

}  // namespace ck::autotune
