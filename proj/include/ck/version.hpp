#pragma once

#include <compare>
#include <string>
#include <vector>

namespace ck::envdetect {

// Versions split on '.', '-' and '_'; a token is numeric iff it is all
// digits. Comparison is componentwise: numeric pairs compare numerically,
// textual pairs bytewise, numeric sorts before textual, and missing trailing
// components count as numeric zero. Rendering a parsed version returns the
// raw string unchanged.
struct Version {
  struct Component {
    bool numeric = false;
    std::string text;  // digit string (leading zeros stripped) when numeric

    bool operator==(const Component&) const = default;
  };

  std::string raw;
  std::vector<Component> components;

  static Version parse(const std::string& raw);

  const std::string& render() const { return raw; }
  bool empty() const { return raw.empty(); }
};

// -1 (a<b), 0 (equal), +1 (a>b); a total order.
int compare_versions(const Version& a, const Version& b);

inline bool operator==(const Version& a, const Version& b) {
  return compare_versions(a, b) == 0;
}
inline bool operator<(const Version& a, const Version& b) {
  return compare_versions(a, b) < 0;
}
inline bool operator<=(const Version& a, const Version& b) {
  return compare_versions(a, b) <= 0;
}

}  // namespace ck::envdetect
