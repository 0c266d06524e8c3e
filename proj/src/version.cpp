#include "ck/version.hpp"

#include <algorithm>

namespace ck::envdetect {

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](char c) { return c >= '0' && c <= '9'; });
}

std::string strip_leading_zeros(const std::string& s) {
  size_t i = 0;
  while (i + 1 < s.size() && s[i] == '0') ++i;
  return s.substr(i);
}

// Numeric magnitude order on digit strings; avoids overflow on long tokens.
int compare_digit_strings(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
  if (a == b) return 0;
  return a < b ? -1 : 1;
}

const Version::Component kZero{true, "0"};

}  // namespace

Version Version::parse(const std::string& raw) {
  Version v;
  v.raw = raw;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    Component c;
    c.numeric = all_digits(token);
    c.text = c.numeric ? strip_leading_zeros(token) : token;
    v.components.push_back(std::move(c));
    token.clear();
  };
  for (char ch : raw) {
    if (ch == '.' || ch == '-' || ch == '_') flush();
    else token.push_back(ch);
  }
  flush();
  return v;
}

int compare_versions(const Version& a, const Version& b) {
  size_t n = std::max(a.components.size(), b.components.size());
  for (size_t i = 0; i < n; ++i) {
    const Version::Component& ca = i < a.components.size() ? a.components[i] : kZero;
    const Version::Component& cb = i < b.components.size() ? b.components[i] : kZero;
    if (ca.numeric && cb.numeric) {
      int c = compare_digit_strings(ca.text, cb.text);
      if (c != 0) return c;
    } else if (!ca.numeric && !cb.numeric) {
      if (ca.text != cb.text) return ca.text < cb.text ? -1 : 1;
    } else {
      return ca.numeric ? -1 : 1;  // numeric < textual
    }
  }
  return 0;
}

}  // namespace ck::envdetect
