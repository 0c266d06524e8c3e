#include "ck/design_space.hpp"

#include <algorithm>
#include <set>

#include "ck/errors.hpp"

namespace ck::autotune {

size_t Domain::size() const {
  switch (kind) {
    case Kind::categorical: return values.size();
    case Kind::int_range:
      return static_cast<size_t>((hi - lo) / step) + 1;
    case Kind::boolean: return 2;
  }
  return 0;
}

Json Domain::value_at(size_t index) const {
  switch (kind) {
    case Kind::categorical: return values.at(index);
    case Kind::int_range: return lo + step * static_cast<long long>(index);
    case Kind::boolean: return index != 0;
  }
  return nullptr;
}

bool Domain::contains(const Json& v) const {
  switch (kind) {
    case Kind::categorical:
      return std::find(values.begin(), values.end(), v) != values.end();
    case Kind::int_range: {
      if (!v.is_number_integer()) return false;
      long long x = v.get<long long>();
      return x >= lo && x <= hi && (x - lo) % step == 0;
    }
    case Kind::boolean: return v.is_boolean();
  }
  return false;
}

void to_json(Json& j, const ParameterDecl& p) {
  j = Json{{"pointer", p.pointer}, {"default", p.default_value}};
  switch (p.domain.kind) {
    case Domain::Kind::categorical:
      j["domain"] = Json{{"kind", "categorical"}, {"values", p.domain.values}};
      break;
    case Domain::Kind::int_range:
      j["domain"] = Json{{"kind", "int-range"},
                         {"lo", p.domain.lo},
                         {"hi", p.domain.hi},
                         {"step", p.domain.step}};
      break;
    case Domain::Kind::boolean:
      j["domain"] = Json{{"kind", "boolean"}};
      break;
  }
}

void from_json(const Json& j, ParameterDecl& p) {
  // The pointer may come from an enclosing map key instead (ProgramSpec
  // `exposed`); DesignSpace::from_json rejects empty pointers.
  p.pointer = j.value("pointer", "");
  const Json& d = j.at("domain");
  std::string kind = d.at("kind").get<std::string>();
  if (kind == "categorical") {
    p.domain.kind = Domain::Kind::categorical;
    p.domain.values = d.at("values").get<std::vector<Json>>();
    if (p.domain.values.empty())
      throw Error(Errc::schema_violation, p.pointer + ": empty categorical domain");
    std::set<Json> distinct(p.domain.values.begin(), p.domain.values.end());
    if (distinct.size() != p.domain.values.size())
      throw Error(Errc::schema_violation, p.pointer + ": duplicate categorical values");
  } else if (kind == "int-range") {
    p.domain.kind = Domain::Kind::int_range;
    p.domain.lo = d.at("lo").get<long long>();
    p.domain.hi = d.at("hi").get<long long>();
    p.domain.step = d.value("step", 1LL);
    if (p.domain.step < 1)
      throw Error(Errc::schema_violation, p.pointer + ": step must be >= 1");
    if (p.domain.lo > p.domain.hi)
      throw Error(Errc::schema_violation, p.pointer + ": lo > hi");
  } else if (kind == "boolean") {
    p.domain.kind = Domain::Kind::boolean;
  } else {
    throw Error(Errc::schema_violation, p.pointer + ": unknown domain kind '" + kind + "'");
  }
  p.default_value = j.value("default", Json());
  if (p.default_value.is_null()) p.default_value = p.domain.value_at(0);
  if (!p.domain.contains(p.default_value))
    throw Error(Errc::schema_violation, p.pointer + ": default outside domain");
}

void to_json(Json& j, const DesignSpace& s) { j = s.params; }

void from_json(const Json& j, DesignSpace& s) {
  s.params = j.get<std::vector<ParameterDecl>>();
  std::set<std::string> pointers;
  for (const auto& p : s.params) {
    if (p.pointer.empty())
      throw Error(Errc::schema_violation, "design-space parameter without a pointer");
    if (!pointers.insert(p.pointer).second)
      throw Error(Errc::schema_violation, "duplicate parameter pointer " + p.pointer);
  }
}

size_t DesignSpace::cardinality() const {
  size_t total = 1;
  for (const auto& p : params) {
    size_t s = p.domain.size();
    if (s != 0 && total > static_cast<size_t>(-1) / s) return static_cast<size_t>(-1);
    total *= s;
  }
  return total;
}

std::vector<Point> enumerate_grid(const DesignSpace& space, size_t cap) {
  size_t total = space.cardinality();
  if (total > cap)
    throw Error(Errc::space_too_large,
                "cardinality " + std::to_string(total) + " exceeds cap " + std::to_string(cap));
  std::vector<Point> points;
  points.reserve(total);
  std::vector<size_t> idx(space.params.size(), 0);
  for (size_t count = 0; count < total; ++count) {
    Point p;
    for (size_t i = 0; i < space.params.size(); ++i)
      p[space.params[i].pointer] = space.params[i].domain.value_at(idx[i]);
    points.push_back(std::move(p));
    // odometer increment, last parameter fastest
    for (size_t i = space.params.size(); i-- > 0;) {
      if (++idx[i] < space.params[i].domain.size()) break;
      idx[i] = 0;
    }
  }
  return points;
}

std::vector<Point> sample_random(const DesignSpace& space, uint64_t seed, size_t n) {
  SplitMix64 rng(seed);
  std::vector<Point> points;
  points.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    Point p;
    for (const auto& param : space.params)
      p[param.pointer] = param.domain.value_at(rng.below(param.domain.size()));
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace ck::autotune
