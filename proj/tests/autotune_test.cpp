#include <doctest.h>

#include <cmath>
#include <random>

#include "ck/autotune.hpp"
#include "ck/errors.hpp"
#include "test_support.hpp"

using namespace ck;
using namespace ck::autotune;
using cktest::TempDir;

namespace {

ParameterDecl categorical(const std::string& pointer, std::vector<Json> values) {
  ParameterDecl p;
  p.pointer = pointer;
  p.domain.kind = Domain::Kind::categorical;
  p.domain.values = std::move(values);
  p.default_value = p.domain.values[0];
  return p;
}

ParameterDecl int_range(const std::string& pointer, long long lo, long long hi,
                        long long step = 1) {
  ParameterDecl p;
  p.pointer = pointer;
  p.domain.kind = Domain::Kind::int_range;
  p.domain.lo = lo;
  p.domain.hi = hi;
  p.domain.step = step;
  p.default_value = lo;
  return p;
}

ParameterDecl boolean(const std::string& pointer) {
  ParameterDecl p;
  p.pointer = pointer;
  p.domain.kind = Domain::Kind::boolean;
  p.default_value = false;
  return p;
}

// Recursive cross-product oracle for grid enumeration.
void oracle_grid(const DesignSpace& space, size_t param, Point& acc,
                 std::vector<Point>& out) {
  if (param == space.params.size()) {
    out.push_back(acc);
    return;
  }
  const auto& decl = space.params[param];
  for (size_t i = 0; i < decl.domain.size(); ++i) {
    acc[decl.pointer] = decl.domain.value_at(i);
    oracle_grid(space, param + 1, acc, out);
  }
  acc.erase(decl.pointer);
}

ExperimentRecord record_with(const std::string& uid,
                             const std::map<std::string, double>& values,
                             const std::string& status = "ok") {
  ExperimentRecord r;
  r.experiment_uid = uid;
  r.program = {"test-repo", "program", "0123456789abcdef", std::nullopt};
  r.status = status;
  r.timestamp = "2026-01-01T00:00:00Z";
  for (const auto& [k, v] : values) {
    pipeline::Stat st;
    st.min = v;
    st.max = v;
    st.mean = v;
    st.n = 1;
    r.aggregated[k] = st;
  }
  return r;
}

// All-pairs dominance oracle over raw value matrices, independent of the
// library's record types.
std::vector<size_t> oracle_pareto(const std::vector<std::vector<double>>& values,
                                  const std::vector<bool>& maximize) {
  auto dominated_by = [&](size_t a, size_t b) {  // b dominates a?
    bool one_strict = false;
    for (size_t k = 0; k < maximize.size(); ++k) {
      double va = values[a][k], vb = values[b][k];
      if (maximize[k]) {
        if (vb < va) return false;
        if (vb > va) one_strict = true;
      } else {
        if (vb > va) return false;
        if (vb < va) one_strict = true;
      }
    }
    return one_strict;
  };
  std::vector<size_t> survivors;
  for (size_t i = 0; i < values.size(); ++i) {
    bool dead = false;
    for (size_t j = 0; j < values.size() && !dead; ++j)
      if (j != i && dominated_by(i, j)) dead = true;
    if (!dead) survivors.push_back(i);
  }
  return survivors;
}

}  // namespace

TEST_CASE("grid of 2x3 values enumerates the full cross product in order") {
  DesignSpace space;
  space.params = {categorical("/a", {"x", "y"}), categorical("/b", {1, 2, 3})};
  auto points = enumerate_grid(space);
  REQUIRE(points.size() == 6);
  // first parameter constant over runs of 3, last parameter fastest
  for (int i = 0; i < 3; ++i) CHECK(points[i].at("/a") == "x");
  for (int i = 3; i < 6; ++i) CHECK(points[i].at("/a") == "y");
  CHECK(points[0].at("/b") == 1);
  CHECK(points[1].at("/b") == 2);
  CHECK(points[2].at("/b") == 3);
}

TEST_CASE("grid over a single boolean is [false, true]") {
  DesignSpace space;
  space.params = {boolean("/flag")};
  auto points = enumerate_grid(space);
  REQUIRE(points.size() == 2);
  CHECK(points[0].at("/flag") == false);
  CHECK(points[1].at("/flag") == true);
}

TEST_CASE("grid equals the recursive cross-product oracle on random spaces") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    DesignSpace space;
    size_t nparams = 1 + rng() % 4;
    for (size_t i = 0; i < nparams; ++i) {
      std::string ptr = "/p" + std::to_string(i);
      switch (rng() % 3) {
        case 0: {
          std::vector<Json> vals;
          size_t k = 1 + rng() % 4;
          for (size_t v = 0; v < k; ++v) vals.push_back("v" + std::to_string(v));
          space.params.push_back(categorical(ptr, vals));
          break;
        }
        case 1: {
          long long lo = rng() % 5;
          space.params.push_back(int_range(ptr, lo, lo + rng() % 6, 1 + rng() % 3));
          break;
        }
        default: space.params.push_back(boolean(ptr));
      }
    }
    auto got = enumerate_grid(space);
    std::vector<Point> expected;
    Point acc;
    oracle_grid(space, 0, acc, expected);
    REQUIRE(got.size() == expected.size());
    CHECK(got.size() == space.cardinality());
    CHECK(got == expected);  // same order: declaration-lexicographic
    std::set<Point> unique(got.begin(), got.end());
    CHECK(unique.size() == got.size());
  }
}

TEST_CASE("grids beyond the cap raise SpaceTooLarge with the cardinality") {
  DesignSpace space;
  space.params = {int_range("/a", 0, 999), int_range("/b", 0, 999),
                  int_range("/c", 0, 999)};
  CHECK_THROWS_WITH_AS(enumerate_grid(space), doctest::Contains("SpaceTooLarge"), Error);
  try {
    enumerate_grid(space);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("1000000000") != std::string::npos);
    CHECK(std::string(e.what()).find("1000000") != std::string::npos);
  }
}

TEST_CASE("splitmix64 matches the published golden stream") {
  // Reference outputs computed once from the splitmix64 reference
  // algorithm with an independent implementation.
  SplitMix64 rng0(0);
  CHECK(rng0.next() == 16294208416658607535ULL);
  CHECK(rng0.next() == 7960286522194355700ULL);
  CHECK(rng0.next() == 487617019471545679ULL);
  CHECK(rng0.next() == 17909611376780542444ULL);
  CHECK(rng0.next() == 1961750202426094747ULL);
  CHECK(rng0.next() == 6038094601263162090ULL);
  CHECK(rng0.next() == 3207296026000306913ULL);
  CHECK(rng0.next() == 14232521865600346940ULL);

  SplitMix64 rng42(42);
  CHECK(rng42.next() == 13679457532755275413ULL);
  CHECK(rng42.next() == 2949826092126892291ULL);
  CHECK(rng42.next() == 5139283748462763858ULL);
  CHECK(rng42.next() == 6349198060258255764ULL);
}

TEST_CASE("sample_random matches the frozen golden points for seed 0") {
  DesignSpace space;
  space.params = {categorical("/cat", {"a", "b", "c"}), int_range("/n", 1, 8),
                  boolean("/flag")};
  auto points = sample_random(space, 0, 5);
  REQUIRE(points.size() == 5);
  const std::vector<std::tuple<std::string, int, bool>> golden = {
      {"b", 5, true}, {"b", 4, false}, {"c", 5, true}, {"c", 2, false}, {"a", 8, true}};
  for (size_t i = 0; i < golden.size(); ++i) {
    CHECK(points[i].at("/cat") == std::get<0>(golden[i]));
    CHECK(points[i].at("/n") == std::get<1>(golden[i]));
    CHECK(points[i].at("/flag") == std::get<2>(golden[i]));
  }

  DesignSpace stepped;
  stepped.params = {int_range("/v", 0, 9, 3)};
  auto pts = sample_random(stepped, 7, 6);
  const std::vector<int> golden_ints = {9, 0, 6, 9, 6, 3};
  REQUIRE(pts.size() == golden_ints.size());
  for (size_t i = 0; i < pts.size(); ++i) CHECK(pts[i].at("/v") == golden_ints[i]);
}

TEST_CASE("sample_random is deterministic and stays inside the domains") {
  DesignSpace space;
  space.params = {categorical("/cat", {"a", "b", "c"}), int_range("/n", 1, 8),
                  boolean("/flag")};
  auto a = sample_random(space, 1234, 1000);
  auto b = sample_random(space, 1234, 1000);
  CHECK(a == b);
  for (const auto& p : a)
    for (const auto& param : space.params)
      CHECK(param.domain.contains(p.at(param.pointer)));
}

TEST_CASE("categorical draw frequencies stay within 5 sigma of uniform") {
  DesignSpace space;
  space.params = {categorical("/cat", {"a", "b", "c", "d"})};
  const size_t n = 10'000;
  auto points = sample_random(space, 2026, n);
  std::map<std::string, size_t> counts;
  for (const auto& p : points) counts[p.at("/cat").get<std::string>()]++;
  double expect = n / 4.0;
  double sigma = std::sqrt(n * 0.25 * 0.75);
  for (const auto& [v, c] : counts) {
    (void)v;
    CHECK(std::abs(static_cast<double>(c) - expect) < 5.0 * sigma);
  }
}

TEST_CASE("dominates fixed cases") {
  auto objectives = parse_objectives("t:min,acc:max");
  auto a = record_with("a", {{"t", 1.0}, {"acc", 0.9}});
  auto b = record_with("b", {{"t", 2.0}, {"acc", 0.8}});
  CHECK(dominates(a, b, objectives));
  CHECK(!dominates(b, a, objectives));
  CHECK(!dominates(a, a, objectives));  // strictness: equal never dominates

  auto c = record_with("c", {{"t", 0.5}, {"acc", 0.5}});  // better t, worse acc
  CHECK(!dominates(c, a, objectives));
  CHECK(!dominates(a, c, objectives));

  auto missing = record_with("m", {{"t", 1.0}});
  CHECK_THROWS_WITH_AS(dominates(missing, a, objectives),
                       doctest::Contains("MissingObjectiveKey"), Error);
}

TEST_CASE("dominates is irreflexive and antisymmetric on random records") {
  std::mt19937 rng(55);
  auto objectives = parse_objectives("x:min,y:max,z:min");
  std::vector<ExperimentRecord> records;
  for (int i = 0; i < 60; ++i)
    records.push_back(record_with("r" + std::to_string(i),
                                  {{"x", double(rng() % 5)},
                                   {"y", double(rng() % 5)},
                                   {"z", double(rng() % 5)}}));
  for (const auto& a : records) {
    CHECK(!dominates(a, a, objectives));
    for (const auto& b : records)
      CHECK(!(dominates(a, b, objectives) && dominates(b, a, objectives)));
  }
}

TEST_CASE("pareto_filter fixed cases") {
  auto objectives = parse_objectives("t:min");
  auto single = std::vector<ExperimentRecord>{record_with("a", {{"t", 1.0}})};
  auto got = pareto_filter(single, objectives);
  REQUIRE(got.size() == 1);
  CHECK(got[0].experiment_uid == "a");

  // chain: a dominates b dominates c
  std::vector<ExperimentRecord> chain = {record_with("c", {{"t", 3.0}}),
                                         record_with("a", {{"t", 1.0}}),
                                         record_with("b", {{"t", 2.0}})};
  got = pareto_filter(chain, objectives);
  REQUIRE(got.size() == 1);
  CHECK(got[0].experiment_uid == "a");

  // duplicated objective vectors all survive, input order preserved
  std::vector<ExperimentRecord> dup = {record_with("x", {{"t", 1.0}}),
                                       record_with("y", {{"t", 1.0}}),
                                       record_with("z", {{"t", 9.0}})};
  got = pareto_filter(dup, objectives);
  REQUIRE(got.size() == 2);
  CHECK(got[0].experiment_uid == "x");
  CHECK(got[1].experiment_uid == "y");

  // failed records never reach the frontier
  std::vector<ExperimentRecord> with_failed = {record_with("ok", {{"t", 5.0}}),
                                               record_with("bad", {{"t", 0.1}}, "failed")};
  got = pareto_filter(with_failed, objectives);
  REQUIRE(got.size() == 1);
  CHECK(got[0].experiment_uid == "ok");
}

TEST_CASE("pareto_filter equals the all-pairs oracle and is idempotent") {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 1 + rng() % 200;
    size_t nobj = 1 + rng() % 4;
    std::string csv;
    std::vector<bool> maximize;
    for (size_t k = 0; k < nobj; ++k) {
      bool mx = rng() % 2 == 0;
      maximize.push_back(mx);
      if (k) csv += ",";
      csv += "k" + std::to_string(k) + (mx ? ":max" : ":min");
    }
    auto objectives = parse_objectives(csv);

    std::vector<ExperimentRecord> records;
    std::vector<std::vector<double>> values;
    for (size_t i = 0; i < n; ++i) {
      std::map<std::string, double> vals;
      std::vector<double> row;
      for (size_t k = 0; k < nobj; ++k) {
        double v = static_cast<double>(rng() % 20);
        vals["k" + std::to_string(k)] = v;
        row.push_back(v);
      }
      records.push_back(record_with("r" + std::to_string(i), vals));
      values.push_back(row);
    }

    auto got = pareto_filter(records, objectives);
    auto expected_idx = oracle_pareto(values, maximize);
    REQUIRE(got.size() == expected_idx.size());
    for (size_t i = 0; i < got.size(); ++i)
      CHECK(got[i].experiment_uid == records[expected_idx[i]].experiment_uid);

    // idempotence
    auto again = pareto_filter(got, objectives);
    REQUIRE(again.size() == got.size());
    for (size_t i = 0; i < got.size(); ++i)
      CHECK(again[i].experiment_uid == got[i].experiment_uid);

    // every excluded record is dominated by a survivor
    std::set<std::string> survivor_uids;
    for (const auto& r : got) survivor_uids.insert(r.experiment_uid);
    for (const auto& r : records) {
      if (survivor_uids.contains(r.experiment_uid)) continue;
      bool witnessed = false;
      for (const auto& s : got)
        if (dominates(s, r, objectives)) witnessed = true;
      CHECK(witnessed);
    }
  }
}

TEST_CASE("strictly increasing transforms leave the frontier index set unchanged") {
  std::mt19937 rng(88);
  auto objectives = parse_objectives("a:min,b:max");
  std::vector<ExperimentRecord> records;
  for (int i = 0; i < 100; ++i)
    records.push_back(record_with("r" + std::to_string(i),
                                  {{"a", double(rng() % 15)}, {"b", double(rng() % 15)}}));
  auto survivors = [&](const std::vector<ExperimentRecord>& rs) {
    std::set<std::string> uids;
    for (const auto& r : pareto_filter(rs, objectives)) uids.insert(r.experiment_uid);
    return uids;
  };
  auto baseline = survivors(records);

  std::vector<std::function<double(double)>> transforms = {
      [](double x) { return 3.0 * x + 7.0; },
      [](double x) { return x * x * x; },
      [](double x) { return std::atan(x); },
      [](double x) { return std::exp(x / 20.0); },
      [](double x) { return x + std::tanh(x); },
  };
  for (size_t t = 0; t < transforms.size(); ++t) {
    for (size_t obj = 0; obj < 2; ++obj) {
      std::string key = obj == 0 ? "a" : "b";
      auto transformed = records;
      for (auto& r : transformed) {
        auto st = r.aggregated.at(key);
        st.min = transforms[t](st.min);
        st.mean = transforms[t](st.mean);
        st.max = transforms[t](st.max);
        r.aggregated[key] = st;
      }
      CHECK(survivors(transformed) == baseline);
    }
  }
}

TEST_CASE("objective parsing applies the time-like default field") {
  auto o1 = parse_objective("time_s:min");
  CHECK(o1.field == ObjectiveSpec::Field::min);
  auto o2 = parse_objective("accuracy:max");
  CHECK(o2.field == ObjectiveSpec::Field::mean);
  auto o3 = parse_objective("accuracy:max:min");
  CHECK(o3.field == ObjectiveSpec::Field::min);
  auto o4 = parse_objective("latency_ms:min");
  CHECK(o4.field == ObjectiveSpec::Field::min);
  CHECK_THROWS_AS(parse_objectives(""), Error);
}

TEST_CASE("explore runs a grid of stub points and records closed-form means") {
  TempDir tmp;
  auto repo = cktest::make_repo(tmp / "repo");
  auto prog_dir = tmp / "prog";
  cktest::write_script(prog_dir / "bench.sh",
                       "t=$1\n"
                       "awk -v t=\"$t\" 'BEGIN { printf \"{\\\"time_s\\\": %.9f}\\n\", "
                       "1.0 + 0.1 * t }' > ck-result.json\n");
  pipeline::LoadedProgram program;
  program.spec.program_name = "stub-bench";
  program.spec.run.argv = {"{/meta/program_dir}/bench.sh", "{/run/params/threads}"};
  program.spec.run.timeout_s = 20.0;
  autotune::ParameterDecl threads = int_range("/run/params/threads", 1, 8);
  threads.default_value = 1;
  program.spec.exposed["/run/params/threads"] = threads;
  program.id = {"test-repo", "program", "00000000000000aa", "stub-bench"};
  program.program_dir = prog_dir;

  DesignSpace space;
  space.params = {categorical("/run/params/threads", {1, 2, 4})};

  ExploreOptions options;
  options.repetitions = 2;
  options.workdir = tmp / "explore";
  auto records = explore(repo, program, {}, space, {Strategy::Kind::grid, 0, 0}, options);

  REQUIRE(records.size() == 3);
  const std::vector<double> expected = {1.1, 1.2, 1.4};
  for (size_t i = 0; i < 3; ++i) {
    CHECK(records[i].status == "ok");
    CHECK(records[i].repetitions.size() == 2);
    CHECK(records[i].aggregated.at("time_s").mean ==
          doctest::Approx(expected[i]).epsilon(1e-9));
    CHECK(records[i].env_fingerprint.size() == 64);
  }

  // records are persisted and reload to the same canonical JSON
  auto reloaded = load_experiments(std::vector<ck::registry::Repo>{repo});
  REQUIRE(reloaded.size() == 3);
  std::map<std::string, std::string> by_uid;
  for (const auto& r : reloaded) by_uid[r.experiment_uid] = canonical_dump(Json(r));
  for (const auto& r : records) {
    Json j = r;
    CHECK(by_uid.at(r.experiment_uid) == canonical_dump(j));
  }
}

TEST_CASE("a crashing point yields a failed record and exploration continues") {
  TempDir tmp;
  auto repo = cktest::make_repo(tmp / "repo");
  auto prog_dir = tmp / "prog";
  cktest::write_script(prog_dir / "bench.sh",
                       "t=$1\n"
                       "if [ \"$t\" = \"2\" ]; then exit 1; fi\n"
                       "awk -v t=\"$t\" 'BEGIN { printf \"{\\\"time_s\\\": %.9f}\\n\", "
                       "1.0 + 0.1 * t }' > ck-result.json\n");
  pipeline::LoadedProgram program;
  program.spec.program_name = "crashy";
  program.spec.run.argv = {"{/meta/program_dir}/bench.sh", "{/run/params/threads}"};
  program.spec.run.timeout_s = 20.0;
  autotune::ParameterDecl threads = int_range("/run/params/threads", 1, 8);
  program.spec.exposed["/run/params/threads"] = threads;
  program.id = {"test-repo", "program", "00000000000000ab", "crashy"};
  program.program_dir = prog_dir;

  DesignSpace space;
  space.params = {categorical("/run/params/threads", {1, 2, 4})};
  ExploreOptions options;
  options.repetitions = 1;
  options.workdir = tmp / "explore";
  auto records = explore(repo, program, {}, space, {Strategy::Kind::grid, 0, 0}, options);
  REQUIRE(records.size() == 3);
  CHECK(records[0].status == "ok");
  CHECK(records[1].status == "failed");
  CHECK(records[1].failed_repetitions.size() == 1);
  CHECK(records[2].status == "ok");
}

TEST_CASE("parallel exploration matches the sequential records") {
  TempDir tmp;
  auto repo = cktest::make_repo(tmp / "repo");
  auto prog_dir = tmp / "prog";
  cktest::write_script(prog_dir / "bench.sh",
                       "t=$1\n"
                       "awk -v t=\"$t\" 'BEGIN { printf \"{\\\"time_s\\\": %.9f}\\n\", "
                       "1.0 + 0.1 * t }' > ck-result.json\n");
  pipeline::LoadedProgram program;
  program.spec.program_name = "stub-bench";
  program.spec.run.argv = {"{/meta/program_dir}/bench.sh", "{/run/params/threads}"};
  program.spec.run.timeout_s = 20.0;
  program.spec.exposed["/run/params/threads"] = int_range("/run/params/threads", 1, 8);
  program.id = {"test-repo", "program", "00000000000000ad", "stub-bench"};
  program.program_dir = prog_dir;

  DesignSpace space;
  space.params = {categorical("/run/params/threads", {1, 2, 3, 4, 5, 6})};

  ExploreOptions seq, par;
  seq.repetitions = par.repetitions = 1;
  seq.workdir = tmp / "seq";
  par.workdir = tmp / "par";
  par.parallel = 3;
  auto a = explore(repo, program, {}, space, {Strategy::Kind::grid, 0, 0}, seq);
  auto b = explore(repo, program, {}, space, {Strategy::Kind::grid, 0, 0}, par);
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 6);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].point == b[i].point);  // returned order is point order
    CHECK(a[i].status == b[i].status);
    CHECK(a[i].aggregated.at("time_s").mean ==
          doctest::Approx(b[i].aggregated.at("time_s").mean).epsilon(1e-12));
  }
  // all 12 records were persisted despite concurrent writers
  CHECK(load_experiments(std::vector<ck::registry::Repo>{repo}).size() == 12);
}

TEST_CASE("random exploration traces are reproducible modulo uids and timing") {
  TempDir tmp;
  auto repo = cktest::make_repo(tmp / "repo");
  auto prog_dir = tmp / "prog";
  cktest::write_script(prog_dir / "bench.sh",
                       "t=$1\n"
                       "awk -v t=\"$t\" 'BEGIN { printf \"{\\\"time_s\\\": %.9f}\\n\", "
                       "1.0 + 0.1 * t }' > ck-result.json\n");
  pipeline::LoadedProgram program;
  program.spec.program_name = "stub-bench";
  program.spec.run.argv = {"{/meta/program_dir}/bench.sh", "{/run/params/threads}"};
  program.spec.run.timeout_s = 20.0;
  program.spec.exposed["/run/params/threads"] = int_range("/run/params/threads", 1, 8);
  program.id = {"test-repo", "program", "00000000000000ac", "stub-bench"};
  program.program_dir = prog_dir;

  DesignSpace space;
  space.params = {int_range("/run/params/threads", 1, 8)};
  Strategy strategy{Strategy::Kind::random, 99, 4};

  ExploreOptions o1, o2;
  o1.repetitions = o2.repetitions = 1;
  o1.workdir = tmp / "e1";
  o2.workdir = tmp / "e2";
  auto a = explore(repo, program, {}, space, strategy, o1);
  auto b = explore(repo, program, {}, space, strategy, o2);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].point == b[i].point);
    CHECK(a[i].status == b[i].status);
    REQUIRE(a[i].repetitions.size() == b[i].repetitions.size());
    CHECK(a[i].aggregated.at("time_s").mean ==
          doctest::Approx(b[i].aggregated.at("time_s").mean).epsilon(1e-12));
    CHECK(a[i].env_fingerprint == b[i].env_fingerprint);
  }
}
