#include <doctest.h>

#include <cstdlib>
#include <random>

#include "ck/errors.hpp"
#include "ck/solution.hpp"
#include "test_support.hpp"

using namespace ck;
using namespace ck::solution;
using cktest::TempDir;

namespace {

// Full demo fixture: a repo holding a stub dataset package, a stub
// framework package, a compiler detection plugin (with a stub compiler on
// disk) and a benchmark program wired to all three.
struct DemoFixture {
  explicit DemoFixture(const TempDir& tmp)
      : repo(cktest::make_repo(tmp / "repo", "demo-repo")) {
    // dataset package: download + checksum + marker script
    auto dataset_file = tmp / "fixtures" / "coco-stub.bin";
    cktest::write_file(dataset_file, cktest::kDatasetPayload);
    Json dataset_pkg = {
        {"package_name", "stub-dataset"},
        {"tags", {"dataset", "stub-dataset"}},
        {"version", "50img"},
        {"install_steps",
         {{{"kind", "download"},
           {"url", "file://" + dataset_file.string()},
           {"sha256", cktest::kDatasetSha256},
           {"filename", "coco-stub.bin"}},
          {{"kind", "script"}, {"command", {"touch", "dataset.ready"}}}}},
        {"provides_env", {{"CK_DATASET_DIR", "{install_dir}"}}}};
    registry::EntryMeta dm;
    dm.tags = {"dataset", "stub-dataset"};
    dm.meta = dataset_pkg;
    repo.add_entry("package", "stub-dataset", dm);

    // framework package
    auto fw_file = tmp / "fixtures" / "framework.bin";
    cktest::write_file(fw_file, cktest::kFrameworkPayload);
    Json fw_pkg = {{"package_name", "stub-framework"},
                   {"tags", {"framework", "stub-framework"}},
                   {"version", "2.4.0"},
                   {"install_steps",
                    {{{"kind", "download"},
                      {"url", "file://" + fw_file.string()},
                      {"sha256", cktest::kFrameworkSha256},
                      {"filename", "framework.bin"}}}},
                   {"provides_env", {{"CK_FRAMEWORK_DIR", "{install_dir}"}}}};
    registry::EntryMeta fm;
    fm.tags = {"framework", "stub-framework"};
    fm.meta = fw_pkg;
    repo.add_entry("package", "stub-framework", fm);

    // compiler stub on disk + detection plugin
    compiler_root = tmp / "compiler-root";
    cktest::write_script(compiler_root / "cc-stub", "echo \"ccstub 1.2.3\"\n");
    Json plugin = {{"soft_name", "compiler-stub"},
                   {"tags", {"compiler", "cc-stub"}},
                   {"probe",
                    {{"binary_names", {"cc-stub"}},
                     {"search_roots", Json::array()},
                     {"version_args", {"--version"}},
                     {"version_regex", "([0-9]+\\.[0-9]+\\.[0-9]+)"},
                     {"run_timeout_s", 5.0}}},
                   {"env_template", {{"CK_CC", "{path}"}}}};
    registry::EntryMeta pm;
    pm.tags = {"compiler", "cc-stub"};
    pm.meta = plugin;
    repo.add_entry("soft", "compiler-stub", pm);

    // benchmark program (no build stage: compile-program is a no-op)
    auto payload = tmp / "program-payload";
    cktest::write_script(payload / "bench.sh",
                         "t=$1\n"
                         "awk -v t=\"$t\" 'BEGIN { printf \"{\\\"time_s\\\": %.9f, "
                         "\\\"accuracy\\\": 0.9}\\n\", 1.0 + 0.1 * t }' > ck-result.json\n");
    Json program = {
        {"program_name", "objdetect-stub"},
        {"deps",
         {{{"name", "dataset"}, {"tags", {"stub-dataset"}}},
          {{"name", "framework"}, {"tags", {"stub-framework"}}},
          {{"name", "compiler"}, {"tags", {"compiler"}}, {"allow_install", false}}}},
        {"run",
         {{"argv", {"{/meta/program_dir}/bench.sh", "{/run/params/threads}"}},
          {"repeat_default", 1},
          {"timeout_s", 20.0}}},
        {"extractor", {{"mode", "result-file"}}},
        {"exposed",
         {{"/run/params/threads",
           {{"domain", {{"kind", "int-range"}, {"lo", 1}, {"hi", 8}, {"step", 1}}},
            {"default", 2}}}}}};
    registry::EntryMeta gm;
    gm.tags = {"program", "bench"};
    gm.meta = program;
    repo.add_entry("program", "objdetect-stub", gm, payload);
  }

  SolutionManifest manifest(bool with_space = false) const {
    Json tasks = Json::array(
        {Json{{"action", "create-isolated-env"}, {"skippable", true}},
         Json{{"action", "install-package"}, {"target", "stub-dataset"}},
         Json{{"action", "detect-software"},
              {"target", "compiler-stub"},
              {"params", {{"roots", {compiler_root.string()}}}}},
         Json{{"action", "install-package"}, {"target", "stub-framework"}},
         Json{{"action", "compile-program"}, {"target", "objdetect-stub"}}});
    Json m = {{"name", "demo-objdetect-benchmark"},
              {"target_os", "any"},
              {"tasks", tasks},
              {"benchmark",
               {{"program", "objdetect-stub"},
                {"repetitions", 3},
                {"objectives", {{{"key", "time_s"}, {"direction", "minimize"}}}}}},
              {"report", {{"title", "demo scoreboard"}}},
              {"format_version", 1}};
    if (with_space)
      m["benchmark"]["space"] = Json::array(
          {{{"pointer", "/run/params/threads"},
            {"domain", {{"kind", "categorical"}, {"values", {1, 2, 4, 8}}}},
            {"default", 1}}});
    return m.get<SolutionManifest>();
  }

  registry::Repo repo;
  std::filesystem::path compiler_root;
};

ResultBundle bundle_of(const std::vector<std::string>& uids, const std::string& name,
                       const std::string& stamp) {
  ResultBundle b;
  b.solution_name = name;
  b.created_at = stamp;
  b.format_version = 1;
  for (const auto& uid : uids) {
    autotune::ExperimentRecord r;
    r.experiment_uid = uid;
    r.program = {"repo", "program", "0000000000000000", std::nullopt};
    r.status = "ok";
    r.timestamp = stamp;
    pipeline::Stat st;
    st.min = st.max = st.mean = 1.0;
    st.n = 1;
    r.aggregated["time_s"] = st;
    b.records.push_back(std::move(r));
  }
  return b;
}

std::vector<std::string> ok_statuses(const SolutionState& s) {
  std::vector<std::string> out;
  for (const auto& t : s.journal) out.push_back(t.status);
  return out;
}

}  // namespace

TEST_CASE("init executes the demo task list and journals five ok entries") {
  TempDir tmp;
  DemoFixture fx(tmp);
  SolutionState state = init_solution(fx.manifest(), fx.repo);
  REQUIRE(state.journal.size() == 5);
  CHECK(ok_statuses(state) ==
        std::vector<std::string>{"ok", "ok", "ok", "ok", "ok"});
  CHECK(state.completed());
  CHECK(std::filesystem::exists(state.state_dir / "solution-state.json"));

  // detected compiler and both installs are now registry envs
  CHECK(fx.repo.list_entries("env").size() == 3);
}

TEST_CASE("a failing skippable task is skipped and the rest still runs") {
  TempDir tmp;
  DemoFixture fx(tmp);
  ::setenv("CK_SOLUTION_FAIL_AT", "0", 1);
  SolutionState state = init_solution(fx.manifest(), fx.repo);
  ::unsetenv("CK_SOLUTION_FAIL_AT");
  REQUIRE(state.journal.size() == 5);
  CHECK(state.journal[0].status == "skipped");
  for (size_t i = 1; i < 5; ++i) CHECK(state.journal[i].status == "ok");
  CHECK(state.completed());

  // a later rerun re-attempts the skipped task
  SolutionState rerun = init_solution(fx.manifest(), fx.repo);
  CHECK(rerun.journal[0].status == "ok");
}

TEST_CASE("a failing required task aborts and a rerun resumes after the ok prefix") {
  TempDir tmp;
  DemoFixture fx(tmp);
  ::setenv("CK_SOLUTION_FAIL_AT", "2", 1);
  CHECK_THROWS_WITH_AS(init_solution(fx.manifest(), fx.repo), doctest::Contains("TaskFailed"),
                       Error);
  ::unsetenv("CK_SOLUTION_FAIL_AT");

  auto journal_file =
      solution_state_dir(fx.repo, "demo-objdetect-benchmark") / "solution-state.json";
  Json aborted = read_json_file(journal_file);
  REQUIRE(aborted.size() == 3);
  CHECK(aborted[0]["status"] == "ok");
  CHECK(aborted[1]["status"] == "ok");
  CHECK(aborted[2]["status"] == "failed");
  std::string t0_stamp = aborted[0]["finished_at"];
  std::string t1_stamp = aborted[1]["finished_at"];

  SolutionState resumed = init_solution(fx.manifest(), fx.repo);
  CHECK(resumed.completed());
  REQUIRE(resumed.journal.size() == 5);
  // the ok prefix was not re-executed
  CHECK(resumed.journal[0].finished_at == t0_stamp);
  CHECK(resumed.journal[1].finished_at == t1_stamp);
  CHECK(resumed.journal[2].status == "ok");
}

TEST_CASE("editing a completed task re-runs it on the next init") {
  TempDir tmp;
  DemoFixture fx(tmp);
  SolutionState first = init_solution(fx.manifest(), fx.repo);
  SolutionManifest edited = fx.manifest();
  edited.tasks[1].params["note"] = "changed";  // content hash changes
  SolutionState rerun = init_solution(edited, fx.repo);
  CHECK(rerun.completed());
  CHECK(rerun.journal[1].content_hash != first.journal[1].content_hash);
  CHECK(rerun.journal[1].finished_at != first.journal[1].finished_at);  // re-executed
  CHECK(rerun.journal[0].finished_at == first.journal[0].finished_at);  // untouched
}

TEST_CASE("benchmark requires a completed init") {
  TempDir tmp;
  DemoFixture fx(tmp);
  ::setenv("CK_SOLUTION_FAIL_AT", "3", 1);
  CHECK_THROWS_AS(init_solution(fx.manifest(), fx.repo), Error);
  ::unsetenv("CK_SOLUTION_FAIL_AT");
  CHECK_THROWS_WITH_AS(run_benchmark("demo-objdetect-benchmark", fx.repo),
                       doctest::Contains("InitIncomplete"), Error);
}

TEST_CASE("benchmark without a space runs one default point with the manifest reps") {
  TempDir tmp;
  DemoFixture fx(tmp);
  init_solution(fx.manifest(), fx.repo);
  ResultBundle bundle = run_benchmark("demo-objdetect-benchmark", fx.repo);
  REQUIRE(bundle.records.size() == 1);
  CHECK(bundle.records[0].status == "ok");
  CHECK(bundle.records[0].repetitions.size() == 3);
  CHECK(bundle.records[0].aggregated.at("time_s").n == 3);
  CHECK(bundle.format_version == 1);

  auto bundle_file =
      solution_state_dir(fx.repo, "demo-objdetect-benchmark") / "results.bundle.json";
  REQUIRE(std::filesystem::exists(bundle_file));
  ResultBundle reloaded = read_json_file(bundle_file).get<ResultBundle>();
  CHECK(reloaded.records.size() == 1);
  CHECK(reloaded.solution_name == "demo-objdetect-benchmark");
}

TEST_CASE("benchmark over a 4-point space yields 4 records") {
  TempDir tmp;
  DemoFixture fx(tmp);
  init_solution(fx.manifest(true), fx.repo);
  ResultBundle bundle = run_benchmark("demo-objdetect-benchmark", fx.repo);
  REQUIRE(bundle.records.size() == 4);
  const std::vector<double> expected = {1.1, 1.2, 1.4, 1.8};
  for (size_t i = 0; i < 4; ++i) {
    CHECK(bundle.records[i].status == "ok");
    CHECK(bundle.records[i].aggregated.at("time_s").mean ==
          doctest::Approx(expected[i]).epsilon(1e-9));
  }
}

TEST_CASE("expected characteristic keys downgrade incomplete records to failed") {
  TempDir tmp;
  DemoFixture fx(tmp);
  SolutionManifest ok_manifest = fx.manifest();
  ok_manifest.benchmark.expected_keys = {"time_s", "accuracy"};
  init_solution(ok_manifest, fx.repo);
  ResultBundle good = run_benchmark("demo-objdetect-benchmark", fx.repo);
  REQUIRE(good.records.size() == 1);
  CHECK(good.records[0].status == "ok");

  SolutionManifest strict = fx.manifest();
  strict.benchmark.expected_keys = {"time_s", "energy_j"};  // stub never emits energy_j
  init_solution(strict, fx.repo);
  ResultBundle bad = run_benchmark("demo-objdetect-benchmark", fx.repo);
  REQUIRE(bad.records.size() == 1);
  CHECK(bad.records[0].status == "failed");
}

TEST_CASE("two benchmark runs of the deterministic stub agree on aggregated means") {
  TempDir tmp;
  DemoFixture fx(tmp);
  init_solution(fx.manifest(), fx.repo);
  ResultBundle a = run_benchmark("demo-objdetect-benchmark", fx.repo);
  ResultBundle b = run_benchmark("demo-objdetect-benchmark", fx.repo);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(a.records[0].aggregated.at("time_s").mean ==
        doctest::Approx(b.records[0].aggregated.at("time_s").mean).epsilon(1e-12));
}

TEST_CASE("merging disjoint bundles concatenates; self-merge dedupes") {
  auto b1 = bundle_of({"a1a1a1a1a1a1a1a1", "b2b2b2b2b2b2b2b2", "c3c3c3c3c3c3c3c3"}, "s1",
                      "2026-01-01T00:00:00Z");
  auto b2 = bundle_of({"d4d4d4d4d4d4d4d4", "e5e5e5e5e5e5e5e5", "f6f6f6f6f6f6f6f6",
                       "a7a7a7a7a7a7a7a7"},
                      "s2", "2026-01-02T00:00:00Z");
  std::vector<ResultBundle> both{b1, b2};
  auto merged = merge_bundles(both);
  CHECK(merged.size() == 7);
  CHECK(merged[0].source == "s1@2026-01-01T00:00:00Z");
  CHECK(merged[6].source == "s2@2026-01-02T00:00:00Z");

  std::vector<ResultBundle> twice{b1, b1};
  CHECK(merge_bundles(twice).size() == 3);
}

TEST_CASE("merge equals the uid union on random overlapping bundles") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> pool;
    for (int i = 0; i < 20; ++i) {
      std::string uid(16, '0');
      for (auto& c : uid) c = "0123456789abcdef"[rng() % 16];
      pool.push_back(uid);
    }
    std::vector<ResultBundle> bundles;
    std::set<std::string> expected;
    int nb = 2 + rng() % 3;
    for (int b = 0; b < nb; ++b) {
      std::vector<std::string> uids;
      size_t n = 1 + rng() % 8;
      for (size_t i = 0; i < n; ++i) {
        const std::string& uid = pool[rng() % pool.size()];
        uids.push_back(uid);
        expected.insert(uid);
      }
      bundles.push_back(bundle_of(uids, "s" + std::to_string(b), "2026-01-01T00:00:00Z"));
    }
    auto merged = merge_bundles(bundles);
    std::set<std::string> got;
    for (const auto& sr : merged) got.insert(sr.record.experiment_uid);
    CHECK(got == expected);
    CHECK(merged.size() == expected.size());

    // set-level order insensitivity
    std::reverse(bundles.begin(), bundles.end());
    auto reversed = merge_bundles(bundles);
    std::set<std::string> got_rev;
    for (const auto& sr : reversed) got_rev.insert(sr.record.experiment_uid);
    CHECK(got_rev == expected);
  }
}

TEST_CASE("mixed format versions refuse to merge") {
  auto b1 = bundle_of({"a1a1a1a1a1a1a1a1"}, "s1", "2026-01-01T00:00:00Z");
  auto b2 = bundle_of({"b2b2b2b2b2b2b2b2"}, "s2", "2026-01-01T00:00:00Z");
  b2.format_version = 2;
  std::vector<ResultBundle> both{b1, b2};
  CHECK_THROWS_WITH_AS(merge_bundles(both), doctest::Contains("FormatVersionMismatch"), Error);
}

TEST_CASE("report sorts by the first objective and flags the frontier") {
  std::vector<SourcedRecord> records;
  const std::vector<double> times = {2.0, 1.0, 3.0};
  for (size_t i = 0; i < times.size(); ++i) {
    autotune::ExperimentRecord r;
    r.experiment_uid = std::string(15, '0') + std::to_string(i);
    r.program = {"repo", "program", "0000000000000000", std::nullopt};
    r.status = "ok";
    pipeline::Stat st;
    st.min = st.max = st.mean = times[i];
    st.n = 1;
    r.aggregated["time_s"] = st;
    records.push_back({"local", r});
  }
  auto objectives = autotune::parse_objectives("time_s:min");

  std::string json_report = render_report(records, objectives, ReportFormat::json);
  Json rows = Json::parse(json_report);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["objectives"]["time_s"] == 1.0);
  CHECK(rows[1]["objectives"]["time_s"] == 2.0);
  CHECK(rows[2]["objectives"]["time_s"] == 3.0);
  CHECK(rows[0]["on_frontier"] == true);
  CHECK(rows[1]["on_frontier"] == false);
  CHECK(rows[2]["on_frontier"] == false);

  // json round-trip: parse -> re-render is the identity
  CHECK(canonical_dump(rows) == json_report);

  std::string md = render_report(records, objectives, ReportFormat::markdown);
  CHECK(md.find("| source |") == 0);
  CHECK(md.find("yes") != std::string::npos);
}

TEST_CASE("empty record sets render a header-only table and an empty array") {
  auto objectives = autotune::parse_objectives("time_s:min");
  std::string md = render_report({}, objectives, ReportFormat::markdown);
  CHECK(md.find("| source |") == 0);
  CHECK(std::count(md.begin(), md.end(), '\n') == 2);  // header + separator only
  std::string js = render_report({}, objectives, ReportFormat::json);
  CHECK(js == "[]\n");
}

TEST_CASE("frontier flags in reports agree with pareto_filter on random records") {
  std::mt19937 rng(67);
  std::vector<SourcedRecord> records;
  std::vector<autotune::ExperimentRecord> plain;
  for (int i = 0; i < 200; ++i) {
    autotune::ExperimentRecord r;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016x", i);
    r.experiment_uid = buf;
    r.program = {"repo", "program", "0000000000000000", std::nullopt};
    r.status = "ok";
    for (const auto& key : {"t", "a"}) {
      pipeline::Stat st;
      st.min = st.max = st.mean = static_cast<double>(rng() % 12);
      st.n = 1;
      r.aggregated[key] = st;
    }
    records.push_back({"local", r});
    plain.push_back(r);
  }
  auto objectives = autotune::parse_objectives("t:min,a:max");
  Json rows = Json::parse(render_report(records, objectives, ReportFormat::json));

  std::set<std::string> frontier;
  for (const auto& r : autotune::pareto_filter(plain, objectives))
    frontier.insert(r.experiment_uid);
  for (const auto& row : rows) {
    bool flagged = row["on_frontier"].get<bool>();
    CHECK(flagged == frontier.contains(row["experiment_uid"].get<std::string>()));
  }
}

TEST_CASE("a reference bundle adds measured-minus-reference deltas") {
  auto reference = bundle_of({"aaaaaaaaaaaaaaaa"}, "ref", "2026-01-01T00:00:00Z");
  // reference best time_s = 1.0
  std::vector<SourcedRecord> records;
  autotune::ExperimentRecord r;
  r.experiment_uid = "bbbbbbbbbbbbbbbb";
  r.program = {"repo", "program", "0000000000000000", std::nullopt};
  r.status = "ok";
  pipeline::Stat st;
  st.min = st.max = st.mean = 1.5;
  st.n = 1;
  r.aggregated["time_s"] = st;
  records.push_back({"local", r});

  auto objectives = autotune::parse_objectives("time_s:min");
  Json rows = Json::parse(
      render_report(records, objectives, ReportFormat::json, reference));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["delta_vs_reference"]["time_s"] == doctest::Approx(0.5));

  std::string md = render_report(records, objectives, ReportFormat::markdown, reference);
  CHECK(md.find("delta_time_s") != std::string::npos);
}

TEST_CASE("manifest schema violations are rejected") {
  Json bad = {{"name", "ok-name"},
              {"target_os", "any"},
              {"tasks", Json::array()},
              {"benchmark", {{"program", "p"}}}};
  CHECK_THROWS_AS(bad.get<SolutionManifest>(), Error);

  Json bad_name = {{"name", "9starts-with-digit"},
                   {"target_os", "any"},
                   {"tasks", {{{"action", "custom-script"}, {"target", {"true"}}}}},
                   {"benchmark", {{"program", "p"}}}};
  CHECK_THROWS_AS(bad_name.get<SolutionManifest>(), Error);

  Json bad_action = {{"name", "ok-name"},
                     {"target_os", "any"},
                     {"tasks", {{{"action", "explode"}}}},
                     {"benchmark", {{"program", "p"}}}};
  CHECK_THROWS_AS(bad_action.get<SolutionManifest>(), Error);
}

TEST_CASE("target_os gate honors the host platform") {
  TempDir tmp;
  DemoFixture fx(tmp);
  SolutionManifest wrong = fx.manifest();
  wrong.target_os = "plan9";
  CHECK_THROWS_WITH_AS(init_solution(wrong, fx.repo), doctest::Contains("TargetOsMismatch"),
                       Error);

  SolutionManifest right = fx.manifest();
  right.target_os = envdetect::collect_platform_info().os_name;  // exact host os
  CHECK_NOTHROW(init_solution(right, fx.repo));
}
