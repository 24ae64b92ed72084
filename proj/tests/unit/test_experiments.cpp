#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zrp/experiments.hpp"
#include "zrp/simulator.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace zrp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json static_json() {
  return {{"kind", "static"}, {"id", "unit_static"}, {"regime", "beta0"}, {"n_ladder", {100, 200}},
          {"replicas", 20},   {"seed", 5}};
}

json sample_json() {
  return {{"kind", "sample"}, {"id", "unit_sample"}, {"regime", "sublog"}, {"n_ladder", {100}},
          {"t_macro", {0.005, 0.01}}, {"seed", 9}};
}

json hydro_json() {
  return {{"kind", "hydro"},         {"id", "unit_hydro"},           {"regime", "log"},
          {"n_ladder", {40, 80}},     {"t_macro", {0.005, 0.01}},     {"replicas", 6},
          {"initial", "local_equilibrium"}, {"seed", 3},             {"pde", {{"dx", 0.02}}}};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("zrp_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

void expect_invalid(json j, const std::string& fragment) {
  CAPTURE(j.dump());
  try {
    (void)ExperimentConfig::from_json(j);
    FAIL("config accepted");
  } catch (const std::invalid_argument& e) {
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
  }
}

}  // namespace

TEST_CASE("config parsing and canonical form") {
  const auto config = ExperimentConfig::from_json(static_json());
  CHECK(config.kind == ExperimentKind::Static);
  CHECK(config.regime == Regime::Beta0);
  CHECK(config.c_frac == 0.5);
  CHECK(config.profile == "phi_c_half");
  CHECK(config.test_functions == std::vector<std::string>{"g1", "g2", "g3"});

  const auto lg = ExperimentConfig::from_json(hydro_json());
  CHECK(lg.beta == 0.5);
  CHECK(lg.energy_regime().u_id() == "linear");
  CHECK(lg.pde.dx == 0.02);
  CHECK(ExperimentConfig::from_json(sample_json()).beta == 1.0);

  const auto again = ExperimentConfig::from_json(config.to_json());
  CHECK(again.to_json() == config.to_json());
  CHECK(again.hash() == config.hash());
  auto other = static_json();
  other["seed"] = 6;
  CHECK(ExperimentConfig::from_json(other).hash() != config.hash());
  // Output location is not part of the experiment's identity.
  auto moved = static_json();
  moved["output_dir"] = "elsewhere";
  CHECK(ExperimentConfig::from_json(moved).hash() == config.hash());
}

TEST_CASE("config errors carry precise diagnostics") {
  auto with = [](json j, const std::string& key, json value) {
    j[key] = std::move(value);
    return j;
  };
  expect_invalid(with(static_json(), "colour", "red"), "unknown key 'colour'");
  expect_invalid(with(static_json(), "kind", "histogram"), "unknown experiment kind");
  expect_invalid(with(static_json(), "regime", "cubic"), "unknown regime");
  expect_invalid(with(static_json(), "replicas", "many"), "config.replicas");
  expect_invalid(with(static_json(), "replicas", 0), "'replicas' must be >= 1");
  expect_invalid(with(static_json(), "id", "has space"), "'id' may contain only");
  expect_invalid(with(static_json(), "c_frac", 1.5), "'c_frac' must lie in [0, 1]");
  expect_invalid(with(static_json(), "c_frac", 1.0), "requires 'boundary'");
  expect_invalid(with(static_json(), "boundary", true), "requires 'c_frac' = 1");
  expect_invalid(with(static_json(), "n_ladder", {200, 100}), "strictly increasing");
  expect_invalid(with(static_json(), "n_ladder", json::array()), "'n_ladder' must be nonempty");
  expect_invalid(with(static_json(), "n_ladder", {1}), ">= 2");
  expect_invalid(with(static_json(), "t_macro", {0.1, 0.05}), "'t_macro' must be strictly increasing");
  expect_invalid(with(static_json(), "test_functions", {"g7"}), "unknown test function 'g7'");
  expect_invalid(with(static_json(), "profile", "wavy"), "unknown profile 'wavy'");
  expect_invalid(with(static_json(), "profile", 3), "config.profile");
  expect_invalid(with(static_json(), "initial", "random"), "'initial' must be");
  expect_invalid(with(static_json(), "event_cap", 0), "'event_cap' must be positive");
  expect_invalid(with(with(static_json(), "regime", "log"), "beta", 1.5), "LogEnergy requires 0 < beta < 1");
  expect_invalid(with(static_json(), "beta", 0.3), "Beta0 requires beta == 0");
  expect_invalid(with(with(static_json(), "regime", "sublog"), "u_id", "linear"), "u' -> 0");
  expect_invalid(with(hydro_json(), "hydro", {{"mode", "turbulent"}}), "hydro.mode");
  expect_invalid(with(hydro_json(), "hydro", {{"speed", 1}}), "hydro: unknown key 'speed'");
  expect_invalid(with(hydro_json(), "hydro", {{"mode", "stationarity"}, {"falsify", true}}), "falsify applies only");
  expect_invalid(with(with(hydro_json(), "hydro", {{"mode", "martingale"}}), "n_ladder", {40}), "at least two N");
  expect_invalid(with(with(hydro_json(), "hydro", {{"mode", "stationarity"}}), "replicas", 1), "needs 'replicas' >= 2");
  expect_invalid(with(hydro_json(), "t_macro", {0.0}), "positive final 't_macro'");
  expect_invalid(with(sample_json(), "t_macro", json::array()), "sample needs 't_macro'");
  json no_kind = static_json();
  no_kind.erase("kind");
  expect_invalid(no_kind, "missing required key 'kind'");
  json pde = {{"kind", "pde"}, {"id", "p"}, {"t_macro", {0.05}}, {"pde", {{"refine_levels", 2}}}};
  expect_invalid(pde, "refine_levels");
  json blocks = {{"kind", "blocks"}, {"id", "b"}, {"n_ladder", {1000}}, {"blocks", {{"half_widths", {0}}}}};
  expect_invalid(blocks, "blocks.half_widths");
  json moments = {{"kind", "moments"}, {"id", "m"}, {"n_ladder", {500, 1000}}, {"moments", {{"boundary_ladder", {100}}}}};
  expect_invalid(moments, "boundary_ladder");
}

TEST_CASE("config files") {
  const auto dir = scratch("config_files");
  fs::create_directories(dir / "tables");
  {
    std::ofstream(dir / "tables" / "rho.txt") << "0.5 0\n1 0.1\n2 0\n";
    json j = hydro_json();
    j["profile"] = {{"table", "tables/rho.txt"}};
    std::ofstream(dir / "run.json") << j.dump(2);
    std::ofstream(dir / "broken.json") << "{\"kind\": ";
  }
  const auto config = ExperimentConfig::load(dir / "run.json");
  CHECK(config.profile == "table:" + (dir / "tables" / "rho.txt").lexically_normal().string());
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "broken.json"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "missing.json"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("every acceptance preset loads") {
  const fs::path presets = fs::path(ZRP_SOURCE_DIR) / "configs" / "acceptance";
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(presets)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const auto config = ExperimentConfig::load(entry.path());
    CHECK(config.id == entry.path().stem().string());
    ++count;
  }
  CHECK(count >= 29);
}

TEST_CASE("result table ordering, merging and CSV") {
  ResultRow a{"e", "Beta0", 200, 0.1, "density:g1", 1.0, 0.1, 10, 1.1, 0.1, ""};
  ResultRow b{"e", "Beta0", 100, 0.1, "density:g1", 2.0, 0.1, 10, 1.1, 0.9, ""};
  ResultRow c{"e", "Beta0", 100, std::nan(""), "events", 7.0, std::nan(""), 10, std::nan(""), std::nan(""), ""};
  ResultTable one, two;
  one.add(a);
  one.add(b);
  one.add(c);
  two.add(c);
  two.add(b);
  two.add(a);
  std::ostringstream s1, s2;
  one.write_csv(s1);
  two.write_csv(s2);
  CHECK(s1.str() == s2.str());
  CHECK(s1.str().starts_with(std::string(kCsvHeader) + "\n"));
  CHECK(s1.str().find("e,Beta0,100,nan,events,7,nan,10,nan,nan,") != std::string::npos);

  ResultTable left, right, merged_lr, merged_rl;
  left.add(a);
  right.add(b);
  CHECK(left.add_check(a, "trend:g1", true, 0.1, 0.2));
  CHECK_FALSE(right.add_check(b, "final:g1", false, 0.9, 0.2));
  merged_lr.merge(left);
  merged_lr.merge(right);
  merged_rl.merge(right);
  merged_rl.merge(left);
  std::ostringstream m1, m2;
  merged_lr.write_csv(m1);
  merged_rl.write_csv(m2);
  CHECK(m1.str() == m2.str());
  CHECK(merged_lr.checks().size() == 2);
  REQUIRE(merged_lr.failed_checks().size() == 1);
  CHECK(merged_lr.failed_checks()[0].observable == "check:final:g1");
  CHECK(merged_lr.failed_checks()[0].flag == "FAIL");
  CHECK_FALSE(merged_lr.all_passed());

  ResultRow bad = a;
  bad.observable = "x,y";
  CHECK_THROWS_AS(one.add(bad), std::invalid_argument);
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  for (double x : {1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("static run: deterministic, worker-independent outputs and a manifest") {
  const auto config = ExperimentConfig::from_json(static_json());
  const auto d1 = scratch("static_1"), d2 = scratch("static_2"), d3 = scratch("static_3");
  REQUIRE(run(config, d1, 1) >= 0);
  REQUIRE(run(config, d2, 1) >= 0);
  REQUIRE(run(config, d3, 2) >= 0);
  const auto csv = slurp(d1 / "results.csv");
  CHECK(csv == slurp(d2 / "results.csv"));
  CHECK(csv == slurp(d3 / "results.csv"));
  CHECK(csv.starts_with(std::string(kCsvHeader)));
  CHECK(csv.find("check:trend:g1") != std::string::npos);

  const json manifest = json::parse(slurp(d1 / "manifest.json"));
  CHECK(manifest["id"] == "unit_static");
  CHECK(manifest["config_hash"] == config.hash());
  CHECK(manifest["seed"] == 5);
  CHECK(manifest.contains("version"));
  CHECK(manifest.contains("compiler"));
  CHECK(manifest["files"].size() >= 1);
  for (const auto& dir : {d1, d2, d3}) fs::remove_all(dir);
}

TEST_CASE("a single replica marks standard errors as NaN without failing") {
  auto j = static_json();
  j["replicas"] = 1;
  const auto out = run_experiment(ExperimentConfig::from_json(j), 1);
  std::size_t pairings = 0;
  for (const auto& row : out.table.rows()) {
    if (!row.observable.starts_with("pairing:")) continue;
    ++pairings;
    CHECK(row.replicas == 1);
    CHECK(std::isnan(row.stderr_value));
    CHECK(std::isfinite(row.value));
  }
  CHECK(pairings == 6);
}

TEST_CASE("sample run writes a parseable, mass-conserving trajectory") {
  const auto config = ExperimentConfig::from_json(sample_json());
  const auto dir = scratch("sample");
  CHECK(run(config, dir, 1) == 0);
  std::ifstream in(dir / "trajectory.txt");
  const auto traj = read_trajectory(in);
  CHECK(traj.n == 100);
  REQUIRE(traj.snapshots.size() == 2);
  for (const auto& snap : traj.snapshots) CHECK(snap.config.total() == traj.initial.total());
  const auto csv = slurp(dir / "results.csv");
  CHECK(csv.find("check:round_trip,1,") != std::string::npos);
  CHECK(csv.find("FAIL") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("small hydro run is reproducible across worker counts") {
  const auto config = ExperimentConfig::from_json(hydro_json());
  const auto a = run_experiment(config, 1);
  const auto b = run_experiment(config, 2);
  std::ostringstream sa, sb;
  a.table.write_csv(sa);
  b.table.write_csv(sb);
  CHECK(sa.str() == sb.str());
  bool conservation = false;
  for (const auto& row : a.table.checks())
    if (row.observable == "check:conservation") conservation = row.passed();
  CHECK(conservation);
}

TEST_CASE("command-line exit codes") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "ok.json") << sample_json().dump();
  auto bad = sample_json();
  bad["replicas"] = 0;
  std::ofstream(dir / "bad.json") << bad.dump();
  const std::string exe = ZRPKIT_PATH;
  auto status = [&](const std::string& args) {
    const int raw = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("sample --config " + (dir / "ok.json").string() + " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "results.csv"));
  CHECK(status("sample --config " + (dir / "bad.json").string()) == 2);
  CHECK(status("static --config " + (dir / "ok.json").string()) == 2);
  CHECK(status("sample --config " + (dir / "missing.json").string()) != 0);
  CHECK(status("") != 0);
  fs::remove_all(dir);
}
