#include "helpers.hpp"

#include <doctest.h>

#include "ppgm/experiment.hpp"
#include "ppgm/parallel.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ppgm;
namespace fs = std::filesystem;

namespace {

const std::string kSmall = R"({
  "name": "small",
  "problem": {"family": "linear", "horizon": 1.0, "initial_state": [1.0],
              "a": -1.0, "b": 1.0, "sigma": 0.1, "q": 1.0, "r": 1.0, "h": 1.0},
  "grid": {"radius": 2.0, "dx": 0.1, "dt": 5e-3},
  "iteration": {"tau": "auto", "stop_tol": 1e-8, "max_iters": 40, "seed": 7}
})";

std::string config_path(const std::string& name) { return std::string(PPGM_SOURCE_DIR) + "/configs/" + name + ".json"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& tag) {
  const auto d = fs::temp_directory_path() / ("ppgm_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("config round trip is stable") {
  for (const char* name : {"lq_dissipative", "lq_box", "lq_sparse", "entropy_two_actions", "affine_sine_2d"}) {
    const auto c = load_config(config_path(name));
    const auto once = config_to_json(c);
    const auto twice = config_to_json(parse_config(once));
    CHECK(once == twice);
    CHECK(config_hash(c) == config_hash(parse_config(once)));
  }
}

TEST_CASE("unknown keys and bad values name their path") {
  auto expect = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text);
      FAIL("expected InputError for ", text);
    } catch (const InputError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  expect(R"({"problem": {"cost": {"type": "box", "lowr": [0]}}})", "/problem/cost/lowr");
  expect(R"({"grid": {"radius": 1, "spacing": 0.1}})", "/grid/spacing");
  expect(R"({"bogus": 1})", "/bogus");
  expect(R"({"grid": {"dx": "wide"}})", "/grid/dx");
  expect("{not json", "config");
}

TEST_CASE("auto step size and explicit step size") {
  auto c = parse_config(kSmall);
  CHECK(c.iteration.tau_auto);
  const auto e = build_experiment(c);
  CHECK(e.tau == doctest::Approx(0.9 * max_step(e.constants)));
  auto c2 = parse_config(R"({"iteration": {"tau": 0.25}})");
  CHECK_FALSE(c2.iteration.tau_auto);
  CHECK(c2.iteration.tau == 0.25);
  auto c3 = parse_config(R"({"iteration": {"stop_tol": "inf"}})");
  CHECK(std::isinf(c3.iteration.stop_tol));
  CHECK(std::isinf(parse_config(config_to_json(c3)).iteration.stop_tol));
}

TEST_CASE("hash ignores the output directory but nothing else") {
  auto a = parse_config(kSmall);
  auto b = a;
  b.outputs.directory = "/somewhere/else";
  CHECK(config_hash(a) == config_hash(b));
  b.iteration.seed = 8;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("environment overrides") {
  auto c = parse_config(kSmall);
  ::setenv("PPGM_OUTPUT_DIR", "/tmp/ppgm_env_dir", 1);
  ::setenv("PPGM_THREADS", "2", 1);
  apply_env_overrides(c);
  CHECK(c.outputs.directory == "/tmp/ppgm_env_dir");
  CHECK(thread_count() == 2);
  ::setenv("PPGM_THREADS", "zero", 1);
  CHECK_THROWS_AS(apply_env_overrides(c), InputError);
  ::unsetenv("PPGM_OUTPUT_DIR");
  ::unsetenv("PPGM_THREADS");
  set_thread_count(1);
}

TEST_CASE("check verdicts of the shipped configs") {
  auto verdict = [](const std::string& name) { return check_experiment(build_experiment(load_config(config_path(name)))); };
  // not certifiable under unit calibration (see README)
  CHECK_FALSE(verdict("lq_dissipative").certified());
  CHECK_FALSE(verdict("lq_unstable").certified());
  const auto weak = verdict("lq_weak_control");
  CHECK(weak.certified());
  CHECK(weak.predicted_c < 1.0);
  try {
    build_experiment(load_config(config_path("invalid_no_convexity")));
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("(H.1)(3)") != std::string::npos);
  }
}

TEST_CASE("runs are byte-identical and carry their provenance") {
  auto c = parse_config(kSmall);
  const auto d1 = fresh_dir("run1"), d2 = fresh_dir("run2"), d3 = fresh_dir("run3");
  c.outputs.directory = d1.string();
  const auto a1 = run_experiment(build_experiment(c));
  c.outputs.directory = d2.string();
  set_thread_count(3);
  run_experiment(build_experiment(c));
  set_thread_count(1);
  for (const char* f : {"iterations.csv", "theory.txt", "policy.csv", "policy.bin", "plot_convergence.dat"}) {
    REQUIRE(fs::exists(d1 / f));
    CHECK_MESSAGE(slurp(d1 / f) == slurp(d2 / f), f);
  }
  const auto csv = slurp(d1 / "iterations.csv");
  CHECK(csv.find("config_hash=" + config_hash(c)) != std::string::npos);
  CHECK(csv.find("seed=7") != std::string::npos);
  CHECK(csv.find("verdict=") != std::string::npos);

  // rebuild the experiment from the config embedded in the header
  std::string embedded;
  for (const auto& l : lines_of(csv))
    if (l.rfind("# config=", 0) == 0) embedded = l.substr(9);
  REQUIRE_FALSE(embedded.empty());
  auto again = parse_config(embedded);
  again.outputs.directory = d3.string();
  run_experiment(build_experiment(again));
  CHECK(slurp(d3 / "iterations.csv") == csv);

  // snapshot reload
  const auto snap = read_policy_snapshot((d1 / "policy.bin").string());
  CHECK(snap == a1.policy.values());
  const auto theory = slurp(d1 / "theory.txt");
  CHECK(theory.find("predicted_c=") != std::string::npos);
  CHECK(theory.find("run_converged=") != std::string::npos);
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST_CASE("injected noise level is logged on every row") {
  auto c = parse_config(kSmall);
  c.iteration.perturbation = 1e-3;
  c.iteration.max_iters = 8;
  const auto d = fresh_dir("noise");
  c.outputs.directory = d.string();
  const auto art = run_experiment(build_experiment(c));
  REQUIRE(art.report.rows.size() == 8);
  int rows = 0;
  for (const auto& l : lines_of(slurp(d / "iterations.csv"))) {
    if (l.empty() || l[0] == '#' || l[0] == 'm') continue;
    ++rows;
    // epsilon_injected is the 10th column
    std::istringstream is(l);
    std::string cell;
    for (int i = 0; i < 10; ++i) std::getline(is, cell, ',');
    CHECK(std::stod(cell) == 1e-3);
  }
  CHECK(rows == 8);
  fs::remove_all(d);
}

TEST_CASE("cost column and convergence plot data") {
  auto c = parse_config(kSmall);
  c.iteration.cost_paths = 200;
  c.iteration.max_iters = 4;
  const auto d = fresh_dir("cost");
  c.outputs.directory = d.string();
  const auto art = run_experiment(build_experiment(c));
  for (const auto& r : art.report.rows) {
    CHECK(std::isfinite(r.cost));
    CHECK(r.cost_stderr > 0.0);
  }
  const auto plot = lines_of(slurp(d / "plot_convergence.dat"));
  int data = 0;
  for (const auto& l : plot)
    if (!l.empty() && l[0] != '#') ++data;
  CHECK(data == 4);
  fs::remove_all(d);
}

TEST_CASE("selftest passes quickly and a corrupted fixture is named") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ok = run_selftest();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);
  for (const auto& s : ok) CHECK_MESSAGE(s.passed, s.name, ": ", s.detail);
  SelftestOptions broken;
  broken.lambert.max_iterations = 0;
  bool named = false;
  for (const auto& s : run_selftest(broken))
    if (!s.passed && s.name == "lambert_w") named = true;
  CHECK(named);
}
