#include "robinmc/runner.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace robinmc;
namespace fs = std::filesystem;

namespace {

const char* kDiskConfig = R"({
  "problem": {"dim": 2, "horizon": 0.3, "A": [0.5], "sigma_rob": 0.5, "nu": 0.5,
              "f": "x1 - 1", "psi": 0.25, "h": "x2^2"},
  "domain": {"shape": "disk", "center": [0, 0], "radius": 1, "robin_arcs": [[0, 3.141592653589793]],
             "cavity": [[0, 0.3, -0.2, 0.15]], "margin": 0.05},
  "solver": {"dt": 0.002, "n_paths": 300, "master_seed": 42, "scheme": "halfspace",
             "fd": {"n_space": 10, "n_angle": 40, "n_time": 30}},
  "task": {"name": "solve-mc", "grid": {"s": [0, 0.1], "x": [[0, 0.5], [-0.4, -0.2], [0.2, 0.6]]}}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("robinmc_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig disk_config(const fs::path& out) {
  RunConfig c = parse_config_text(kDiskConfig);
  c.output = OutputSection{out.string()};
  return c;
}

std::string cli() { return ROBINMC_CLI_PATH; }

int shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

FieldRow row(double s, double x, double mean, double se = 0.0) {
  FieldRow r;
  r.s = s;
  r.x = make_vec({x});
  r.mean = mean;
  r.std_error = se;
  return r;
}

}  // namespace

TEST(Config, RoundTripsThroughSerialisation) {
  const json in = json::parse(kDiskConfig);
  const RunConfig c = parse_config(in);
  EXPECT_EQ(json(c), in);
  EXPECT_EQ(config_hash(c), config_hash(parse_config(json(c))));
}

TEST(Config, UnknownKeyRejected) {
  json j = json::parse(kDiskConfig);
  j["solver"]["n_pathz"] = 10;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = json::parse(kDiskConfig);
  j["extra"] = 1;
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, OverridesApply) {
  RunConfig c = parse_config_text(kDiskConfig);
  Overrides o;
  o.seed = 7;
  o.paths = 11;
  o.dt = 0.01;
  o.task = "solve-fd";
  apply_overrides(c, o);
  EXPECT_EQ(*c.solver.master_seed, 7u);
  EXPECT_EQ(*c.solver.n_paths, 11);
  EXPECT_EQ(*c.solver.dt, 0.01);
  EXPECT_EQ(c.task.name, "solve-fd");
}

TEST(Run, ZeroDataWritesZeroField) {
  const fs::path dir = scratch("zero");
  json j = json::parse(kDiskConfig);
  j["problem"].erase("f");
  j["problem"].erase("psi");
  j["problem"].erase("h");
  RunConfig c = parse_config(j);
  c.output = OutputSection{dir.string()};
  const RunOutcome r = run(c, {}, 1);
  ASSERT_EQ(r.exit_code, 0) << r.error.dump();
  std::ifstream in(dir / "field_mc.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "s,x1,x2,mean,std_error,term1,term2,term3,n_paths,dt,seed");
  int n = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    EXPECT_EQ(cells[3], "0");
    EXPECT_EQ(cells[4], "0");
    ++n;
  }
  EXPECT_EQ(n, 6);
  const json m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["seed"], 42);
  fs::remove_all(dir);
}

TEST(Run, ValidationFailureWritesNothing) {
  const fs::path dir = scratch("invalid");
  json j = json::parse(kDiskConfig);
  j["problem"]["A"] = json::array({"x1^2"});
  RunConfig c = parse_config(j);
  c.output = OutputSection{(dir / "out").string()};
  const RunOutcome r = run(c, {}, 1);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST(Run, RuntimeFailureStillWritesManifest) {
  // Probe target at the Robin/Dirichlet junction (1, 0) is refused at run time.
  const fs::path dir = scratch("runtime");
  json j = json::parse(kDiskConfig);
  j["task"] = {{"name", "probe"}, {"probe", {{"s", 0.0}, {"target", {1.0, 0.0}}, {"approach", {{0.9, 0.0}}}}}};
  RunConfig c = parse_config(j);
  c.output = OutputSection{dir.string()};
  const RunOutcome r = run(c, {}, 1);
  EXPECT_EQ(r.exit_code, 1);
  const json m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "failed");
  EXPECT_TRUE(m.contains("error"));
  fs::remove_all(dir);
}

TEST(Run, ArtifactsIdenticalAcrossWorkerCounts) {
  const fs::path a = scratch("w1"), b = scratch("w4");
  ASSERT_EQ(run(disk_config(a), {}, 1).exit_code, 0);
  ASSERT_EQ(run(disk_config(b), {}, 4).exit_code, 0);
  const std::string fa = slurp(a / "field_mc.csv");
  EXPECT_FALSE(fa.empty());
  EXPECT_EQ(fa, slurp(b / "field_mc.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Compare, IdenticalFieldsHaveZeroGap) {
  const std::vector<FieldRow> f{row(0, 0.1, 1.0, 0.01), row(0, 0.5, -2.0, 0.02)};
  const CompareReport r = compare(f, f);
  EXPECT_EQ(r.max_abs_gap, 0.0);
  EXPECT_EQ(r.fraction_within, 1.0);
}

TEST(Compare, ZeroFieldsAndToleranceRule) {
  const std::vector<FieldRow> z{row(0, 0.1, 0.0), row(0, 0.5, 0.0)};
  EXPECT_EQ(compare(z, z).max_abs_gap, 0.0);
  const std::vector<FieldRow> fd{row(0, 0.1, 1.0), row(0, 0.5, 1.0)};
  const std::vector<FieldRow> mc{row(0, 0.1, 1.02, 0.005), row(0, 0.5, 1.03, 0.005)};
  const CompareReport r = compare(mc, fd, {0.01, 0.0});
  EXPECT_TRUE(r.within[0]);  // 0.02 <= 3 * 0.005 + 0.01
  EXPECT_FALSE(r.within[1]);
  EXPECT_DOUBLE_EQ(r.fraction_within, 0.5);
}

TEST(Compare, GridMismatchRejected) {
  const std::vector<FieldRow> a{row(0, 0.1, 1.0)}, b{row(0, 0.2, 1.0)}, c{row(0, 0.1, 1.0), row(0, 0.2, 1.0)};
  EXPECT_THROW(compare(a, b), ConfigError);
  EXPECT_THROW(compare(a, c), ConfigError);
}

TEST(Binary, MalformedConfigExitsTwoWithoutArtifacts) {
  const fs::path dir = scratch("bin_bad");
  {
    std::ofstream(dir / "bad.json") << "{\"problem\": {";
  }
  const std::string cmd = cli() + " --config " + (dir / "bad.json").string() + " --out-dir " + (dir / "out").string() +
                          " 2>" + (dir / "err.txt").string() + " >/dev/null";
  EXPECT_EQ(shell(cmd), 2);
  EXPECT_FALSE(fs::exists(dir / "out"));
  const json err = json::parse(slurp(dir / "err.txt"));
  EXPECT_EQ(err["exit_code"], 2);
  fs::remove_all(dir);
}

TEST(Binary, YamlConfigRunsAndOverridesWin) {
  const fs::path dir = scratch("bin_yaml");
  {
    std::ofstream y(dir / "c.yaml");
    y << "problem:\n  dim: 1\n  horizon: 0.5\n  A: [0.5]\n  nu: 0.5\n  f: 1\n  h: \"x1*(1-x1)\"\n"
         "domain:\n  shape: interval\n  interval: [0, 1]\n  left: robin\n  right: dirichlet\n"
         "solver:\n  dt: 0.01\n  n_paths: 50\n  fd: {n_space: 40, n_time: 40}\n"
         "task:\n  name: solve-mc\n  grid: {s: [0], x: [[0.25], [0.5]]}\n";
  }
  const std::string base = cli() + " --config " + (dir / "c.yaml").string() + " --out-dir " + (dir / "out").string();
  ASSERT_EQ(shell(base + " --task solve-fd --seed 9 >/dev/null 2>&1"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "field_fd.csv"));
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["task"], "solve-fd");
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["problem"]["h"], "x1*(1-x1)");
  fs::remove_all(dir);
}
