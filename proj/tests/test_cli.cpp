#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spp/config.hpp"
#include "spp/experiment.hpp"

using namespace spp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spp_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

ExperimentConfig quadratic_config(double sigma) {
  ExperimentConfig c;
  c.topology.kind = "er";
  c.topology.n = 6;
  c.topology.edge_prob = 0.4;
  c.problem.kind = "quadratic";
  c.problem.dim = 4;
  c.problem.sigma = sigma;
  c.schedule.gamma0 = 0.3;
  c.run.T = 400;
  c.run.seeds = {0, 1};
  return c;
}

int shell(const std::string& cmd, std::string* out = nullptr) {
  FILE* f = popen(cmd.c_str(), "r");
  if (!f) return -1;
  std::string text;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  const int status = pclose(f);
  if (out) *out = text;
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, DefaultsRoundTripCanonically) {
  const ExperimentConfig c;
  const std::string text = serialize(c);
  const ExperimentConfig back = parse_config_string(text);
  EXPECT_TRUE(back == c);
  EXPECT_EQ(serialize(back), text);
}

TEST(Config, HandWrittenFileRoundTrip) {
  const std::string text = R"(# comment line
[run]
seeds = 4, 5 ,6
T = 77   ; trailing comment

[topology]
kind = edges
n = 3
edges = 0>1, 1>2
[schedule]
gamma0 = 0.1
decay_factor = 0.8
decay_every = 300
rescale_by_npi = yes
)";
  const ExperimentConfig c = parse_config_string(text);
  EXPECT_EQ(c.run.seeds, (std::vector<std::uint64_t>{4, 5, 6}));
  EXPECT_EQ(c.run.T, 77);
  EXPECT_EQ(c.topology.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_TRUE(c.schedule.rescale_by_npi);
  const std::string canon = serialize(c);
  EXPECT_TRUE(parse_config_string(canon) == c);
  EXPECT_EQ(serialize(parse_config_string(canon)), canon);
}

TEST(Config, RandomizedRoundTrip) {
  Stream rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    ExperimentConfig c;
    c.topology.edge_prob = u(rng);
    c.problem.sigma = u(rng) * 10;
    c.schedule.gamma0 = u(rng) / 3;
    c.mixing.tol = std::pow(10.0, -12 * u(rng));
    c.run.seeds = {rng(), rng()};
    const std::string text = serialize(c);
    EXPECT_TRUE(parse_config_string(text) == c);
    EXPECT_EQ(serialize(parse_config_string(text)), text);
  }
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_config_string(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("[topology]\nn = abc\n"), 2);
  EXPECT_EQ(line_of("[nope]\n"), 1);
  EXPECT_EQ(line_of("\n\n[run]\nT = 5\nT = 6\n"), 5);
  EXPECT_EQ(line_of("n = 3\n"), 1);
  EXPECT_EQ(line_of("[topology]\nkind = star\n"), 2);
  EXPECT_EQ(line_of("[topology]\nedges = 0-1\n"), 2);
  EXPECT_EQ(line_of("[run]\nfoo = 1\n"), 2);
  EXPECT_EQ(line_of("[run\n"), 1);
}

TEST(Validate, DsgtRingPasses) {
  ExperimentConfig c;
  c.topology.kind = "ring";
  c.topology.bidirectional = true;
  c.mixing.scheme = "dsgt";
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(c, out), 0);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_NEAR(j["pi"].get<double>(), 1.0 / 8, 1e-12);
}

TEST(Validate, DisconnectedGraphNamesAssumptionOne) {
  ExperimentConfig c;
  c.topology.kind = "edges";
  c.topology.n = 3;
  c.topology.edges = {{0, 1}};
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(c, out), 1);
  const auto j = nlohmann::json::parse(out.str());
  bool named = false;
  for (const auto& chk : j["checks"])
    if (chk["check"] == "assumption1_common_root" && !chk["passed"].get<bool>()) named = true;
  EXPECT_TRUE(named);
}

TEST(Validate, SparseErdosRenyiPasses) {
  ExperimentConfig c;
  c.topology.kind = "er";
  c.topology.n = 8;
  c.topology.edge_prob = 0.1;
  c.topology.seed = 7;
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(c, out), 0);
  EXPECT_GT(nlohmann::json::parse(out.str())["pi"].get<double>(), 0.0);
}

TEST(Validate, ConstructionFailureReported) {
  ExperimentConfig c;
  c.topology.kind = "ring";
  c.mixing.scheme = "dsgt";  // directed ring is not undirected
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(c, out), 1);
  EXPECT_NE(out.str().find("construction"), std::string::npos);
}

TEST(Run, NoiselessQuadraticReachesStationarity) {
  ExperimentConfig c = quadratic_config(0.0);
  c.run.T = 3000;
  const auto r = run_experiment(c);
  EXPECT_LT(r.aggregate.back().grad_norm_sq, 1e-16);
  ASSERT_TRUE(r.spectral);
  EXPECT_TRUE(std::isfinite(r.bound));
}

TEST(Run, OutputsAreCompleteAndReproducible) {
  const ExperimentConfig c = quadratic_config(1.0);
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  run_experiment(c, a);
  run_experiment(c, b);
  for (const char* f : {"seed_0.csv", "seed_1.csv", "aggregate.csv", "report.json", "config.ini",
                        "VERSION", "seed_0.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_TRUE(parse_config_string(slurp(a / "config.ini")) == c);
  const auto rep = nlohmann::json::parse(slurp(a / "report.json"));
  EXPECT_TRUE(rep.contains("spectral"));
  EXPECT_TRUE(rep.contains("theory"));
  EXPECT_EQ(rep["seeds"].size(), 2u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, LogisticThreeSeedsPlusAggregate) {
  ExperimentConfig c;
  c.topology.kind = "er";
  c.topology.n = 5;
  c.problem.kind = "logistic";
  c.problem.dim = 8;
  c.problem.samples = 40;
  c.problem.fstar_iterations = 50;
  c.schedule = {0.1, 0.8, 300, true};
  c.run.T = 20;
  c.run.seeds = {0, 1, 2};
  const fs::path d = scratch("logistic");
  const auto r = run_experiment(c, d);
  EXPECT_EQ(r.traces.size(), 3u);
  EXPECT_TRUE(fs::exists(d / "seed_2.csv"));
  EXPECT_TRUE(fs::exists(d / "aggregate.csv"));
  EXPECT_FALSE(r.steady_state_mse);
  fs::remove_all(d);
}

TEST(Run, DivergenceNamesSeed) {
  ExperimentConfig c = quadratic_config(0.0);
  c.schedule.gamma0 = 1e6;
  c.run.seeds = {42};
  try {
    run_experiment(c);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("seed 42"), std::string::npos);
  }
}

TEST(Sweep, GammaAndTopologyAxes) {
  ExperimentConfig c = quadratic_config(0.5);
  c.run.T = 100;
  const fs::path d = scratch("sweep");
  const auto cells = run_sweep(c, "gamma", {"0.1", "0.05"}, d);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_TRUE(cells[0].ok && cells[1].ok);
  EXPECT_TRUE(fs::exists(d / "gamma=0.1" / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(d / "gamma=0.05" / "aggregate.csv"));
  const std::string summary = slurp(d / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "axis,value,status,time_avg_grad_norm_sq,steady_state_mse,bound_rhs,message");
  const auto topo = run_sweep(c, "topology", {"er", "msr"});
  EXPECT_TRUE(topo[0].ok && topo[1].ok);
  fs::remove_all(d);
}

TEST(Sweep, FailingCellRecordedAndSweepContinues) {
  ExperimentConfig c = quadratic_config(0.5);
  c.run.T = 50;
  c.mixing.scheme = "dsgt";
  c.topology.kind = "ring";
  c.topology.bidirectional = true;
  const auto cells = run_sweep(c, "topology", {"tree", "ring"});
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_FALSE(cells[0].ok);
  EXPECT_FALSE(cells[0].message.empty());
  EXPECT_TRUE(cells[1].ok);
  EXPECT_NE(sweep_csv("topology", cells).find("failed"), std::string::npos);
}

TEST(Sweep, UnknownAxisRejected) {
  EXPECT_THROW(with_axis(ExperimentConfig{}, "batch", "3"), InputError);
}

TEST(OutputRoot, EnvironmentPrefixesRelativePaths) {
  setenv(kOutputRootEnv, "/tmp/root", 1);
  EXPECT_EQ(resolve_output("x/y"), fs::path("/tmp/root/x/y"));
  EXPECT_EQ(resolve_output("/abs"), fs::path("/abs"));
  unsetenv(kOutputRootEnv);
  EXPECT_EQ(resolve_output("x"), fs::path("x"));
}

TEST(Binary, EndToEnd) {
  const std::string exe = SPP_CLI_PATH;
  const fs::path d = scratch("binary");
  fs::create_directories(d);
  std::string out;
  ASSERT_EQ(shell(exe + " graph gen --topology ring --n 4 --seed 1 --out " + (d / "g.txt").string()), 0);
  EXPECT_EQ(slurp(d / "g.txt"), "4\n0 1\n1 2\n2 3\n3 0\n");
  ASSERT_EQ(shell(exe + " mixing --graph " + (d / "g.txt").string() + " --out " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "R.csv"));
  ASSERT_EQ(shell(exe + " constants --pair " + d.string() + " --tol 1e-9", &out), 0);
  EXPECT_NE(out.find("speedup_ratio,"), std::string::npos);
  EXPECT_NE(out.find("N8,"), std::string::npos);

  std::ofstream(d / "bad.ini") << "[topology]\nkind = edges\nn = 3\nedges = 0>1\n";
  EXPECT_EQ(shell(exe + " validate " + (d / "bad.ini").string() + " > /dev/null"), 1);
  std::ofstream(d / "broken.ini") << "[topology]\nn = x\n";
  EXPECT_EQ(shell(exe + " validate " + (d / "broken.ini").string() + " 2>&1", &out), 2);
  EXPECT_NE(out.find("line 2"), std::string::npos);

  std::ofstream(d / "run.ini") << serialize(quadratic_config(0.5));
  ASSERT_EQ(shell("SPP_OUTPUT_ROOT=" + d.string() + " " + exe + " run " + (d / "run.ini").string() +
                  " --T 30 --seed 3 --metrics-every 10 > /dev/null"),
            0);
  const std::string csv = slurp(d / "out" / "seed_3.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + t = 0, 10, 20, 30
  ASSERT_EQ(shell(exe + " sweep " + (d / "run.ini").string() + " --axis n --values 4,6 --T 20 --out " +
                      (d / "sw").string(),
                  &out),
            0);
  EXPECT_NE(out.find("n,4,ok"), std::string::npos);
  EXPECT_NE(out.find("n,6,ok"), std::string::npos);
  fs::remove_all(d);
}

TEST(Binary, ExitCodes) {
  const std::string exe = SPP_CLI_PATH;
  EXPECT_EQ(shell(exe + " --help > /dev/null"), 0);
  EXPECT_EQ(shell(exe + " 2> /dev/null"), 2);
  EXPECT_EQ(shell(exe + " run /nonexistent/config.ini 2> /dev/null"), 2);
  EXPECT_EQ(shell(exe + " graph gen --topology er --n 4 --p 2 2> /dev/null"), 2);
  const fs::path d = scratch("exit_codes");
  fs::create_directories(d);
  ExperimentConfig c = quadratic_config(0.0);
  c.schedule.gamma0 = 1e6;
  c.run.T = 2000;
  std::ofstream(d / "diverge.ini") << serialize(c);
  std::string err;
  EXPECT_EQ(shell(exe + " run " + (d / "diverge.ini").string() + " --out " + (d / "o").string() +
                      " 2>&1 > /dev/null",
                  &err),
            3);
  EXPECT_NE(err.find("seed 0"), std::string::npos) << err;
  fs::remove_all(d);
}
