// Command-line front end: graph generation, mixing matrices, constants,
// validation, runs and sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spp/config.hpp"
#include "spp/experiment.hpp"
#include "spp/linalg.hpp"
#include "spp/mixing.hpp"
#include "spp/series.hpp"

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kRuntime = 3 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> metrics_every;
  std::optional<int> T;
  std::optional<std::string> out;
};

void apply(spp::ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.run.seeds = {*o.seed};
  if (o.tol) c.mixing.tol = *o.tol;
  if (o.metrics_every) c.run.metrics_every = *o.metrics_every;
  if (o.T) c.run.T = *o.T;
  if (o.out) c.run.output = *o.out;
}

spp::MixingPair read_pair(const std::filesystem::path& dir) {
  spp::MixingPair p{spp::read_matrix_csv((dir / "R.csv").string()),
                    spp::read_matrix_csv((dir / "C.csv").string()), false};
  if (std::filesystem::exists(dir / "tree")) p.spanning_tree_mode = true;
  return p;
}

void print_constants(const spp::SpectralReport& r, std::ostream& out) {
  auto row = [&out](const char* name, double v) { out << name << ',' << spp::format_double(v) << '\n'; };
  out << "constant,value\n";
  row("n", r.n);
  row("pi", r.pi);
  if (r.lambda) row("lambda", *r.lambda);
  row("M1", r.M1);
  row("M2", r.M2);
  row("M2_tilde", r.M2_tilde);
  const double ns[] = {r.N1, r.N2, r.N3, r.N4, r.N5, r.N6, r.N7, r.N8};
  for (int k = 0; k < 8; ++k) {
    const std::string name = "N" + std::to_string(k + 1);
    row(name.c_str(), ns[k]);
  }
  row("truncation_T", r.truncation_T);
  row("tail_bound", r.tail_bound);
  row("speedup_ratio", spp::speedup_ratio(r));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic push-pull simulator"};
  app.require_subcommand(1);
  Overrides ov;
  app.add_option("--seed", ov.seed, "Seed (graph gen) or single run seed (run/sweep)");
  app.add_option("--tol", ov.tol, "Series truncation tolerance");
  app.add_option("--metrics-every", ov.metrics_every, "Record metrics every k iterations")
      ->check(CLI::PositiveNumber);

  // graph gen
  auto* graph = app.add_subcommand("graph", "Graph utilities");
  graph->require_subcommand(1);
  auto* gen = graph->add_subcommand("gen", "Generate a topology as an edge list");
  std::string topo = "er";
  int gn = 8;
  double gp = 0.3;
  int gk = 2;
  bool bidir = false;
  std::string gout;
  gen->add_option("--topology", topo, "ring | er | msr | tree")
      ->check(CLI::IsMember({"ring", "er", "msr", "tree"}));
  gen->add_option("--n", gn, "Node count")->required();
  gen->add_option("--p", gp, "Erdos-Renyi edge probability");
  gen->add_option("--k", gk, "Number of sub-rings");
  gen->add_flag("--bidirectional", bidir, "Ring in both directions");
  gen->add_option("--out", gout, "Output file (default stdout)");
  gen->add_option("--seed", ov.seed, "Generator seed");

  // mixing
  auto* mixing = app.add_subcommand("mixing", "Build R and C from an edge list");
  std::string mgraph, mscheme = "pushpull", mout = ".";
  mixing->add_option("--graph", mgraph, "Pull graph edge list")->required()->check(CLI::ExistingFile);
  mixing->add_option("--scheme", mscheme, "pushpull | dsgt | tree")
      ->check(CLI::IsMember({"pushpull", "dsgt", "tree"}));
  mixing->add_option("--out", mout, "Directory for R.csv and C.csv");

  // constants
  auto* constants = app.add_subcommand("constants", "Series constants of a pair");
  std::string cpair;
  bool cjson = false;
  constants->add_option("--pair", cpair, "Directory holding R.csv and C.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  constants->add_option("--tol", ov.tol, "Series truncation tolerance");
  constants->add_flag("--json", cjson, "Print JSON instead of CSV");

  // validate / run / sweep
  std::string config;
  auto* validate = app.add_subcommand("validate", "Check the assumptions of a config's pair");
  validate->add_option("config", config)->required()->check(CLI::ExistingFile);
  auto* run = app.add_subcommand("run", "Run every seed of a config");
  run->add_option("config", config)->required()->check(CLI::ExistingFile);
  run->add_option("--out", ov.out, "Output directory");
  run->add_option("--T", ov.T, "Iterations");
  run->add_option("--seed", ov.seed, "Run a single seed");
  run->add_option("--metrics-every", ov.metrics_every)->check(CLI::PositiveNumber);
  auto* sweep = app.add_subcommand("sweep", "Run a config over values of one axis");
  std::string axis;
  std::vector<std::string> values;
  sweep->add_option("config", config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis)->required()->check(CLI::IsMember({"n", "topology", "gamma"}));
  sweep->add_option("--values", values)->required()->delimiter(',');
  sweep->add_option("--out", ov.out, "Output directory");
  sweep->add_option("--T", ov.T, "Iterations");
  sweep->add_option("--seed", ov.seed, "Run a single seed");
  sweep->add_option("--metrics-every", ov.metrics_every)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      spp::TopologyConfig t;
      t.kind = topo;
      t.n = gn;
      t.edge_prob = gp;
      t.subrings = gk;
      t.bidirectional = bidir;
      t.seed = ov.seed.value_or(1);
      const spp::DirectedGraph g = spp::build_graph(t);
      if (gout.empty()) {
        spp::write_edge_list(std::cout, g);
      } else {
        std::ostringstream o;
        spp::write_edge_list(o, g);
        spp::write_atomic(gout, o.str());
      }
      return kOk;
    }
    if (mixing->parsed()) {
      std::ifstream in(mgraph);
      const spp::DirectedGraph g = spp::read_edge_list(in);
      spp::MixingPair p;
      if (mscheme == "pushpull") {
        p = {spp::pull_matrix(g), spp::push_matrix(g.reversed()), false};
      } else if (mscheme == "dsgt") {
        const spp::Matrix w = spp::doubly_stochastic(g);
        p = {w, w, false};
      } else {
        p = spp::tree_01_matrices(g, g.reversed());
      }
      std::filesystem::create_directories(mout);
      spp::write_atomic(std::filesystem::path(mout) / "R.csv", spp::matrix_to_csv(p.R));
      spp::write_atomic(std::filesystem::path(mout) / "C.csv", spp::matrix_to_csv(p.C));
      if (p.spanning_tree_mode) spp::write_atomic(std::filesystem::path(mout) / "tree", "");
      return kOk;
    }
    if (constants->parsed()) {
      const spp::CertifiedPair cp = spp::certify_pair(read_pair(cpair));
      spp::SeriesOptions so;
      if (ov.tol) so.tol = *ov.tol;
      const spp::SpectralReport r = spp::compute_constants(cp, so);
      if (cjson) {
        std::cout << spp::to_json(r).dump(2) << '\n';
      } else {
        print_constants(r, std::cout);
      }
      return kOk;
    }

    spp::ExperimentConfig c = spp::load_config(config);
    apply(c, ov);
    if (validate->parsed()) return spp::cmd_validate(c, std::cout);
    const std::filesystem::path out = spp::resolve_output(c.run.output);
    if (run->parsed()) {
      const spp::RunResult r = spp::run_experiment(c, out);
      std::cout << nlohmann::json{{"output", out.string()},
                                  {"time_avg_grad_norm_sq", r.time_avg_grad_norm_sq},
                                  {"final_grad_norm_sq", r.aggregate.back().grad_norm_sq}}
                       .dump(2)
                << '\n';
      return kOk;
    }
    if (sweep->parsed()) {
      const auto cells = spp::run_sweep(c, axis, values, out);
      std::cout << spp::sweep_csv(axis, cells);
      for (const auto& cell : cells)
        if (!cell.ok) return kFailed;
      return kOk;
    }
  } catch (const spp::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kUsage;
  } catch (const spp::InputError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const spp::AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << '\n';
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
