#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spp/digraph.hpp"
#include "spp/engine.hpp"
#include "spp/errors.hpp"

namespace spp {

struct TopologyConfig {
  std::string kind = "er";  // ring | er | msr | tree | edges
  int n = 8;
  bool bidirectional = false;
  double edge_prob = 0.3;
  int subrings = 2;
  std::uint64_t seed = 1;
  std::vector<Edge> edges;  // kind = edges

  friend bool operator==(const TopologyConfig&, const TopologyConfig&) = default;
};

struct MixingConfig {
  std::string scheme = "pushpull";  // pushpull | dsgt | tree
  double tol = 1e-10;
  int check_horizon = 1000;

  friend bool operator==(const MixingConfig&, const MixingConfig&) = default;
};

struct ProblemConfig {
  std::string kind = "quadratic";  // quadratic | logistic
  int dim = 10;
  std::uint64_t seed = 1;
  // quadratic
  double sigma = 1.0;
  double heterogeneity = 1.0;
  double mu = 0.1;
  double L = 1.0;
  // logistic
  int samples = 400;
  double reg = 0.01;
  double sigma_h = 0.2;
  int fstar_iterations = 500;

  friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

struct RunConfig {
  std::string method = "spp";  // spp | centralized
  int T = 1000;
  int batch = 1;
  std::vector<std::uint64_t> seeds{0};
  int metrics_every = 1;
  int workers = 1;
  int steady_window = 0;  // records averaged for steady-state MSE; 0 = last quarter
  std::string output = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ExperimentConfig {
  TopologyConfig topology;
  MixingConfig mixing;
  ProblemConfig problem;
  StepsizeSchedule schedule;
  RunConfig run;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.topology == b.topology && a.mixing == b.mixing && a.problem == b.problem &&
           a.schedule.gamma0 == b.schedule.gamma0 &&
           a.schedule.decay_factor == b.schedule.decay_factor &&
           a.schedule.decay_every == b.schedule.decay_every &&
           a.schedule.rescale_by_npi == b.schedule.rescale_by_npi && a.run == b.run;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
inline std::string shortest(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& s, int line) {
  T v{};
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ParseError("bad number '" + s + "'", line);
  return v;
}

inline bool parse_bool(const std::string& s, int line) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ParseError("bad boolean '" + s + "'", line);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<Edge> parse_edges(const std::string& s, int line) {
  std::vector<Edge> out;
  for (const std::string& tok : split_list(s)) {
    const auto gt = tok.find('>');
    if (gt == std::string::npos) throw ParseError("edge '" + tok + "' is not of the form j>i", line);
    out.push_back({parse_number<int>(trim(tok.substr(0, gt)), line),
                   parse_number<int>(trim(tok.substr(gt + 1)), line)});
  }
  return out;
}

inline void require_one_of(const std::string& v, std::initializer_list<const char*> allowed,
                           int line) {
  for (const char* a : allowed)
    if (v == a) return;
  throw ParseError("unexpected value '" + v + "'", line);
}

}  // namespace detail

/// Canonical text form: every section and key in fixed order.
inline std::string serialize(const ExperimentConfig& c) {
  using detail::shortest;
  std::ostringstream o;
  const auto& t = c.topology;
  o << "[topology]\n"
    << "kind = " << t.kind << '\n'
    << "n = " << t.n << '\n'
    << "bidirectional = " << (t.bidirectional ? "true" : "false") << '\n'
    << "edge_prob = " << shortest(t.edge_prob) << '\n'
    << "subrings = " << t.subrings << '\n'
    << "seed = " << t.seed << '\n'
    << "edges =";
  for (std::size_t k = 0; k < t.edges.size(); ++k)
    o << (k ? ", " : " ") << t.edges[k].from << '>' << t.edges[k].to;
  o << "\n\n[mixing]\n"
    << "scheme = " << c.mixing.scheme << '\n'
    << "tol = " << shortest(c.mixing.tol) << '\n'
    << "check_horizon = " << c.mixing.check_horizon << '\n';
  const auto& p = c.problem;
  o << "\n[problem]\n"
    << "kind = " << p.kind << '\n'
    << "dim = " << p.dim << '\n'
    << "seed = " << p.seed << '\n'
    << "sigma = " << shortest(p.sigma) << '\n'
    << "heterogeneity = " << shortest(p.heterogeneity) << '\n'
    << "mu = " << shortest(p.mu) << '\n'
    << "L = " << shortest(p.L) << '\n'
    << "samples = " << p.samples << '\n'
    << "reg = " << shortest(p.reg) << '\n'
    << "sigma_h = " << shortest(p.sigma_h) << '\n'
    << "fstar_iterations = " << p.fstar_iterations << '\n';
  const auto& s = c.schedule;
  o << "\n[schedule]\n"
    << "gamma0 = " << shortest(s.gamma0) << '\n'
    << "decay_factor = " << shortest(s.decay_factor) << '\n'
    << "decay_every = " << s.decay_every << '\n'
    << "rescale_by_npi = " << (s.rescale_by_npi ? "true" : "false") << '\n';
  const auto& r = c.run;
  o << "\n[run]\n"
    << "method = " << r.method << '\n'
    << "T = " << r.T << '\n'
    << "batch = " << r.batch << '\n'
    << "seeds =";
  for (std::size_t k = 0; k < r.seeds.size(); ++k) o << (k ? ", " : " ") << r.seeds[k];
  o << '\n'
    << "metrics_every = " << r.metrics_every << '\n'
    << "workers = " << r.workers << '\n'
    << "steady_window = " << r.steady_window << '\n'
    << "output = " << r.output << '\n';
  return o.str();
}

/// INI-style parser. Keys absent from the file keep their defaults; unknown
/// sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in) {
  using namespace detail;
  using Setter = std::function<void(const std::string&, int)>;
  ExperimentConfig c;
  auto& t = c.topology;
  auto& m = c.mixing;
  auto& p = c.problem;
  auto& s = c.schedule;
  auto& r = c.run;
  auto num = [](auto& field) {
    return [&field](const std::string& v, int line) {
      field = parse_number<std::remove_reference_t<decltype(field)>>(v, line);
    };
  };
  auto flag = [](bool& field) {
    return [&field](const std::string& v, int line) { field = parse_bool(v, line); };
  };
  const std::map<std::string, std::map<std::string, Setter>> table{
      {"topology",
       {{"kind",
         [&](const std::string& v, int line) {
           require_one_of(v, {"ring", "er", "msr", "tree", "edges"}, line);
           t.kind = v;
         }},
        {"n", num(t.n)},
        {"bidirectional", flag(t.bidirectional)},
        {"edge_prob", num(t.edge_prob)},
        {"subrings", num(t.subrings)},
        {"seed", num(t.seed)},
        {"edges", [&](const std::string& v, int line) { t.edges = parse_edges(v, line); }}}},
      {"mixing",
       {{"scheme",
         [&](const std::string& v, int line) {
           require_one_of(v, {"pushpull", "dsgt", "tree"}, line);
           m.scheme = v;
         }},
        {"tol", num(m.tol)},
        {"check_horizon", num(m.check_horizon)}}},
      {"problem",
       {{"kind",
         [&](const std::string& v, int line) {
           require_one_of(v, {"quadratic", "logistic"}, line);
           p.kind = v;
         }},
        {"dim", num(p.dim)},
        {"seed", num(p.seed)},
        {"sigma", num(p.sigma)},
        {"heterogeneity", num(p.heterogeneity)},
        {"mu", num(p.mu)},
        {"L", num(p.L)},
        {"samples", num(p.samples)},
        {"reg", num(p.reg)},
        {"sigma_h", num(p.sigma_h)},
        {"fstar_iterations", num(p.fstar_iterations)}}},
      {"schedule",
       {{"gamma0", num(s.gamma0)},
        {"decay_factor", num(s.decay_factor)},
        {"decay_every", num(s.decay_every)},
        {"rescale_by_npi", flag(s.rescale_by_npi)}}},
      {"run",
       {{"method",
         [&](const std::string& v, int line) {
           require_one_of(v, {"spp", "centralized"}, line);
           r.method = v;
         }},
        {"T", num(r.T)},
        {"batch", num(r.batch)},
        {"seeds",
         [&](const std::string& v, int line) {
           r.seeds.clear();
           for (const auto& item : split_list(v))
             r.seeds.push_back(parse_number<std::uint64_t>(item, line));
           if (r.seeds.empty()) throw ParseError("seeds list is empty", line);
         }},
        {"metrics_every", num(r.metrics_every)},
        {"workers", num(r.workers)},
        {"steady_window", num(r.steady_window)},
        {"output", [&](const std::string& v, int) { r.output = v; }}}},
  };

  std::string line;
  std::string section;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      if (!table.count(section)) throw ParseError("unknown section [" + section + "]", lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    if (section.empty()) throw ParseError("key outside of any section", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = table.at(section);
    auto it = keys.find(key);
    if (it == keys.end()) throw ParseError("unknown key '" + key + "' in [" + section + "]", lineno);
    const std::string full = section + "." + key;
    if (seen.count(full)) {
      throw ParseError("duplicate key '" + key + "' (first on line " +
                           std::to_string(seen[full]) + ")",
                       lineno);
    }
    seen[full] = lineno;
    it->second(value, lineno);
  }
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  return parse_config(in);
}

}  // namespace spp
