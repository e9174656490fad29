// fkl: samples, dumps and experiments for critical FK-Ising loops.
//
// Every run prints one JSON document: the resolved configuration under
// "config" and the output under "result". Exit status: 0 on success, 1 when
// --strict is set and a per-sample invariant fails, 2 on usage errors, 3 on
// runtime errors.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fkloops/continuum_sle.hpp"
#include "fkloops/explorer.hpp"
#include "fkloops/fk_sampler.hpp"
#include "fkloops/lattice_domain.hpp"
#include "fkloops/loop_rep.hpp"
#include "fkloops/observable.hpp"
#include "fkloops/stats_harness.hpp"
#include "json.hpp"

using nlohmann::json;
using namespace fkl;

namespace {

struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  long n = 100;
  int size = 32;
  double aspect = 1;
  double dt = 1e-3;
  double T = 1;
  std::string out;
  std::string domain;
  std::string dump;
  std::string process = "fourpoint";
  int workers = 1;
  int burn_in = 200;
  int thin = 5;
  bool strict = false;

  int height() const { return size; }
  int width() const { return int(std::lround(size * aspect)); }

  json to_json() const {
    json j = {{"command", command}, {"seed", seed},     {"n", n},           {"size", size},
              {"aspect", aspect},   {"dt", dt},         {"T", T},           {"workers", workers},
              {"burn_in", burn_in}, {"thin", thin},     {"strict", strict}, {"width", width()},
              {"height", height()}};
    if (!domain.empty()) j["domain"] = domain;
    if (!dump.empty()) j["dump"] = dump;
    if (command == "sde") j["process"] = process;
    return j;
  }
};

struct Outcome {
  json result;
  long violations = 0;
};

Domain make_domain(const RunConfig& c) {
  if (!c.domain.empty()) return load_domain(c.domain);
  return build_rect_domain(c.width(), c.height());
}

// exterior corners spread evenly along the boundary, in the order a, d, c, b
Domain4 make_domain4(const RunConfig& c) {
  if (c.domain.empty()) return mark_rect_corners(build_rect_domain(c.width(), c.height()), c.width(), c.height());
  Domain d = load_domain(c.domain);
  std::vector<int> corners;
  for (int i = 0; i < d.boundary_length(); ++i)
    if (d.boundary_forced(i)) corners.push_back(i);
  if (corners.size() < 4) throw std::invalid_argument("domain has fewer than four exterior corners");
  std::size_t q = corners.size() / 4;
  return mark_four_points(d, {corners[0], corners[3 * q], corners[2 * q], corners[q]});
}

int tree_root(const Domain& d) {
  for (int i = 0; i < d.boundary_length(); ++i)
    if (d.boundary_forced(i)) return i;
  throw std::invalid_argument("domain has no exterior corner");
}

ChainOptions chain_options(const RunConfig& c) {
  ChainOptions o;
  o.burn_in = c.burn_in;
  o.thin = c.thin;
  return o;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::vector<Sample> draw(const RunConfig& c, const Domain& d) {
  SamplerOptions so;
  so.burn_in = c.burn_in;
  so.thin = c.thin;
  so.algorithm = Algorithm::chayes_machta;
  so.workers = c.workers;
  return sample(d, ModelParams{}, int(c.n), c.seed, so);
}

Outcome run_sample(const RunConfig& c) {
  Domain d = make_domain(c);
  auto g = dual_graph(d);
  Outcome o;
  o.result["samples"] = json::array();
  for (auto& s : draw(c, d)) {
    auto ens = extract_loops(d, s.config);
    bool euler = euler_identity_holds(d, s.config, ens, g);
    if (!euler) ++o.violations;
    o.result["samples"].push_back({{"replica", s.replica},
                                   {"sweep", s.sweep},
                                   {"open", s.config.num_open()},
                                   {"clusters", count_clusters(d, s.config)},
                                   {"loops", ens.loops.size()},
                                   {"euler", euler},
                                   {"config", to_hex(s.config)}});
  }
  return o;
}

Outcome run_loops(const RunConfig& c) {
  Domain d = make_domain(c);
  Outcome o;
  o.result["samples"] = json::array();
  bool first = true;
  for (auto& s : draw(c, d)) {
    auto ens = extract_loops(d, s.config);
    auto rep = validate_dcnil(ens, d);
    if (!rep.ok) ++o.violations;
    auto bl = boundary_loops(ens, d);
    json j = {{"loops", ens.loops.size()}, {"boundary_loops", bl.loops.size()}, {"dcnil", rep.ok}};
    if (!rep.ok) j["dcnil_failure"] = rep.bullet + ": " + rep.detail;
    if (first) {
      j["ensemble"] = json::array();
      for (auto& l : ens.loops) j["ensemble"].push_back(json::parse(loop_to_json(l, d)));
      first = false;
    }
    o.result["samples"].push_back(j);
  }
  return o;
}

Outcome run_tree(const RunConfig& c) {
  Domain d = make_domain(c);
  int root = tree_root(d);
  Outcome o;
  o.result["root"] = root;
  o.result["samples"] = json::array();
  bool first = true;
  for (auto& s : draw(c, d)) {
    auto ens = extract_loops(d, s.config);
    auto t = loops_to_tree(successor_map(ens, d), root);
    bool bij = same_edge_sets(tree_to_loops(t), boundary_loops(ens, d));
    if (!bij) ++o.violations;
    json j = {{"nodes", t.nodes.size()}, {"branching_points", t.branching_points.size()}, {"bijection", bij}};
    if (first) {
      j["tree"] = json::parse(tree_to_json(t));
      first = false;
    }
    o.result["samples"].push_back(j);
  }
  return o;
}

Outcome run_observable(const RunConfig& c) {
  auto m = make_domain4(c);
  auto f = observable_solve(m);
  auto H = build_H(f, m);
  auto ss = check_sub_super(H, m);
  Outcome o;
  json pl = json::object();
  for (int a = 0; a < 4; ++a)
    pl[arc_name(Arc(a))] = {{"mean", H.plateaus[a].mean}, {"spread", H.plateaus[a].spread}};
  o.result = {{"solver_residual", f.residual},
              {"s_hol_residual", s_hol_residual(f, m.domain)},
              {"path_residual", H.path_residual},
              {"plateaus", pl},
              {"beta", H.beta},
              {"sub_super_violations", ss.violations},
              {"min_dual_laplacian", ss.min_dual_laplacian},
              {"max_primal_laplacian", ss.max_primal_laplacian}};
  if (c.domain.empty() && c.width() == c.height()) o.result["beta_closed_form"] = beta_of_v(0.5);
  if (!c.dump.empty()) write_text(c.dump, observable_csv(f, m.domain));
  o.violations += ss.violations;
  return o;
}

Outcome run_martcheck(const RunConfig& c) {
  auto m = make_domain4(c);
  auto r = mart_step_check(m, ModelParams{});
  Outcome o;
  o.result = {{"max_residual_M", r.max_residual_M}, {"max_residual_N", r.max_residual_N},
              {"max_residual_M_plain", r.max_residual_M_plain}, {"prefixes", r.prefixes},
              {"bc_steps", r.bc_steps}};
  if (r.max_residual_M > 1e-10 || r.max_residual_N > 1e-10) ++o.violations;
  return o;
}

Outcome run_sde(const RunConfig& c) {
  SdeParams p;
  p.dt = c.dt;
  p.T = c.T;
  p.seed = c.seed;
  RunningStats endv, endx2;
  std::string csv;
  Outcome o;
  if (c.process == "bessel") {
    for (long i = 0; i < c.n; ++i) {
      auto b = bessel_path(1.0, 1.5, p, std::uint64_t(i));
      endx2.add(b.X.back() * b.X.back());
    }
    o.result = {{"process", "bessel"}, {"x0", 1.0}, {"dim", 1.5},
                {"mean_X_T_sq", endx2.mean}, {"stderr", endx2.stderr_of_mean()}, {"target", 1 + 1.5 * c.T}};
  } else if (c.process == "tree") {
    RunningStats qv;
    for (long i = 0; i < c.n; ++i) {
      auto b = sle_tree_branch(p, 0, 0, std::uint64_t(i));
      qv.add(quadratic_variation_rate(b.times, b.U));
      if (i == 0) csv = driving_csv(b);
    }
    o.result = {{"process", "tree"}, {"qv_rate", qv.mean}, {"stderr", qv.stderr_of_mean()}, {"target", sle::kKappa}};
  } else if (c.process == "fourpoint") {
    double M0 = 0.5, Y0 = 1, W0 = 2;
    long stopped = 0;
    for (long i = 0; i < c.n; ++i) {
      auto f = fourpoint_sde(M0, Y0, W0, p, {}, std::uint64_t(i));
      endv.add(f.M.back());
      stopped += f.stopped;
    }
    o.result = {{"process", "fourpoint"}, {"M0", M0}, {"Y0", Y0}, {"W0", W0}, {"mean_M_T", endv.mean},
                {"stderr", endv.stderr_of_mean()}, {"stopped", stopped}};
  } else {
    throw CLI::ValidationError("--process", "expected bessel, tree or fourpoint");
  }
  if (!c.dump.empty() && !csv.empty()) write_text(c.dump, csv);
  return o;
}

Outcome run_loewner(const RunConfig& c) {
  SdeParams p;
  p.dt = c.dt;
  p.T = c.T;
  p.seed = c.seed;
  RunningStats lam;
  std::string csv;
  for (long i = 0; i < c.n; ++i) {
    auto b = sle_tree_branch(p, 0, 0, std::uint64_t(i));
    auto r = loewner_evolve(b.times, b.U, i == 0 && !c.dump.empty() ? 1 : 0);
    lam.add(r.Lambda.back());
    if (i == 0 && !c.dump.empty()) csv = r.trace_csv();
  }
  if (!csv.empty()) write_text(c.dump, csv);
  Outcome o;
  o.result = {{"mean_Lambda_T", lam.mean}, {"stderr", lam.stderr_of_mean()}, {"paths", lam.n}};
  return o;
}

Outcome from_report(const ExperimentReport& r) { return {r.to_json(), r.violations}; }

Outcome run_crossing(const RunConfig& c) {
  return from_report(arc_pattern_experiment(c.width(), c.height(), c.n, c.seed, chain_options(c)));
}

Outcome run_kappa(const RunConfig& c) {
  KappaOptions o;
  o.chain = chain_options(c);
  return from_report(kappa_experiment(c.width(), c.height(), c.n, c.seed, o));
}

Outcome run_subtree(const RunConfig& c) {
  SubtreeOptions o;
  o.chain = chain_options(c);
  return from_report(subtree_approx_experiment(c.width(), c.height(), c.n, c.seed, o).report);
}

// a geometric ladder about the centre and one annulus on the bottom side
Outcome run_annulus(const RunConfig& c) {
  int w = c.width(), h = c.height();
  sle::cplx mid(0.5 * (w - 1), 0.5 * (h - 1));
  double r = 1.5;
  std::vector<Annulus> an;
  std::vector<double> ratios;
  for (double R = 2 * r; R < 0.5 * std::min(w, h) - 1; R *= 2) {
    an.push_back({mid, r, R});
    ratios.push_back(r / R);
  }
  std::size_t ladder = an.size();
  an.push_back({sle::cplx(0.5 * (w - 1), 0), r, std::min(4 * r, 0.5 * h)});
  auto ex = annulus_experiment(w, h, c.n, c.seed, an, chain_options(c));
  Outcome o = from_report(ex.report);
  if (ladder >= 1) {
    std::vector<std::vector<int>> counts(ladder);
    for (std::size_t k = 0; k < ladder; ++k)
      for (auto& a : ex.counts[k]) counts[k].push_back(a.tree_crossings);
    o.result["tail"] = to_json(crossing_tail_diagnostic(counts, ratios));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fkl: critical FK-Ising loops, exploration trees and their scaling limits"};
  app.set_config("--config", "", "flat key = value file with sections; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;
  app.add_option("--seed", cfg.seed, "base seed");
  app.add_option("--n", cfg.n, "samples or paths")->check(CLI::NonNegativeNumber);
  app.add_option("--size", cfg.size, "domain height in squares")->check(CLI::PositiveNumber);
  app.add_option("--aspect", cfg.aspect, "width / height")->check(CLI::PositiveNumber);
  app.add_option("--dt", cfg.dt, "time step")->check(CLI::PositiveNumber);
  app.add_option("--T", cfg.T, "time horizon")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out, "write the JSON here instead of stdout");
  app.add_option("--workers", cfg.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--domain", cfg.domain, "domain file (fkdomain v1)");
  app.add_option("--burn-in", cfg.burn_in, "sweeps before the first sample")->check(CLI::NonNegativeNumber);
  app.add_option("--thin", cfg.thin, "sweeps between samples")->check(CLI::PositiveNumber);
  app.add_flag("--strict", cfg.strict, "fail on any per-sample invariant violation");

  struct Cmd {
    const char* name;
    const char* help;
    Outcome (*run)(const RunConfig&);
  };
  const Cmd cmds[] = {
      {"sample", "FK configurations (Chayes-Machta)", run_sample},
      {"loops", "loop ensembles with the DCNIL check", run_loops},
      {"tree", "exploration trees with the loop bijection check", run_tree},
      {"observable", "fermionic observable and height function", run_observable},
      {"martcheck", "exhaustive martingale step check", run_martcheck},
      {"sde", "continuum diffusions", run_sde},
      {"loewner", "Loewner evolution of tree-branch drivers", run_loewner},
      {"crossing", "arc pattern frequency against the closed form", run_crossing},
      {"kappa", "kappa from extracted driving functions", run_kappa},
      {"subtree", "finite subtree approximation ladder", run_subtree},
      {"annulus", "annulus crossings, arms and the crossing tail", run_annulus},
  };
  for (auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    if (std::string(c.name) == "sde")
      sub->add_option("--process", cfg.process, "bessel, tree or fourpoint")
          ->check(CLI::IsMember({"bessel", "tree", "fourpoint"}));
    if (std::string(c.name) == "sde" || std::string(c.name) == "loewner" || std::string(c.name) == "observable")
      sub->add_option("--dump", cfg.dump, "CSV dump path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "fkl: " << e.what() << "\n" << app.help();
    return 2;
  }

  for (auto& c : cmds) {
    if (!app.got_subcommand(c.name)) continue;
    cfg.command = c.name;
    json doc;
    Outcome o;
    try {
      o = c.run(cfg);
    } catch (const CLI::ValidationError& e) {
      std::cerr << "fkl: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "fkl " << c.name << ": " << e.what() << "\n";
      return 3;
    }
    doc["config"] = cfg.to_json();
    doc["result"] = o.result;
    doc["violations"] = o.violations;
    std::string text = doc.dump(2) + "\n";
    if (cfg.out.empty())
      std::cout << text;
    else
      write_text(cfg.out, text);
    if (o.violations) std::cerr << "fkl " << c.name << ": " << o.violations << " invariant violations\n";
    return cfg.strict && o.violations ? 1 : 0;
  }
  return 2;
}
