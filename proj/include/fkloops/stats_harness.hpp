#pragma once
// Experiments tying the lattice to the continuum: the conformal modulus of a
// rectangle, the arc pattern frequency, the kappa estimate from extracted
// driving functions, annulus crossings and arms, curve / loop / tree
// distances and the finite subtree approximation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/push_relabel_max_flow.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "continuum_sle.hpp"
#include "explorer.hpp"
#include "fk_sampler.hpp"
#include "json.hpp"
#include "lattice_domain.hpp"
#include "loop_rep.hpp"

namespace fkl {

using Polyline = std::vector<sle::cplx>;

// block coordinates: black (k, l) sits at k + il
inline sle::cplx block_point(LatticeCoord p) { return sle::cplx(p.x2 + p.y2, p.y2 - p.x2) / 4.0; }

// ---------------------------------------------------------------------------
// Statistics and reports

// Welford accumulator; merge is associative so per-sample statistics can be
// combined in any grouping
struct RunningStats {
  long n = 0;
  double mean = 0, m2 = 0;

  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / double(n);
    m2 += d * (x - mean);
  }
  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    long t = n + o.n;
    double d = o.mean - mean;
    mean += d * double(o.n) / double(t);
    m2 += o.m2 + d * d * double(n) * double(o.n) / double(t);
    n = t;
  }
  double variance() const { return n > 1 ? m2 / double(n - 1) : 0.0; }
  double stderr_of_mean() const { return n > 0 ? std::sqrt(variance() / double(n)) : 0.0; }
};

struct ExperimentReport {
  std::string experiment;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  long n = 0;
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();
  std::optional<double> target;
  std::string target_source;  // how the target was obtained
  nlohmann::json extra = nlohmann::json::object();
  struct LawCount {
    long checks = 0, violations = 0;
  };
  std::map<std::string, LawCount> laws;  // per-sample combinatorial laws
  long checks = 0, violations = 0;       // summed over the laws
  std::vector<std::string> violation_log;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["estimate"] = estimate;
    j["stderr"] = std_error;
    j["n"] = n;
    j["seed"] = seed;
    j["params"] = params;
    if (target) {
      j["target"] = *target;
      j["target_source"] = target_source;
    }
    j["extra"] = extra;
    j["checks"] = checks;
    j["violations"] = violations;
    for (auto& [name, c] : laws) j["laws"][name] = {{"checks", c.checks}, {"violations", c.violations}};
    if (!violation_log.empty()) j["violation_log"] = violation_log;
    return j;
  }
  void check(const std::string& law, bool ok, const std::string& what) {
    auto& c = laws[law];
    ++checks;
    ++c.checks;
    if (ok) return;
    ++violations;
    ++c.violations;
    if (violation_log.size() < 20) violation_log.push_back(law + ": " + what);
  }
};

// Euler relation between loops and clusters on a full-domain configuration
inline bool euler_identity_holds(const Domain& d, const FkConfig& c, const LoopEnsemble& ens, const DualGraph& g) {
  return int(ens.loops.size()) == count_clusters(d, c) + count_dual_clusters(d, c, g) - 1;
}

// ---------------------------------------------------------------------------
// Conformal modulus of a rectangle
//
// With a, b, c, d sent to 0, v, 1, infinity, the Schwarz-Christoffel map
// z -> int dz / sqrt(z (z - v) (z - 1)) takes the half-plane onto a rectangle
// with side ab of length 2K(v) and side bc of length 2K(1 - v), K taken in
// the parameter convention. The aspect bc / ab is K(1 - v) / K(v); a square
// gives v = 1/2 and long bc sides push v to 0.

// K in the parameter convention
inline double elliptic_K(double m) { return std::comp_ellint_1(std::sqrt(m)); }

inline double rect_modulus(double v) {
  if (!(v > 0 && v < 1)) throw std::domain_error("rect_modulus: v must lie in (0, 1)");
  return elliptic_K(1 - v) / elliptic_K(v);
}

// Route 1: the nome q = exp(-pi K'/K) = exp(-pi aspect) gives the parameter
// directly as (theta_2 / theta_3)^4. Aspects below 1 use v(1/a) = 1 - v(a).
inline double rect_to_v(double aspect) {
  if (!(aspect > 0) || !std::isfinite(aspect)) throw std::invalid_argument("rect_to_v: aspect must be positive");
  if (aspect < 1) return 1 - rect_to_v(1 / aspect);
  double q = std::exp(-std::numbers::pi * aspect);
  double t2 = 0, t3 = 1;
  for (int n = 0; n < 40; ++n) {
    double a = std::pow(q, (n + 0.5) * (n + 0.5)), b = std::pow(q, double(n + 1) * (n + 1));
    t2 += 2 * a;
    t3 += 2 * b;
    if (a < 1e-300) break;
  }
  return std::pow(t2 / t3, 4);
}

// Route 2: quadrature of the Schwarz-Christoffel integrals along the sides
// and a bracketing root solve for the aspect.
inline double sc_side_ab(double v) {
  boost::math::quadrature::tanh_sinh<double> ts;
  // xc is the signed distance to the nearer endpoint, exact where x is not
  return ts.integrate(
      [v](double x, double xc) {
        double l = xc <= 0 ? -xc : x, r = xc > 0 ? xc : v - x;
        return 1 / std::sqrt(l * r * (1 - x));
      },
      0.0, v);
}
inline double sc_side_bc(double v) {
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(
      [v](double x, double xc) {
        double l = xc <= 0 ? -xc : x - v, r = xc > 0 ? xc : 1 - x;
        return 1 / std::sqrt(x * l * r);
      },
      v, 1.0);
}

inline double rect_to_v_quadrature(double aspect) {
  if (!(aspect > 0) || !std::isfinite(aspect)) throw std::invalid_argument("rect_to_v_quadrature: aspect must be positive");
  if (aspect < 1) return 1 - rect_to_v_quadrature(1 / aspect);
  auto f = [aspect](double lv) {
    double v = 1 / (1 + std::exp(-lv));
    return std::log(sc_side_bc(v) / sc_side_ab(v)) - std::log(aspect);
  };
  // v as a logistic variable in (0, 1/2]
  double lo = -40, hi = 0;
  if (f(lo) < 0 || f(hi) > 0) throw std::runtime_error("rect_to_v_quadrature: aspect outside the bracket");
  std::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  if (iters >= 200) throw std::runtime_error("rect_to_v_quadrature: root solve did not converge");
  double lv = 0.5 * (r.first + r.second);
  return 1 / (1 + std::exp(-lv));
}

// ---------------------------------------------------------------------------
// Arc pattern frequency
//
// The sampler draws the four-point FK measure with wired arcs ab and cd,
// which weights the (ab)(cd) pattern by an extra sqrt 2 against the measure
// that does not count the exterior arcs as loops. The no-exterior frequency
// is recovered by reweighting.

struct ChainOptions {
  int burn_in = 200;
  int thin = 5;
  int batches = 20;  // batch means for the standard error
  ModelParams model{};
};

inline double no_exterior_from_fk(double f_abcd) {
  double a = f_abcd / kSqrt2;
  return a / (a + 1 - f_abcd);
}

inline ExperimentReport arc_pattern_experiment(int width, int height, long n, std::uint64_t seed,
                                               const ChainOptions& o = {}) {
  if (n <= 0) throw std::invalid_argument("arc_pattern_experiment: n must be positive");
  auto d = build_rect_domain(width, height);
  auto m = mark_rect_corners(d, width, height);
  FkChain ch(m.domain, o.model, seed, 0, &m.forced);
  for (int s = 0; s < o.burn_in; ++s) ch.sweep(Algorithm::chayes_machta);
  ExperimentReport r;
  r.experiment = "crossing";
  r.seed = seed;
  r.n = n;
  int B = std::max(2, int(std::min<long>(o.batches, n)));
  std::vector<RunningStats> batch(B);
  RunningStats all;
  for (long i = 0; i < n; ++i) {
    for (int s = 0; s < std::max(1, o.thin); ++s) ch.sweep(Algorithm::chayes_machta);
    auto ad = arc_decompose(m, ch.config());
    double x = ad.pattern == Pattern::ab_cd ? 1.0 : 0.0;
    all.add(x);
    batch[std::size_t(i * B / n)].add(x);
  }
  double f = all.mean;
  double se_binom = std::sqrt(f * (1 - f) / double(n));
  RunningStats bm;
  for (auto& b : batch)
    if (b.n) bm.add(b.mean);
  double se_f = std::max(se_binom, bm.stderr_of_mean());
  double a = 1 / kSqrt2, den = a * f + 1 - f;
  double aspect = double(width) / double(height);
  double v = rect_to_v(aspect);
  r.estimate = no_exterior_from_fk(f);
  r.std_error = a / (den * den) * se_f;
  r.target = 1 - crossing_prob(v);
  r.target_source = "one minus the closed-form crossing probability at the conformal modulus of the rectangle";
  r.params = {{"width", width}, {"height", height}, {"aspect", aspect}, {"burn_in", o.burn_in}, {"thin", o.thin}};
  r.extra = {{"pattern", "(ab)(cd)"},
             {"fk_frequency", f},
             {"fk_stderr", se_f},
             {"binomial_stderr", se_binom},
             {"batch_stderr", bm.stderr_of_mean()},
             {"v", v},
             {"aspect_effective", (width - 0.5) / (height - 0.5)}};
  return r;
}

// ---------------------------------------------------------------------------
// Tree geometry helpers

inline std::vector<int> node_depths(const ExplorationTree& t) {
  std::vector<int> dep(t.nodes.size(), -1);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    std::vector<int> stack;
    int k = int(i);
    while (k >= 0 && dep[k] < 0) {
      stack.push_back(k);
      k = t.nodes[k].parent;
    }
    int base = k < 0 ? -1 : dep[k];
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) dep[*it] = ++base;
  }
  return dep;
}

inline int lowest_common_ancestor(const ExplorationTree& t, const std::vector<int>& dep, int x, int y) {
  while (x != y) {
    if (dep[x] >= dep[y])
      x = t.nodes[x].parent;
    else
      y = t.nodes[y].parent;
    if (x < 0 || y < 0) return -1;
  }
  return x;
}

// nodes from the root to n
inline std::vector<int> node_path(const ExplorationTree& t, int n) {
  std::vector<int> p;
  for (; n >= 0; n = t.nodes[n].parent) p.push_back(n);
  std::reverse(p.begin(), p.end());
  return p;
}

inline Polyline node_polyline(const ExplorationTree& t, const std::vector<int>& path, double scale) {
  Polyline c;
  c.reserve(path.size());
  for (int n : path) c.push_back(block_point(t.dom->medial_mid(t.nodes[n].edge)) / scale);
  return c;
}

inline Polyline loop_polyline(const Loop& l, const Domain& d, double scale) {
  Polyline c;
  c.reserve(l.edges.size());
  for (int e : l.edges) c.push_back(block_point(d.medial_mid(e)) / scale);
  return c;
}

// keeps at most k points at a uniform index stride, always the first and last
inline Polyline downsample(const Polyline& p, std::size_t k) {
  if (k < 2 || p.size() <= k) return p;
  Polyline out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(p[(i * (p.size() - 1)) / (k - 1)]);
  return out;
}

// ---------------------------------------------------------------------------
// Distances
//
// Curves: the reparametrisation infimum is replaced by the discrete Frechet
// distance over the polyline vertices (monotone couplings), an upper bound
// that converges as the polylines are refined. Loops: the same with cyclic,
// orientation-preserving couplings. Trees and loop ensembles: Hausdorff
// distance built on those.

inline double curve_distance(const Polyline& a, const Polyline& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("curve_distance: empty curve");
  std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d = std::abs(a[i] - b[j]);
      double best;
      if (i == 0 && j == 0)
        best = d;
      else if (i == 0)
        best = cur[j - 1];
      else if (j == 0)
        best = prev[0];
      else
        best = std::min({prev[j], prev[j - 1], cur[j - 1]});
      cur[j] = std::max(best, d);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

// minimum over every monotone coupling, by exhaustive recursion; short curves only
inline double curve_distance_bruteforce(const Polyline& a, const Polyline& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("curve_distance_bruteforce: empty curve");
  if (a.size() > 10 || b.size() > 10) throw std::invalid_argument("curve_distance_bruteforce: curves too long");
  double best = std::numeric_limits<double>::infinity();
  auto rec = [&](auto&& self, std::size_t i, std::size_t j, double worst) -> void {
    worst = std::max(worst, std::abs(a[i] - b[j]));
    if (worst >= best) return;
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = worst;
      return;
    }
    if (i + 1 < a.size()) self(self, i + 1, j, worst);
    if (j + 1 < b.size()) self(self, i, j + 1, worst);
    if (i + 1 < a.size() && j + 1 < b.size()) self(self, i + 1, j + 1, worst);
  };
  rec(rec, 0, 0, 0.0);
  return best;
}

// each segment split into k pieces
inline Polyline refine(const Polyline& p, int k) {
  if (p.size() < 2 || k < 2) return p;
  Polyline out;
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    for (int s = 0; s < k; ++s) out.push_back(p[i] + (p[i + 1] - p[i]) * (double(s) / k));
  out.push_back(p.back());
  return out;
}

inline double loop_distance(const Polyline& a, const Polyline& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("loop_distance: empty loop");
  Polyline ca(a);
  ca.push_back(a.front());
  double best = std::numeric_limits<double>::infinity();
  Polyline cb(b.size() + 1);
  for (std::size_t s = 0; s < b.size(); ++s) {
    for (std::size_t j = 0; j <= b.size(); ++j) cb[j] = b[(s + j) % b.size()];
    best = std::min(best, curve_distance(ca, cb));
    if (best == 0) break;
  }
  return best;
}

namespace detail {
struct Box {
  double x0, x1, y0, y1;
};
inline Box box_of(const Polyline& p) {
  Box b{p[0].real(), p[0].real(), p[0].imag(), p[0].imag()};
  for (auto z : p) {
    b.x0 = std::min(b.x0, z.real());
    b.x1 = std::max(b.x1, z.real());
    b.y0 = std::min(b.y0, z.imag());
    b.y1 = std::max(b.y1, z.imag());
  }
  return b;
}
// every coupling matches the extreme points, so extents bound the distance below
inline double box_gap(const Box& a, const Box& b) {
  return std::max({std::abs(a.x0 - b.x0), std::abs(a.x1 - b.x1), std::abs(a.y0 - b.y0), std::abs(a.y1 - b.y1)});
}

// sup over A of inf over B, skipping pairs whose lower bound cannot matter
template <class Dist, class Lower>
double directed_hausdorff(std::size_t na, std::size_t nb, Dist dist, Lower lower) {
  double sup = 0;
  std::vector<std::pair<double, std::size_t>> cand(nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) cand[j] = {lower(i, j), j};
    std::sort(cand.begin(), cand.end());
    double best = std::numeric_limits<double>::infinity();
    for (auto [lb, j] : cand) {
      if (lb >= best || best <= sup) break;
      best = std::min(best, dist(i, j));
    }
    sup = std::max(sup, best);
  }
  return sup;
}

template <class Dist>
double set_distance(const std::vector<Polyline>& A, const std::vector<Polyline>& B, Dist dist, bool curves) {
  if (A.empty() && B.empty()) return 0;
  if (A.empty() || B.empty()) return std::numeric_limits<double>::infinity();
  for (auto& p : A)
    if (p.empty()) throw std::invalid_argument("set distance: empty curve");
  for (auto& p : B)
    if (p.empty()) throw std::invalid_argument("set distance: empty curve");
  std::vector<Box> ba, bb;
  for (auto& p : A) ba.push_back(box_of(p));
  for (auto& p : B) bb.push_back(box_of(p));
  auto lower = [&](bool flip) {
    return [&, flip](std::size_t i, std::size_t j) {
      const Polyline& x = flip ? B[i] : A[i];
      const Polyline& y = flip ? A[j] : B[j];
      double g = box_gap(flip ? bb[i] : ba[i], flip ? ba[j] : bb[j]);
      if (curves) g = std::max({g, std::abs(x.front() - y.front()), std::abs(x.back() - y.back())});
      return g;
    };
  };
  double ab = directed_hausdorff(A.size(), B.size(), [&](std::size_t i, std::size_t j) { return dist(A[i], B[j]); },
                                 lower(false));
  double ba_ = directed_hausdorff(B.size(), A.size(), [&](std::size_t i, std::size_t j) { return dist(B[i], A[j]); },
                                  lower(true));
  return std::max(ab, ba_);
}
}  // namespace detail

inline double tree_distance(const std::vector<Polyline>& a, const std::vector<Polyline>& b) {
  return detail::set_distance(a, b, [](const Polyline& x, const Polyline& y) { return curve_distance(x, y); }, true);
}

inline double ensemble_distance(const std::vector<Polyline>& a, const std::vector<Polyline>& b) {
  return detail::set_distance(a, b, [](const Polyline& x, const Polyline& y) { return loop_distance(x, y); }, false);
}

inline std::vector<Polyline> tree_polylines(const ExplorationTree& t, double scale, std::size_t max_points = 0) {
  std::vector<Polyline> out;
  for (std::size_t w = 0; w < t.target_node.size(); ++w) {
    auto p = node_polyline(t, node_path(t, t.target_node[w]), scale);
    out.push_back(max_points ? downsample(p, max_points) : p);
  }
  return out;
}

inline std::vector<Polyline> loop_polylines(const LoopEnsemble& e, const Domain& d, double scale,
                                            std::size_t max_points = 0) {
  std::vector<Polyline> out;
  for (auto& l : e.loops) {
    auto p = loop_polyline(l, d, scale);
    out.push_back(max_points ? downsample(p, max_points) : p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite subtrees
//
// The branches to the arc endpoints, augmented by the branches to the
// branching points they discover: branches part only at a boundary vertex,
// after an edge entering it, so the split of two branches names a boundary
// target of its own. Targets in boundary order
// from the root only need consecutive pairs.

struct FiniteSubtree {
  std::vector<int> targets;    // arc endpoints, boundary positions
  std::vector<int> branching;  // discovered branching points, boundary positions
  std::vector<int> ends;       // end node of each curve: targets first, then branching points
  std::vector<char> covered;   // per tree node
};

inline std::vector<int> arc_endpoints(const Domain& d, int root, int arcs) {
  if (arcs < 1) throw std::invalid_argument("arc_endpoints: need at least one arc");
  int L = d.boundary_length();
  arcs = std::min(arcs, L);
  std::vector<int> out;
  for (int k = 0; k < arcs; ++k) out.push_back(d.mod(root + int((long(k) * L) / arcs)));
  return out;
}

inline FiniteSubtree finite_subtree(const ExplorationTree& t, std::vector<int> targets) {
  const Domain& d = *t.dom;
  int L = d.boundary_length();
  auto rho = [&](int w) {
    int r = d.mod(w - t.root);
    return r == 0 ? L : r;
  };
  std::sort(targets.begin(), targets.end(), [&](int x, int y) { return rho(x) < rho(y); });
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  FiniteSubtree f;
  f.targets = targets;
  std::map<std::pair<int, int>, int> vertex_pos;
  for (int u = 0; u < L; ++u) {
    auto v = d.boundary_vertex(u);
    vertex_pos[{v.x2, v.y2}] = u;
  }
  auto dep = node_depths(t);
  std::vector<char> is_target(L, 0);
  for (int w : targets) {
    f.ends.push_back(t.target_node.at(w));
    is_target[w] = 1;
  }
  for (std::size_t i = 0; i + 1 < targets.size(); ++i) {
    int l = lowest_common_ancestor(t, dep, t.target_node[targets[i]], t.target_node[targets[i + 1]]);
    if (l < 0) continue;
    auto h = d.medial_head(t.nodes[l].edge);
    auto it = vertex_pos.find({h.x2, h.y2});
    if (it == vertex_pos.end() || is_target[it->second]) continue;
    int u = it->second;
    is_target[u] = 1;
    f.branching.push_back(u);
    f.ends.push_back(t.target_node[u]);
  }
  f.covered.assign(t.nodes.size(), 0);
  for (int e : f.ends)
    for (int n = e; n >= 0 && !f.covered[n]; n = t.nodes[n].parent) f.covered[n] = 1;
  return f;
}

inline std::vector<Polyline> subtree_polylines(const ExplorationTree& t, const FiniteSubtree& f, double scale,
                                               std::size_t max_points = 0) {
  std::vector<Polyline> out;
  for (int e : f.ends) {
    auto p = node_polyline(t, node_path(t, e), scale);
    out.push_back(max_points ? downsample(p, max_points) : p);
  }
  return out;
}

// Each boundary loop cut down to its edges traced by the subtree, gaps closed
// by straight segments; loops the subtree never reaches are dropped.
inline std::vector<Polyline> subtree_loops(const ExplorationTree& t, const FiniteSubtree& f, const LoopEnsemble& bl,
                                           double scale, std::size_t max_points = 0) {
  std::vector<char> seen(t.dom->num_medial(), 0);
  for (std::size_t n = 0; n < t.nodes.size(); ++n)
    if (f.covered[n]) seen[t.nodes[n].edge] = 1;
  std::vector<Polyline> out;
  for (auto& l : bl.loops) {
    Polyline p;
    for (int e : l.edges)
      if (seen[e]) p.push_back(block_point(t.dom->medial_mid(e)) / scale);
    if (!p.empty()) out.push_back(max_points ? downsample(p, max_points) : p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annulus crossings and arms

struct Annulus {
  sle::cplx z0;
  double r = 1, R = 2;
};

enum class AnnulusKind { interior, boundary, other, disjoint };

inline const char* annulus_kind_name(AnnulusKind k) {
  static const char* n[] = {"interior", "boundary", "other", "disjoint"};
  return n[int(k)];
}

struct ArmCounts {
  AnnulusKind kind = AnnulusKind::other;
  int tree_crossings = 0;  // disjoint minimal crossings by tree segments
  int open_arms = 0;       // across closed primal edges, on the white squares
  int dual_open_arms = 0;  // along open primal edges, on the free side
};

// Arm endpoints may sit this far inside the circles: the vertices flanking a
// medial crossing are offset from it by less than half a block.
inline constexpr double kArmSlack = 0.5;

inline AnnulusKind classify_annulus(const Domain& d, const Annulus& A) {
  if (!(A.r > 0 && A.R > A.r)) throw std::invalid_argument("annulus: need 0 < r < R");
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d.boundary_length(); ++i) bd = std::min(bd, std::abs(block_point(d.boundary_vertex(i)) - A.z0));
  bool near = false;
  for (auto& b : d.blacks())
    if (std::abs(block_point(b) - A.z0) < A.R + 1) near = true;
  if (!near) return AnnulusKind::disjoint;
  long k = std::lround(A.z0.real()), l = std::lround(A.z0.imag());
  bool inside = d.find_black(rect_black(int(k), int(l))) >= 0;
  if (inside && bd > A.R) return AnnulusKind::interior;
  if (bd < A.r) return AnnulusKind::boundary;
  return AnnulusKind::other;
}

namespace detail {
// Maximum number of crossings of the annulus by paths in a graph whose
// middle vertices are used at most once; vertices within the inner or beyond
// the outer circle (with the arm slack) are contracted to source and sink.
inline int max_crossings(const std::vector<sle::cplx>& pos, const std::vector<char>& alive,
                         const std::vector<std::pair<int, int>>& edges, const Annulus& A) {
  using namespace boost;
  using Traits = adjacency_list_traits<vecS, vecS, directedS>;
  using Graph = adjacency_list<vecS, vecS, directedS, no_property,
                               property<edge_capacity_t, long,
                                        property<edge_residual_capacity_t, long, property<edge_reverse_t, Traits::edge_descriptor>>>>;
  int nv = int(pos.size());
  std::vector<int> side(nv, 1);  // 0 inner, 1 middle, 2 outer
  for (int v = 0; v < nv; ++v) {
    double r = std::abs(pos[v] - A.z0);
    side[v] = r <= A.r + kArmSlack ? 0 : (r >= A.R - kArmSlack ? 2 : 1);
  }
  Graph g(2 * nv + 2);
  int S = 2 * nv, T = 2 * nv + 1;
  auto cap = get(edge_capacity, g);
  auto rev = get(edge_reverse, g);
  auto add = [&](int u, int v, long c) {
    auto e1 = add_edge(u, v, g).first, e2 = add_edge(v, u, g).first;
    cap[e1] = c;
    cap[e2] = 0;
    rev[e1] = e2;
    rev[e2] = e1;
  };
  const long inf = long(edges.size()) + 1;
  auto in = [&](int v) { return side[v] == 0 ? S : (side[v] == 2 ? T : 2 * v); };
  auto out = [&](int v) { return side[v] == 0 ? S : (side[v] == 2 ? T : 2 * v + 1); };
  for (int v = 0; v < nv; ++v)
    if (alive[v] && side[v] == 1) add(2 * v, 2 * v + 1, 1);
  for (auto [u, v] : edges) {
    if (!alive[u] || !alive[v] || (side[u] == side[v] && side[u] != 1)) continue;
    if ((side[u] == 0 && side[v] == 2) || (side[u] == 2 && side[v] == 0)) {
      add(S, T, 1);  // a single edge across the whole annulus
      continue;
    }
    add(out(u), in(v), inf);
    add(out(v), in(u), inf);
  }
  return int(push_relabel_max_flow(g, S, T));
}
}  // namespace detail

inline ArmCounts annulus_crossing_counts(const ExplorationTree& t, const FkConfig& c, const DualGraph& g,
                                         const Annulus& A) {
  const Domain& d = *t.dom;
  ArmCounts out;
  out.kind = classify_annulus(d, A);
  if (out.kind == AnnulusKind::disjoint) return out;

  // tree: depth-first over the nodes, greedy disjoint minimal crossings
  int nn = int(t.nodes.size());
  std::vector<std::vector<int>> kids(nn);
  std::vector<int> roots;
  for (int i = 0; i < nn; ++i) (t.nodes[i].parent < 0 ? roots : kids[t.nodes[i].parent]).push_back(i);
  std::vector<int> side(nn);
  for (int i = 0; i < nn; ++i) {
    double r = std::abs(block_point(d.medial_mid(t.nodes[i].edge)) - A.z0);
    side[i] = r <= A.r ? 0 : (r >= A.R ? 2 : 1);
  }
  std::vector<char> used(nn, 0);
  struct Item {
    int node, depth;
  };
  std::vector<int> path;         // nodes on the current root path
  std::vector<int> anchor_at;    // per depth: index of the last node off the annulus, or -1
  std::vector<Item> stack;
  for (int r0 : roots) stack.push_back({r0, 0});
  while (!stack.empty()) {
    auto [n, dep] = stack.back();
    stack.pop_back();
    path.resize(dep);
    anchor_at.resize(dep);
    int anchor = dep ? anchor_at[dep - 1] : -1;
    path.push_back(n);
    if (side[n] != 1) {
      if (anchor >= 0 && side[path[anchor]] != side[n]) {
        bool free = true;
        for (int k = anchor; k <= dep && free; ++k) free = !used[path[k]];
        if (free) {
          for (int k = anchor; k <= dep; ++k) used[path[k]] = 1;
          ++out.tree_crossings;
        }
      }
      anchor = dep;
    }
    anchor_at.push_back(anchor);
    for (int k : kids[n]) stack.push_back({k, dep + 1});
  }

  // dual-open arms: open primal edges between blacks
  {
    std::vector<sle::cplx> pos;
    for (auto& b : d.blacks()) pos.push_back(block_point(b));
    std::vector<char> alive(pos.size(), 1);
    std::vector<std::pair<int, int>> es;
    for (int i = 0; i < d.num_edges(); ++i)
      if (c.open[i]) es.push_back({d.edge(i).u, d.edge(i).v});
    out.dual_open_arms = detail::max_crossings(pos, alive, es, A);
  }
  // open arms: closed primal edges between interior white squares
  {
    std::vector<sle::cplx> pos;
    for (auto& w : g.pos) pos.push_back(block_point(w));
    std::vector<char> alive(pos.size(), 1);
    alive[0] = 0;  // the wired exterior has no position
    std::vector<std::pair<int, int>> es;
    for (int i = 0; i < d.num_edges(); ++i)
      if (!c.open[i]) es.push_back(g.edges[i]);
    out.open_arms = detail::max_crossings(pos, alive, es, A);
  }
  return out;
}

// required number of dual-open arms given the tree crossings, or -1 when no
// implication applies
inline int required_dual_arms(const ArmCounts& a) {
  int n = a.tree_crossings / 2;
  if (a.kind == AnnulusKind::interior) return n;
  if (a.kind == AnnulusKind::boundary) return std::max(0, n - 1);
  return -1;
}

// ---------------------------------------------------------------------------
// Sampled full-domain configurations with their trees

struct TreeSample {
  FkConfig config;
  LoopEnsemble loops;
  ExplorationTree tree;
};

// Runs one Chayes-Machta chain on the free-boundary domain and hands each
// thinned sample, with its loops and tree, to fn. Checks the Euler relation
// on every sample.
template <class F>
void for_tree_samples(const Domain& d, int root, long n, std::uint64_t seed, const ChainOptions& o,
                      ExperimentReport& rep, F&& fn) {
  FkChain ch(d, o.model, seed, 0);
  auto g = dual_graph(d);
  for (int s = 0; s < o.burn_in; ++s) ch.sweep(Algorithm::chayes_machta);
  for (long i = 0; i < n; ++i) {
    for (int s = 0; s < std::max(1, o.thin); ++s) ch.sweep(Algorithm::chayes_machta);
    TreeSample ts;
    ts.config = ch.config();
    ts.loops = extract_loops(d, ts.config);
    rep.check("euler", euler_identity_holds(d, ts.config, ts.loops, g), "sample " + std::to_string(i));
    auto succ = successor_map(ts.loops, d);
    ts.tree = loops_to_tree(succ, root);
    ts.tree.dom = &d;
    fn(i, ts, g);
  }
}

// exterior corner on a given side of a rect domain closest to block column x
inline int rect_side_corner(const Domain& d, double y_line, double x) {
  int best = -1;
  double bx = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d.boundary_length(); ++i) {
    if (!d.boundary_forced(i)) continue;
    auto z = block_point(d.boundary_vertex(i));
    if (std::abs(z.imag() - y_line) > 1e-9) continue;
    if (std::abs(z.real() - x) < bx) {
      bx = std::abs(z.real() - x);
      best = i;
    }
  }
  if (best < 0) throw std::logic_error("rect_side_corner: no corner on that side");
  return best;
}

// ---------------------------------------------------------------------------
// kappa from extracted driving functions
//
// The branch from the bottom middle to the top middle of a width x height
// rectangle is mapped to the half-plane by translation and scaling: the real
// line is the outer edge of the bottom row (half a block below the centres)
// and one unit is half the effective width. The driving function is
// extracted by the zipper and its quadratic variation is measured over the
// window [lo, hi] T_max on a grid of `grid` intervals, T_max being the
// capacity of a vertical slit through the whole height. The variance of U is
// not a kappa estimator here: the force point gives U a drift.

struct KappaOptions {
  ChainOptions chain{};
  double window_lo = 0.05, window_hi = 0.25;
  int grid = 20;
  long continuum_paths = 2000;  // reference for the variance slope and mean of U
};

namespace detail {
inline double interp(const std::vector<double>& t, const std::vector<double>& u, double x) {
  auto it = std::upper_bound(t.begin(), t.end(), x);
  if (it == t.begin()) return u.front();
  if (it == t.end()) return u.back();
  std::size_t k = std::size_t(it - t.begin());
  double w = (x - t[k - 1]) / (t[k] - t[k - 1]);
  return u[k - 1] + w * (u[k] - u[k - 1]);
}

// least-squares slope of y on x
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size(), my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// driving of the curve up to capacity t_end, unzipping a growing prefix
inline std::optional<DrivingPath> driving_until(const Polyline& curve, double t_end) {
  std::size_t m = std::min<std::size_t>(curve.size(), 256);
  for (;;) {
    Polyline pre(curve.begin(), curve.begin() + long(m));
    auto d = driving_extract(pre, t_end);
    if (d.times.back() >= t_end) return d;
    if (m == curve.size()) return std::nullopt;
    m = std::min(curve.size(), 2 * m);
  }
}
}  // namespace detail

struct KappaSample {
  double qv_rate = 0;
  std::vector<double> U;  // on the window grid
};

inline ExperimentReport kappa_experiment(int width, int height, long n, std::uint64_t seed, const KappaOptions& o = {}) {
  if (n <= 0) throw std::invalid_argument("kappa_experiment: n must be positive");
  if (width < 8 || height < 4) throw std::invalid_argument("kappa_experiment: domain too small");
  auto d = build_rect_domain(width, height);
  double mid = 0.5 * (width - 1);
  int root = rect_side_corner(d, -0.5, mid);
  int target = rect_side_corner(d, height - 0.5, mid);
  sle::cplx origin = block_point(d.boundary_vertex(root));
  double scale = 0.5 * (width - 0.5);
  double hn = (height - 0.5) / scale, tmax = hn * hn / 4;
  double t_lo = o.window_lo * tmax, t_hi = o.window_hi * tmax;
  int G = std::max(2, o.grid);
  std::vector<double> tg(G + 1);
  for (int k = 0; k <= G; ++k) tg[k] = t_lo + (t_hi - t_lo) * k / G;

  ExperimentReport rep;
  rep.experiment = "kappa";
  rep.seed = seed;
  RunningStats qv, uend;
  std::vector<RunningStats> ug(G + 1);
  long invalid = 0, degenerate = 0;
  for_tree_samples(d, root, n, seed, o.chain, rep, [&](long, TreeSample& ts, const DualGraph&) {
    auto path = node_path(ts.tree, ts.tree.target_node[target]);
    Polyline c{sle::cplx(0, 0)};
    for (int k : path) c.push_back((block_point(d.medial_mid(ts.tree.nodes[k].edge)) - origin) / scale);
    std::optional<DrivingPath> dr;
    try {
      dr = detail::driving_until(c, t_hi);
    } catch (const std::runtime_error&) {
      // roundoff put an unzipped vertex on the real line
      ++degenerate;
      return;
    }
    if (!dr) {
      ++invalid;
      return;
    }
    double s = 0, prev = detail::interp(dr->times, dr->U, tg[0]);
    ug[0].add(prev);
    for (int k = 1; k <= G; ++k) {
      double u = detail::interp(dr->times, dr->U, tg[k]);
      s += (u - prev) * (u - prev);
      ug[k].add(u);
      prev = u;
    }
    qv.add(s / (t_hi - t_lo));
    uend.add(prev);
  });
  if (qv.n < 10) throw std::runtime_error("kappa_experiment: too few valid paths");
  std::vector<double> var(G + 1);
  for (int k = 0; k <= G; ++k) var[k] = ug[k].variance();

  // continuum reference for the same window
  double ref_slope = 0, ref_mean = 0;
  if (o.continuum_paths > 0) {
    SdeParams p;
    p.T = t_hi;
    p.dt = t_hi / 2000;
    std::vector<RunningStats> cg(G + 1);
    for (long i = 0; i < o.continuum_paths; ++i) {
      auto b = sle_tree_branch(p, 0, 0, std::uint64_t(i));
      for (int k = 0; k <= G; ++k) cg[k].add(detail::interp(b.times, b.U, tg[k]));
    }
    std::vector<double> cv(G + 1);
    for (int k = 0; k <= G; ++k) cv[k] = cg[k].variance();
    ref_slope = detail::ls_slope(tg, cv);
    ref_mean = cg[G].mean;
  }
  rep.n = qv.n;
  rep.estimate = qv.mean;
  rep.std_error = qv.stderr_of_mean();
  rep.target = sle::kKappa;
  rep.target_source = "kappa of the exploration tree";
  rep.params = {{"width", width}, {"height", height}, {"window", {t_lo, t_hi}}, {"grid", G}, {"t_max", tmax}};
  rep.extra = {{"estimator", "quadratic variation of U on the window grid"},
               {"invalid_paths", invalid},
               {"degenerate_paths", degenerate},
               {"var_slope", detail::ls_slope(tg, var)},
               {"continuum_var_slope", ref_slope},
               {"mean_U_end", uend.mean},
               {"mean_U_end_stderr", uend.stderr_of_mean()},
               {"continuum_mean_U_end", ref_mean}};
  return rep;
}

// ---------------------------------------------------------------------------
// Annulus experiment and the crossing tail

struct AnnulusExperiment {
  ExperimentReport report;
  std::vector<Annulus> annuli;
  std::vector<std::vector<ArmCounts>> counts;  // [annulus][sample]
};

inline AnnulusExperiment annulus_experiment(int width, int height, long n, std::uint64_t seed,
                                            const std::vector<Annulus>& annuli, const ChainOptions& o = {}) {
  if (n <= 0) throw std::invalid_argument("annulus_experiment: n must be positive");
  auto d = build_rect_domain(width, height);
  int root = rect_corner_positions(d, width, height)[0];
  AnnulusExperiment ex;
  ex.annuli = annuli;
  ex.counts.assign(annuli.size(), {});
  ex.report.experiment = "annulus";
  ex.report.seed = seed;
  ex.report.n = n;
  for_tree_samples(d, root, n, seed, o, ex.report, [&](long i, TreeSample& ts, const DualGraph& g) {
    for (std::size_t a = 0; a < annuli.size(); ++a) {
      auto c = annulus_crossing_counts(ts.tree, ts.config, g, annuli[a]);
      int need = required_dual_arms(c);
      if (need >= 0)
        ex.report.check("arms", c.dual_open_arms >= need,
                        "sample " + std::to_string(i) + " annulus " + std::to_string(a) + ": " +
                            std::to_string(c.tree_crossings) + " crossings, " + std::to_string(c.dual_open_arms) +
                            " dual-open arms");
      ex.counts[a].push_back(c);
    }
  });
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t a = 0; a < annuli.size(); ++a) {
    RunningStats tc, oa, da;
    for (auto& c : ex.counts[a]) {
      tc.add(c.tree_crossings);
      oa.add(c.open_arms);
      da.add(c.dual_open_arms);
    }
    per.push_back({{"center", {annuli[a].z0.real(), annuli[a].z0.imag()}},
                   {"r", annuli[a].r},
                   {"R", annuli[a].R},
                   {"kind", annulus_kind_name(ex.counts[a].empty() ? AnnulusKind::other : ex.counts[a][0].kind)},
                   {"mean_tree_crossings", tc.mean},
                   {"mean_open_arms", oa.mean},
                   {"mean_dual_open_arms", da.mean}});
  }
  ex.report.params = {{"width", width}, {"height", height}};
  ex.report.extra = {{"annuli", per}};
  ex.report.estimate = double(ex.report.violations);
  ex.report.std_error = 0;
  return ex;
}

struct TailReport {
  std::vector<double> ratios;              // r / R per rung
  std::vector<std::vector<double>> prob;   // [n - 1][rung]: P(at least n crossings)
  std::vector<double> slope;               // per n; NaN when fewer than two rungs have events
  bool monotone_in_n = true;
  bool slope_increasing = false;
  long samples = 0;
};

// counts[rung][sample]: tree crossings of the annuli A(z0, r, R_rung)
inline TailReport crossing_tail_diagnostic(const std::vector<std::vector<int>>& counts, const std::vector<double>& ratios,
                                           int max_n = 3) {
  if (counts.empty() || counts[0].empty()) throw std::invalid_argument("crossing_tail_diagnostic: no samples");
  if (counts.size() != ratios.size()) throw std::invalid_argument("crossing_tail_diagnostic: ladder shape mismatch");
  TailReport t;
  t.ratios = ratios;
  t.samples = long(counts[0].size());
  t.prob.assign(max_n, std::vector<double>(counts.size(), 0));
  for (std::size_t j = 0; j < counts.size(); ++j)
    for (int n = 1; n <= max_n; ++n) {
      long k = std::count_if(counts[j].begin(), counts[j].end(), [n](int c) { return c >= n; });
      t.prob[n - 1][j] = double(k) / double(counts[j].size());
      if (n > 1 && t.prob[n - 1][j] > t.prob[n - 2][j]) t.monotone_in_n = false;
    }
  for (int n = 1; n <= max_n; ++n) {
    std::vector<double> x, y;
    for (std::size_t j = 0; j < counts.size(); ++j)
      if (t.prob[n - 1][j] > 0) {
        x.push_back(std::log(ratios[j]));
        y.push_back(std::log(t.prob[n - 1][j]));
      }
    t.slope.push_back(x.size() >= 2 ? detail::ls_slope(x, y) : std::numeric_limits<double>::quiet_NaN());
  }
  t.slope_increasing = true;
  for (int n = 1; n < max_n; ++n)
    if (!(t.slope[n] > t.slope[n - 1])) t.slope_increasing = false;
  return t;
}

inline nlohmann::json to_json(const TailReport& t) {
  return {{"ratios", t.ratios}, {"prob", t.prob}, {"slope", t.slope}, {"monotone_in_n", t.monotone_in_n},
          {"slope_increasing", t.slope_increasing}, {"samples", t.samples}};
}

// ---------------------------------------------------------------------------
// Finite subtree approximation

struct SubtreeOptions {
  ChainOptions chain{};
  std::vector<int> arcs = {4, 8, 16};  // partition sizes; each rung halves m(I)
  bool loops = true;                    // also d_LE
  std::size_t tree_points = 64;         // downsampling of branches
  std::size_t loop_points = 32;
};

struct SubtreeRung {
  int arcs = 0;
  double mesh = 0;  // m(I): largest arc diameter, in units of the domain size
  std::vector<double> d_tree, d_le;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t k = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + long(k), v.end());
  double hi = v[k];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + long(k)));
}

inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  return v[std::min(v.size() - 1, std::size_t(q * double(v.size() - 1) + 0.5))];
}

struct SubtreeExperiment {
  ExperimentReport report;
  std::vector<SubtreeRung> rungs;
};

inline double arc_mesh(const Domain& d, const std::vector<int>& ends, double scale) {
  // ends in boundary order from the root; arcs run between consecutive ends
  int L = d.boundary_length();
  double m = 0;
  for (std::size_t k = 0; k < ends.size(); ++k) {
    int from = ends[k], to = ends[(k + 1) % ends.size()];
    int len = d.mod(to - from);
    if (len == 0) len = L;
    std::vector<sle::cplx> pts;
    for (int i = 0; i <= len; ++i) pts.push_back(block_point(d.boundary_vertex(from + i)) / scale);
    for (auto& a : pts)
      for (auto& b : pts) m = std::max(m, std::abs(a - b));
  }
  return m;
}

inline SubtreeExperiment subtree_approx_experiment(int width, int height, long n, std::uint64_t seed,
                                                   const SubtreeOptions& o = {}) {
  if (n <= 0) throw std::invalid_argument("subtree_approx_experiment: n must be positive");
  auto d = build_rect_domain(width, height);
  int root = rect_corner_positions(d, width, height)[0];
  double scale = std::max(width, height);
  SubtreeExperiment ex;
  ex.report.experiment = "subtree";
  ex.report.seed = seed;
  ex.report.n = n;
  for (int a : o.arcs) {
    SubtreeRung r;
    r.arcs = std::min(a, d.boundary_length());
    r.mesh = arc_mesh(d, arc_endpoints(d, root, a), scale);
    ex.rungs.push_back(r);
  }
  for_tree_samples(d, root, n, seed, o.chain, ex.report, [&](long, TreeSample& ts, const DualGraph&) {
    auto full = tree_polylines(ts.tree, scale, o.tree_points);
    auto bl = boundary_loops(ts.loops, d);
    std::vector<Polyline> loops;
    if (o.loops) loops = loop_polylines(bl, d, scale, o.loop_points);
    for (auto& r : ex.rungs) {
      auto f = finite_subtree(ts.tree, arc_endpoints(d, root, r.arcs));
      r.d_tree.push_back(tree_distance(subtree_polylines(ts.tree, f, scale, o.tree_points), full));
      if (o.loops) r.d_le.push_back(ensemble_distance(subtree_loops(ts.tree, f, bl, scale, o.loop_points), loops));
    }
  });
  nlohmann::json per = nlohmann::json::array();
  bool nonincreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  for (auto& r : ex.rungs) {
    double med = median_of(r.d_tree);
    if (med > prev) nonincreasing = false;
    prev = med;
    nlohmann::json j = {{"arcs", r.arcs},
                        {"mesh", r.mesh},
                        {"d_tree_median", med},
                        {"d_tree_q90", quantile_of(r.d_tree, 0.9)}};
    if (o.loops) {
      j["d_le_median"] = median_of(r.d_le);
      j["d_le_q90"] = quantile_of(r.d_le, 0.9);
    }
    per.push_back(j);
  }
  ex.report.params = {{"width", width}, {"height", height}, {"arcs", o.arcs}, {"tree_points", o.tree_points}};
  ex.report.extra = {{"rungs", per}, {"median_nonincreasing", nonincreasing}};
  ex.report.estimate = ex.rungs.empty() ? 0.0 : median_of(ex.rungs.back().d_tree);
  ex.report.std_error = 0;
  return ex;
}

}  // namespace fkl
