#pragma once
// The four-point fermionic observable on a marked domain.
//
// f(e) = theta E[1{e in gamma_hat} exp(i pi w(e) / 4)], w(e) the quarter turns
// of gamma_hat from e forward to the edge at d. Each value lies on the line
// eta_e R with eta_e = conj(sqrt(direction of e)), and theta = eta at d makes
// f(d) = eta_d.
//
// Colours are mirrored with respect to the usual picture, so the height
// function satisfies H(W) - H(B) = |f(e)|^2 for the code's white square W and
// black square B across e; H is subharmonic on the white (dual) squares and
// superharmonic on the black (primal) squares.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "explorer.hpp"
#include "fk_sampler.hpp"
#include "loop_rep.hpp"
#include "rng.hpp"

namespace fkl {

using cplx = std::complex<double>;
inline constexpr double kPi = 3.14159265358979323846;
inline const cplx kLambda = std::polar(1.0, -kPi / 4);

// unit spanning the line of e: 1, lambda, -i, -conj(lambda) for E, N, W, S
inline cplx line_unit(int e) { return std::polar(1.0, -kPi * Domain::heading(e) / 4); }
inline double line_coord(cplx z, int e) { return (z * std::conj(line_unit(e))).real(); }
inline cplx project(cplx z, int e) {
  cplx eta = line_unit(e);
  return (z + std::conj(z) * eta * eta) / 2.0;
}
inline cplx turn_phase(int quarter_turns) { return std::polar(1.0, kPi * quarter_turns / 4); }

// the four medial edges at the midpoint of a primal edge
struct VertexStar {
  int in[2] = {-1, -1};
  int out[2] = {-1, -1};
};

inline std::vector<VertexStar> vertex_stars(const Domain& dom) {
  std::vector<VertexStar> st(dom.num_edges());
  for (int e = 0; e < dom.num_medial(); ++e) {
    int h = dom.head_edge(e), t = dom.tail_edge(e);
    if (h >= 0) st[h].in[st[h].in[0] < 0 ? 0 : 1] = e;
    if (t >= 0) st[t].out[st[t].out[0] < 0 ? 0 : 1] = e;
  }
  return st;
}

struct ObservableField {
  std::vector<cplx> edge;             // per medial edge, zero where absent
  std::vector<std::uint8_t> present;  // per medial edge
  std::vector<cplx> vertex;           // per primal edge: sum of the two incoming values
  std::vector<std::uint8_t> vertex_defined;
  cplx theta{1, 0};
  double residual = 0;  // solver: |A x - b|
  int unknowns = 0, equations = 0, rank = -1;
  bool rank_deficient = false;
};

namespace detail {
inline void fill_vertices(ObservableField& f, const Domain& dom) {
  auto st = vertex_stars(dom);
  f.vertex.assign(dom.num_edges(), cplx(0));
  f.vertex_defined.assign(dom.num_edges(), 0);
  for (int pe = 0; pe < dom.num_edges(); ++pe) {
    auto& s = st[pe];
    if (f.present[s.in[0]] && f.present[s.in[1]]) {
      f.vertex[pe] = f.edge[s.in[0]] + f.edge[s.in[1]];
      f.vertex_defined[pe] = 1;
    }
  }
}
}  // namespace detail

inline ObservableField observable_enum(const Domain4& m, const ModelParams& mp,
                                       int cap = enumeration_cap_default()) {
  const Domain& dom = m.domain;
  auto em = enumerate_measure(m, mp, cap);
  std::vector<cplx> acc(dom.num_medial(), cplx(0));
  for (std::uint64_t x = 0; x < em.prob.size(); ++x) {
    if (em.prob[x] == 0) continue;
    auto ad = arc_decompose(m, em.config(x));
    for (std::size_t k = 0; k < ad.gamma_hat.size(); ++k) acc[ad.gamma_hat[k]] += em.prob[x] * turn_phase(ad.wfwd[k]);
  }
  ObservableField f;
  f.present = m.present;
  f.theta = line_unit(m.edge_d);
  f.edge.resize(acc.size());
  for (std::size_t e = 0; e < acc.size(); ++e) f.edge[e] = f.theta * acc[e];
  detail::fill_vertices(f, dom);
  return f;
}

// max |f(in) + f(in') - f(out) - f(out')| over vertices with all four edges present
inline double s_hol_residual(const ObservableField& f, const Domain& dom) {
  double r = 0;
  for (auto& s : vertex_stars(dom)) {
    if (!f.present[s.in[0]] || !f.present[s.in[1]] || !f.present[s.out[0]] || !f.present[s.out[1]]) continue;
    r = std::max(r, std::abs(f.edge[s.in[0]] + f.edge[s.in[1]] - f.edge[s.out[0]] - f.edge[s.out[1]]));
  }
  return r;
}

// max distance of f(e) from its line
inline double line_residual(const ObservableField& f) {
  double r = 0;
  for (std::size_t e = 0; e < f.edge.size(); ++e)
    if (f.present[e]) r = std::max(r, std::abs((f.edge[e] * std::conj(line_unit(int(e)))).imag()));
  return r;
}

// max |Proj_e f(v) - f(e)| over the edges at every vertex with a value
inline double projection_residual(const ObservableField& f, const Domain& dom) {
  double r = 0;
  auto st = vertex_stars(dom);
  for (int pe = 0; pe < dom.num_edges(); ++pe) {
    if (!f.vertex_defined[pe]) continue;
    for (int e : {st[pe].in[0], st[pe].in[1], st[pe].out[0], st[pe].out[1]})
      if (f.present[e]) r = std::max(r, std::abs(project(f.vertex[pe], e) - f.edge[e]));
  }
  return r;
}

inline double max_edge_difference(const ObservableField& a, const ObservableField& b) {
  if (a.edge.size() != b.edge.size()) throw std::invalid_argument("max_edge_difference: shape mismatch");
  double r = 0;
  for (std::size_t e = 0; e < a.edge.size(); ++e) r = std::max(r, std::abs(a.edge[e] - b.edge[e]));
  return r;
}

// The real linear system for x_e = f(e) / eta_e:
//   variable vertices with four edges: f(in) + f(in') = f(out) + f(out')
//   held-open vertices and exterior corners: the path through in continues
//     to its successor, f(out) = f(in) exp(-i pi turn / 4)
//   the external arc: f(a) = f(b) exp(-i pi alpha / 4)
//   normalisation: f(d) = eta_d
inline ObservableField observable_solve(const Domain4& m) {
  const Domain& dom = m.domain;
  int nm = dom.num_medial();
  std::vector<int> col(nm, -1);
  int n = 0;
  for (int e = 0; e < nm; ++e)
    if (m.present[e]) col[e] = n++;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  auto pair = [&](int in, int out, int turns) {
    if (col[in] < 0 || col[out] < 0) throw std::logic_error("observable_solve: path continues into a removed edge");
    cplx rho = line_unit(in) * turn_phase(-turns) / line_unit(out);
    if (std::abs(rho.imag()) > 1e-9) throw std::logic_error("observable_solve: continuation leaves the line");
    trip.emplace_back(row, col[out], 1.0);
    trip.emplace_back(row, col[in], -rho.real());
    rhs.push_back(0);
    ++row;
  };
  auto st = vertex_stars(dom);
  for (int pe = 0; pe < dom.num_edges(); ++pe) {
    auto& s = st[pe];
    if (m.forced[pe] == 1) {
      for (int in : s.in) {
        int out = dom.right_out(in);
        if (!m.present[in] && !m.present[out]) continue;
        pair(in, out, quarter_turn(Domain::heading(in), Domain::heading(out)));
      }
      continue;
    }
    for (int e : {s.in[0], s.in[1], s.out[0], s.out[1]})
      if (!m.present[e]) throw std::logic_error("observable_solve: free vertex with a removed edge");
    for (int part = 0; part < 2; ++part) {
      for (int k = 0; k < 2; ++k) {
        cplx ei = line_unit(s.in[k]), eo = line_unit(s.out[k]);
        trip.emplace_back(row, col[s.in[k]], part ? ei.imag() : ei.real());
        trip.emplace_back(row, col[s.out[k]], part ? -eo.imag() : -eo.real());
      }
      rhs.push_back(0);
      ++row;
    }
  }
  for (int i = 0; i < dom.boundary_length(); ++i) {
    if (!dom.boundary_forced(i)) continue;
    int in = dom.boundary_edge(i), out = dom.boundary_edge(i + 1);
    if (m.present[in] && m.present[out]) pair(in, out, quarter_turn(Domain::heading(in), Domain::heading(out)));
  }
  pair(m.edge_b, m.edge_a, m.alpha_turns);
  trip.emplace_back(row, col[m.edge_d], 1.0);
  rhs.push_back(1.0);
  ++row;

  Eigen::SparseMatrix<double> A(row, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(rhs.data(), row);
  Eigen::VectorXd x;
  ObservableField f;
  f.unknowns = n;
  f.equations = row;
  bool solved = false;
  if (row == n) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() == Eigen::Success) {
      x = lu.solve(b);
      solved = lu.info() == Eigen::Success;
      f.rank = n;
    }
  }
  if (!solved) {
    A.makeCompressed();
    Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr;
    qr.compute(A);
    if (qr.info() != Eigen::Success) throw std::runtime_error("observable_solve: factorisation failed");
    x = qr.solve(b);
    f.rank = int(qr.rank());
  }
  f.rank_deficient = f.rank < n;
  f.residual = (A * x - b).norm();
  f.present = m.present;
  f.theta = line_unit(m.edge_d);
  f.edge.assign(nm, cplx(0));
  for (int e = 0; e < nm; ++e)
    if (col[e] >= 0) f.edge[e] = x[col[e]] * line_unit(e);
  detail::fill_vertices(f, dom);
  return f;
}

// ---------------------------------------------------------------------------
// Height function

struct Plateau {
  double mean = 0, spread = 0;  // spread = max |H - mean|
  int count = 0;
};

struct HeightField {
  const Domain* dom = nullptr;
  std::vector<double> primal;  // per black square, NaN where unreached
  std::vector<LatticeCoord> dual_sites;
  std::vector<double> dual;
  std::unordered_map<std::uint64_t, int> dual_index;
  double offset = 0;         // value on the cd plateau before anchoring it at 0
  double path_residual = 0;  // max |H(W) - H(B) - |f|^2| over present edges
  std::array<Plateau, 4> plateaus;  // indexed by Arc
  double beta = 0;

  int dual_at(LatticeCoord c) const {
    auto it = dual_index.find(detail::key(c.x2, c.y2));
    return it == dual_index.end() ? -1 : it->second;
  }
};

namespace detail {
inline Plateau plateau_of(const std::vector<double>& v) {
  Plateau p;
  p.count = int(v.size());
  if (v.empty()) return p;
  for (double x : v) p.mean += x;
  p.mean /= double(v.size());
  for (double x : v) p.spread = std::max(p.spread, std::abs(x - p.mean));
  return p;
}
}  // namespace detail

inline HeightField build_H(const ObservableField& f, const Domain4& m) {
  const Domain& dom = m.domain;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  HeightField H;
  H.dom = &dom;
  int nb = dom.num_blacks();
  H.primal.assign(nb, nan);
  for (int e = 0; e < dom.num_medial(); ++e) {
    if (!m.present[e]) continue;
    auto w = dom.white_across(e);
    if (H.dual_at(w) < 0) {
      H.dual_index[detail::key(w.x2, w.y2)] = int(H.dual_sites.size());
      H.dual_sites.push_back(w);
    }
  }
  H.dual.assign(H.dual_sites.size(), nan);
  // sites 0..nb-1 black, nb.. white
  int ns = nb + int(H.dual_sites.size());
  std::vector<std::vector<std::pair<int, double>>> adj(ns);  // (neighbour, H(nb) - H(site))
  for (int e = 0; e < dom.num_medial(); ++e) {
    if (!m.present[e]) continue;
    int b = Domain::black_of(e), w = nb + H.dual_at(dom.white_across(e));
    double d = std::norm(f.edge[e]);
    adj[b].push_back({w, d});
    adj[w].push_back({b, -d});
  }
  std::vector<double> val(ns, nan);
  int start = nb + H.dual_at(dom.white_across(m.edge_d));
  val[start] = 1.0;
  std::vector<int> queue{start};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    int s = queue[qi];
    for (auto [t, d] : adj[s])
      if (std::isnan(val[t])) {
        val[t] = val[s] + d;
        queue.push_back(t);
      }
  }
  for (int s = 0; s < ns; ++s)
    for (auto [t, d] : adj[s])
      if (!std::isnan(val[s]) && !std::isnan(val[t]))
        H.path_residual = std::max(H.path_residual, std::abs(val[t] - val[s] - d));
  std::vector<double> cd;
  for (int e : m.arcs[int(Arc::cd)]) cd.push_back(val[Domain::black_of(e)]);
  H.offset = detail::plateau_of(cd).mean;
  for (double& v : val) v -= H.offset;
  for (int b = 0; b < nb; ++b) H.primal[b] = val[b];
  for (std::size_t w = 0; w < H.dual.size(); ++w) H.dual[w] = val[nb + w];
  for (Arc arc : {Arc::ab, Arc::cd}) {
    std::vector<double> v;
    for (int e : m.arcs[int(arc)]) v.push_back(H.primal[Domain::black_of(e)]);
    H.plateaus[int(arc)] = detail::plateau_of(v);
  }
  for (Arc arc : {Arc::bc, Arc::da}) {
    std::vector<double> v;
    for (int e : m.arcs[int(arc)]) v.push_back(H.dual[H.dual_at(dom.white_across(e))]);
    H.plateaus[int(arc)] = detail::plateau_of(v);
  }
  H.beta = 1 - H.plateaus[int(Arc::ab)].mean;
  return H;
}

// Same-colour neighbours used by the discrete Laplacian. A site is interior
// when its four sides are present and its four same-colour neighbours carry
// values.
struct SublatticeGraph {
  std::vector<std::array<int, 4>> nbr;  // -1 where missing
  std::vector<std::uint8_t> interior;
};

namespace detail {
inline const int diag_dx[] = {2, -2, -2, 2}, diag_dy[] = {2, 2, -2, -2};
inline const int side_dx2[] = {2, 0, -2, 0}, side_dy2[] = {0, 2, 0, -2};
}  // namespace detail

inline SublatticeGraph primal_graph(const HeightField& H, const Domain4& m) {
  const Domain& dom = *H.dom;
  SublatticeGraph g;
  int nb = dom.num_blacks();
  g.nbr.resize(nb);
  g.interior.assign(nb, 0);
  for (int b = 0; b < nb; ++b) {
    bool in = !std::isnan(H.primal[b]);
    for (int k = 0; k < 4; ++k) {
      int o = dom.neighbour(b, k);
      g.nbr[b][k] = (o >= 0 && !std::isnan(H.primal[o])) ? o : -1;
      in = in && g.nbr[b][k] >= 0 && m.present[4 * b + k];
    }
    g.interior[b] = in;
  }
  return g;
}

inline SublatticeGraph dual_graph_of(const HeightField& H, const Domain4& m) {
  const Domain& dom = *H.dom;
  SublatticeGraph g;
  int nw = int(H.dual_sites.size());
  g.nbr.resize(nw);
  g.interior.assign(nw, 0);
  for (int w = 0; w < nw; ++w) {
    auto c = H.dual_sites[w];
    bool in = !std::isnan(H.dual[w]);
    for (int k = 0; k < 4; ++k) {
      int o = H.dual_at({c.x2 + detail::diag_dx[k], c.y2 + detail::diag_dy[k]});
      g.nbr[w][k] = (o >= 0 && !std::isnan(H.dual[o])) ? o : -1;
      in = in && g.nbr[w][k] >= 0;
      // the black square across side s of the white faces it with side s + 2
      int b = dom.find_black({c.x2 - detail::side_dx2[k], c.y2 - detail::side_dy2[k]});
      in = in && b >= 0 && m.present[4 * b + k];
    }
    g.interior[w] = in;
  }
  return g;
}

inline double laplacian(const std::vector<double>& h, const SublatticeGraph& g, int s) {
  double l = -4 * h[s];
  for (int o : g.nbr[s]) l += h[o];
  return l;
}

struct SubSuperReport {
  int dual_checked = 0, primal_checked = 0;
  int violations = 0;
  double min_dual_laplacian = std::numeric_limits<double>::infinity();
  double max_primal_laplacian = -std::numeric_limits<double>::infinity();
};

// H is subharmonic on the dual squares and superharmonic on the primal ones
inline SubSuperReport check_sub_super(const HeightField& H, const Domain4& m, double tol = 1e-10) {
  SubSuperReport r;
  auto gp = primal_graph(H, m);
  auto gd = dual_graph_of(H, m);
  for (std::size_t w = 0; w < H.dual.size(); ++w) {
    if (!gd.interior[w]) continue;
    double l = laplacian(H.dual, gd, int(w));
    ++r.dual_checked;
    r.min_dual_laplacian = std::min(r.min_dual_laplacian, l);
    if (l < -tol) ++r.violations;
  }
  for (std::size_t b = 0; b < H.primal.size(); ++b) {
    if (!gp.interior[b]) continue;
    double l = laplacian(H.primal, gp, int(b));
    ++r.primal_checked;
    r.max_primal_laplacian = std::max(r.max_primal_laplacian, l);
    if (l > tol) ++r.violations;
  }
  return r;
}

// Preharmonic extension of the values at the non-interior sites.
inline std::vector<double> dirichlet_extension(const std::vector<double>& h, const SublatticeGraph& g) {
  int n = int(h.size());
  std::vector<int> idx(n, -1);
  int k = 0;
  for (int s = 0; s < n; ++s)
    if (g.interior[s]) idx[s] = k++;
  std::vector<double> out = h;
  if (k == 0) return out;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  for (int s = 0; s < n; ++s) {
    if (idx[s] < 0) continue;
    trip.emplace_back(idx[s], idx[s], 4.0);
    for (int o : g.nbr[s]) {
      if (idx[o] >= 0)
        trip.emplace_back(idx[s], idx[o], -1.0);
      else
        b[idx[s]] += h[o];
    }
  }
  Eigen::SparseMatrix<double> A(k, k);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("dirichlet_extension: factorisation failed");
  Eigen::VectorXd x = ldlt.solve(b);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("dirichlet_extension: solve failed");
  for (int s = 0; s < n; ++s)
    if (idx[s] >= 0) out[s] = x[idx[s]];
  return out;
}

struct Envelope {
  std::vector<double> primal;  // preharmonic extension on the primal squares (lower)
  std::vector<double> dual;    // and on the dual squares (upper)
  // min over the chain Ht_primal <= H_primal <= H_dual <= Ht_dual; the middle
  // comparison runs over black/white pairs sharing a present edge
  double min_slack = std::numeric_limits<double>::infinity();
};

inline Envelope preharmonic_envelope(const HeightField& H, const Domain4& m) {
  const Domain& dom = *H.dom;
  Envelope env;
  auto gp = primal_graph(H, m);
  auto gd = dual_graph_of(H, m);
  env.primal = dirichlet_extension(H.primal, gp);
  env.dual = dirichlet_extension(H.dual, gd);
  for (std::size_t b = 0; b < H.primal.size(); ++b)
    if (!std::isnan(H.primal[b])) env.min_slack = std::min(env.min_slack, H.primal[b] - env.primal[b]);
  for (std::size_t w = 0; w < H.dual.size(); ++w)
    if (!std::isnan(H.dual[w])) env.min_slack = std::min(env.min_slack, env.dual[w] - H.dual[w]);
  for (int e = 0; e < dom.num_medial(); ++e) {
    if (!m.present[e]) continue;
    double hb = H.primal[Domain::black_of(e)], hw = H.dual[H.dual_at(dom.white_across(e))];
    env.min_slack = std::min(env.min_slack, hw - hb);
  }
  return env;
}

// max over vertices with four present edges, inside the window, of the gap
// between the two extensions (mean of the two whites minus mean of the two
// blacks at the vertex)
inline double envelope_gap(const HeightField& H, const Envelope& env, const Domain4& m,
                           const std::function<bool(LatticeCoord)>& window) {
  const Domain& dom = *H.dom;
  double g = 0;
  auto st = vertex_stars(dom);
  for (int pe = 0; pe < dom.num_edges(); ++pe) {
    auto& s = st[pe];
    int es[4] = {s.in[0], s.in[1], s.out[0], s.out[1]};
    bool ok = true;
    for (int e : es) ok = ok && m.present[e];
    if (!ok || !window(dom.medial_head(s.in[0]))) continue;
    double up = 0, lo = 0;
    for (int e : es) {
      up += env.dual[H.dual_at(dom.white_across(e))];
      lo += env.primal[Domain::black_of(e)];
    }
    g = std::max(g, (up - lo) / 4);
  }
  return g;
}

// H(S') - H(S) for two same-colour squares diagonal across a vertex, from the
// vertex value; dz = S' - S in units of the medial edge length. The sign is
// negative because the picture is mirrored.
inline double vertex_increment(cplx fv, cplx dz) { return -0.5 * (fv * fv * dz).imag(); }

// ---------------------------------------------------------------------------
// Fused arc: the Poisson profile
//
// A rect domain of width 2*half_width*mesh and height height*mesh blocks, c
// and d on consecutive exterior corners at the middle of the bottom side, a
// and b at the top corners. With z = k + i l for block (k, l), the boundary
// line is Im z = -1/4 and z0 is the midpoint of the cd arc. The profile
// G = 1 - H is 1 on cd, 0 on da and bc, and beta on ab; G / G(w), with w the
// block nearest to z0 + i*mesh, is compared to Im(-1/(z - z0)) normalised
// the same way on the window |Re zeta| <= 1, 1/2 <= Im zeta <= 3/2, where
// zeta = (z - z0) / mesh. That comparison carries the bias of the finite
// domain, so it is also made against the continuum function of the same
// rectangle: its Poisson kernel at z0 plus the measured ab value times the
// harmonic measure of the top side, both as sine series.

struct PoissonProfile {
  int mesh = 0, width = 0, height = 0;
  double max_deviation = 0;       // from the half-plane kernel, window squares of both colours
  double max_deviation_rect = 0;  // from the rectangle reference
  double at_w = 0;           // normalised profile at w
  double flat_boundary = 0;  // max |G| on arcs da and bc
  double ab_value = 0;       // normalised value on the far arc ab
  double scale = 0;          // G(w)
  int window_sites = 0;
  double solve_residual = 0;
};

inline cplx block_coord(LatticeCoord p) {
  return cplx(p.x2, p.y2) * std::polar(1.0, -kPi / 4) / (2 * std::sqrt(2.0));
}

inline PoissonProfile poisson_profile_check(int mesh, int half_width = 4, int height = 4) {
  if (mesh < 2 || half_width < 2 || height < 2)
    throw std::invalid_argument("poisson_profile_check: mesh, half_width and height must be at least 2");
  PoissonProfile r;
  r.mesh = mesh;
  r.width = 2 * half_width * mesh;
  r.height = height * mesh;
  Domain dom = build_rect_domain(r.width, r.height);
  auto corners = rect_corner_positions(dom, r.width, r.height);
  int k0 = r.width / 2 - 1;
  auto bottom_corner = [&](int k) {
    int b = dom.find_black(rect_black(k, 0));
    for (int i = 0; i < dom.boundary_length(); ++i) {
      int e = dom.boundary_edge(i);
      if (Domain::black_of(e) == b && dom.boundary_forced(i) &&
          block_coord(dom.boundary_vertex(i)).imag() < -0.25)
        return i;
    }
    throw std::logic_error("poisson_profile_check: bottom corner not found");
  };
  Domain4 m = mark_four_points(dom, {corners[3], corners[2], bottom_corner(k0 + 1), bottom_corner(k0)});
  if (m.arcs[int(Arc::cd)].size() != 2) throw std::logic_error("poisson_profile_check: cd is not fused");
  auto f = observable_solve(m);
  r.solve_residual = f.residual;
  auto H = build_H(f, m);

  const cplx z0(k0 + 0.5, -0.25);
  auto kernel = [](cplx zeta) { return zeta.imag() / std::norm(zeta); };
  int wb = dom.find_black(rect_black(k0, mesh));
  cplx zw = (cplx(k0, mesh) - z0) / double(mesh);
  r.scale = 1 - H.primal[wb];
  r.at_w = (1 - H.primal[wb]) / r.scale;
  r.ab_value = H.beta / r.scale;

  // the rectangle [-1/4, width - 3/4] x [-1/4, height - 3/4] in block units
  const double rw = r.width - 0.5, rh = r.height - 0.5, x0 = z0.real() + 0.25;
  auto sinh_ratio = [](double a, double b) {  // sinh(a) / sinh(b), 0 <= a <= b
    return std::exp(a - b) * (1 - std::exp(-2 * a)) / (1 - std::exp(-2 * b));
  };
  auto rect_terms = [&](cplx z) {  // (Poisson kernel at z0, harmonic measure of the top)
    double x = z.real() + 0.25, y = z.imag() + 0.25, p = 0, om = 0;
    for (int n = 1; n < 100000; ++n) {
      double k = n * kPi / rw, sx = std::sin(k * x);
      double tp = std::sin(k * x0) * sx * sinh_ratio(k * (rh - y), k * rh);
      double to = (n % 2 ? 4 / (n * kPi) : 0.0) * sx * sinh_ratio(k * y, k * rh);
      p += tp, om += to;
      if (std::exp(-k * std::min(y, rh - y)) < 1e-17) break;
    }
    return std::pair{p, om};
  };
  auto [pw, ow] = rect_terms(cplx(k0, mesh));
  auto rect_ref = [&](cplx z) {
    auto [p, om] = rect_terms(z);
    return (1 - r.ab_value * ow) * p / pw + r.ab_value * om;
  };

  auto visit = [&](LatticeCoord p, double h) {
    cplx z = block_coord(p), zeta = (z - z0) / double(mesh);
    if (std::abs(zeta.real()) > 1 || zeta.imag() < 0.5 || zeta.imag() > 1.5) return;
    ++r.window_sites;
    double g = (1 - h) / r.scale;
    r.max_deviation = std::max(r.max_deviation, std::abs(g - kernel(zeta) / kernel(zw)));
    r.max_deviation_rect = std::max(r.max_deviation_rect, std::abs(g - rect_ref(z)));
  };
  for (int b = 0; b < dom.num_blacks(); ++b) visit(dom.black(b), H.primal[b]);
  for (std::size_t w = 0; w < H.dual.size(); ++w) visit(H.dual_sites[w], H.dual[w]);
  for (Arc arc : {Arc::da, Arc::bc})
    for (int e : m.arcs[int(arc)])
      r.flat_boundary = std::max(r.flat_boundary, std::abs(1 - H.dual[H.dual_at(dom.white_across(e))]));
  return r;
}

// ---------------------------------------------------------------------------
// Martingales along the exploration branch from a to d

// Coins at the visits of the branch to the arc bc, built from the jump factor
// phi: P(zeta = 0) = 1/phi; xi = 1 when zeta = 0 and a fair sign otherwise,
// so E[xi] = 1/phi.
struct CoinLaws {
  double jump_factor = 1 + kSqrt2;
  double zeta0() const { return 1 / jump_factor; }
  double zeta1() const { return 1 - zeta0(); }
  double xi_plus() const { return zeta0() + zeta1() / 2; }
  double xi_minus() const { return zeta1() / 2; }
  double xi_mean() const { return xi_plus() - xi_minus(); }
};

struct MartingaleReport {
  double max_residual_M = 0;        // over all prefixes
  double max_residual_M_plain = 0;  // prefixes whose tip is not at a bc vertex
  double max_residual_N = 0;
  double max_residual_N_plain = 0;  // prefixes whose tip is not at a bc vertex
  double min_bc_ratio = std::numeric_limits<double>::infinity(), max_bc_ratio = 0;  // M+_{t+1} / M+_t
  long prefixes = 0, bc_steps = 0;
};

struct MartingaleTrace {
  std::vector<int> times;
  std::vector<double> M_plus, M;
  std::vector<cplx> N;  // NaN once the edge is swallowed
  std::vector<int> path;
  std::vector<int> bc_visits;  // step indices
};

namespace detail {

// Exact law of the branch from a to d, together with the constraints each
// step puts on the primal configuration: at the head of step k the branch
// pairs path[k] with path[k+1], which fixes the state of that primal edge
// (open at a jump).
struct MartingaleSetup {
  ExactMeasure em;
  std::vector<int> free_bit;  // per primal edge
  std::vector<int> bc_vertex;  // per primal edge: boundary position u, or -1
  struct Cfg {
    double p = 0;
    std::uint64_t mask = 0;
    bool ad_cb = false;
    std::vector<std::pair<int, cplx>> contrib;  // edge, theta-free term of f
    std::vector<int> path;
    std::vector<std::pair<int, int>> step;  // (bit or -1, open) at the head of path[k]
  };
  std::vector<Cfg> cfgs;
};

inline MartingaleSetup martingale_setup(const Domain4& m, const ModelParams& mp, int cap) {
  const Domain& dom = m.domain;
  MartingaleSetup su;
  su.em = enumerate_measure(m, mp, cap);
  su.free_bit.assign(dom.num_edges(), -1);
  for (std::size_t k = 0; k < su.em.free_edges.size(); ++k) su.free_bit[su.em.free_edges[k]] = int(k);
  su.bc_vertex.assign(dom.num_edges(), -1);
  for (int u = 0; u < dom.boundary_length(); ++u)
    if (!dom.boundary_forced(u) && m.arc_of_pos[u] == Arc::bc && m.arc_of_pos[dom.mod(u + 1)] == Arc::bc)
      su.bc_vertex[dom.head_edge(dom.boundary_edge(u))] = u;
  for (std::uint64_t x = 0; x < su.em.prob.size(); ++x) {
    if (su.em.prob[x] == 0) continue;
    MartingaleSetup::Cfg c;
    c.p = su.em.prob[x];
    c.mask = x;
    FkConfig cfg = su.em.config(x);
    auto ad = arc_decompose(m, cfg);
    c.ad_cb = ad.pattern == Pattern::ad_cb;
    for (std::size_t k = 0; k < ad.gamma_hat.size(); ++k) c.contrib.push_back({ad.gamma_hat[k], turn_phase(ad.wfwd[k])});
    Board bd(dom, cfg);
    c.path = branch_to(successor_map(bd), m.a, m.d).edges;
    if (c.path.front() != m.edge_a || c.path.back() != m.edge_d)
      throw std::logic_error("martingale: branch does not run from a to d");
    for (std::size_t k = 0; k + 1 < c.path.size(); ++k) {
      int pe = dom.head_edge(c.path[k]);
      if (pe < 0) {
        c.step.push_back({-1, 0});
        continue;
      }
      int open = c.path[k + 1] == dom.right_out(c.path[k]);
      if (!open && c.path[k + 1] != Domain::left_out(c.path[k]))
        throw std::logic_error("martingale: branch step leaves the vertex");
      if (su.free_bit[pe] < 0) {
        if (!open) throw std::logic_error("martingale: branch turns left at a held-open edge");
        c.step.push_back({-1, 0});
      } else {
        c.step.push_back({su.free_bit[pe], open});
      }
    }
    su.cfgs.push_back(std::move(c));
  }
  return su;
}

// the tip path[t] sits at a bc vertex, entered from the interior
inline int bc_position(const MartingaleSetup& su, const Domain& dom, int tip) {
  int pe = dom.head_edge(tip);
  if (pe < 0) return -1;
  int u = su.bc_vertex[pe];
  if (u < 0 || tip == dom.boundary_edge(u)) return -1;
  return u;
}

struct SlitValue {
  double M = 0;
  std::vector<cplx> N;
};

inline SlitValue slit_value(const MartingaleSetup& su, const std::vector<int>& members, cplx theta, int nm) {
  SlitValue v;
  v.N.assign(nm, cplx(0));
  double z = 0;
  for (int i : members) {
    auto& c = su.cfgs[i];
    z += c.p;
    if (c.ad_cb) v.M += c.p;
    for (auto& [e, t] : c.contrib) v.N[e] += c.p * t;
  }
  if (z <= 0) throw std::logic_error("martingale: empty slit measure");
  v.M /= z;
  for (auto& x : v.N) x *= theta / z;
  return v;
}

}  // namespace detail

namespace detail {
// Edges whose black square is connected to the cd arc through present edges
// outside the removed set; exterior white squares are endpoints, not passages.
inline std::vector<char> visible_from_cd(const Domain4& m, const std::vector<char>& removed) {
  const Domain& dom = m.domain;
  int nb = dom.num_blacks();
  std::vector<char> seen_b(nb, 0), vis(dom.num_medial(), 0);
  std::unordered_map<std::uint64_t, char> seen_w;
  auto interior_white = [&](LatticeCoord w) {
    for (int k = 0; k < 4; ++k)
      if (dom.find_black({w.x2 - side_dx2[k], w.y2 - side_dy2[k]}) < 0) return false;
    return true;
  };
  std::vector<int> queue{Domain::black_of(m.edge_d)};
  seen_b[queue[0]] = 1;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    int b = queue[qi];
    for (int s = 0; s < 4; ++s) {
      int e = 4 * b + s;
      if (!m.present[e] || removed[e]) continue;
      auto w = dom.white_across(e);
      if (!interior_white(w) || seen_w[key(w.x2, w.y2)]) continue;
      seen_w[key(w.x2, w.y2)] = 1;
      for (int k = 0; k < 4; ++k) {
        int o = dom.find_black({w.x2 - side_dx2[k], w.y2 - side_dy2[k]});
        int oe = 4 * o + k;
        if (!m.present[oe] || removed[oe] || seen_b[o]) continue;
        seen_b[o] = 1;
        queue.push_back(o);
      }
    }
  }
  for (int e = 0; e < dom.num_medial(); ++e) vis[e] = seen_b[Domain::black_of(e)];
  return vis;
}
}  // namespace detail

// Exhaustive check of E[M_{t+1} | F_t] = M_t and E[N_{t+1}(e) | F_t] = N_t(e)
// over every prefix of the branch from a to d. The law of the next step comes
// from the four-point measure; M+ and N at a prefix come from the slit domain,
// which is the four-point measure with the primal states fixed by the prefix.
// N(e) is checked while e is still in the slit domain after the step and, at
// a touch of bc, while e is still visible from cd; the part cut off by the
// touch scales with M+ instead.
inline MartingaleReport mart_step_check(const Domain4& m, const ModelParams& mp, const CoinLaws& coins = {},
                                        int max_steps = -1, int cap = enumeration_cap_default()) {
  const Domain& dom = m.domain;
  int nm = dom.num_medial();
  auto su = detail::martingale_setup(m, mp, cap);
  cplx theta = line_unit(m.edge_d);
  MartingaleReport rep;
  std::vector<char> in_prefix(nm, 0);

  // configs sharing the prefix (branch identity) and those consistent with
  // its constraints (slit measure) are carried down the recursion; edges
  // strictly before the tip are marked in in_prefix
  std::function<detail::SlitValue(const std::vector<int>&, const std::vector<int>&, int, std::uint64_t, std::uint64_t)>
      visit = [&](const std::vector<int>& same, const std::vector<int>& slit, int t, std::uint64_t cmask,
                  std::uint64_t cval) -> detail::SlitValue {
    auto here = detail::slit_value(su, slit, theta, nm);
    const auto& path0 = su.cfgs[same[0]].path;
    int tip = path0[t];
    if (std::size_t(t) + 1 == path0.size() || (max_steps >= 0 && t >= max_steps)) return here;
    ++rep.prefixes;
    double p_here = 0;
    std::vector<std::pair<int, std::vector<int>>> groups;  // by next edge
    for (int i : same) {
      auto& c = su.cfgs[i];
      if (std::size_t(t) + 1 >= c.path.size()) throw std::logic_error("martingale: prefix shared by a finished branch");
      p_here += c.p;
      int nx = c.path[t + 1];
      auto it = std::find_if(groups.begin(), groups.end(), [&](auto& g) { return g.first == nx; });
      if (it == groups.end()) it = groups.insert(groups.end(), {nx, {}});
      it->second.push_back(i);
    }
    int u = detail::bc_position(su, dom, tip);
    if (u >= 0 && (groups.size() != 1 || groups[0].first != dom.boundary_f2(u)))
      throw std::logic_error("martingale: branch does not turn into the domain at a bc vertex");
    in_prefix[tip] = 1;
    double EM = 0;
    std::vector<cplx> EN(nm, cplx(0));
    for (auto& [nx, mem] : groups) {
      auto [bit, open] = su.cfgs[mem[0]].step[t];
      std::uint64_t nmask = cmask, nval = cval;
      std::vector<int> nslit;
      if (bit >= 0) {
        std::uint64_t bv = std::uint64_t(1) << bit;
        if ((cmask & bv) && (((cval & bv) != 0) != bool(open))) throw std::logic_error("martingale: contradictory prefix");
        nmask |= bv;
        if (open) nval |= bv;
        for (int i : slit)
          if (((su.cfgs[i].mask & bv) != 0) == bool(open)) nslit.push_back(i);
      } else {
        nslit = slit;
      }
      double pc = 0;
      for (int i : mem) pc += su.cfgs[i].p;
      auto child = visit(mem, nslit, t + 1, nmask, nval);
      double w = pc / p_here;
      EM += w * child.M;
      for (int e = 0; e < nm; ++e) EN[e] += w * child.N[e];
    }
    double coef = u >= 0 ? coins.xi_mean() : 1.0;
    double rm = std::abs(coef * EM - here.M);
    rep.max_residual_M = std::max(rep.max_residual_M, rm);
    if (u >= 0) {
      ++rep.bc_steps;
      if (here.M > 1e-300) {
        rep.min_bc_ratio = std::min(rep.min_bc_ratio, EM / here.M);
        rep.max_bc_ratio = std::max(rep.max_bc_ratio, EM / here.M);
      }
    } else {
      rep.max_residual_M_plain = std::max(rep.max_residual_M_plain, rm);
    }
    std::vector<char> vis;
    if (u >= 0) {
      std::vector<char> removed = in_prefix;
      removed[dom.boundary_f2(u)] = 0;  // the new tip stays
      vis = detail::visible_from_cd(m, removed);
    }
    for (int e = 0; e < nm; ++e) {
      if (!m.present[e] || in_prefix[e] || (u >= 0 && !vis[e])) continue;
      double rn = std::abs(EN[e] - here.N[e]);
      rep.max_residual_N = std::max(rep.max_residual_N, rn);
      if (u < 0) rep.max_residual_N_plain = std::max(rep.max_residual_N_plain, rn);
    }
    in_prefix[tip] = 0;
    return here;
  };

  std::vector<int> all(su.cfgs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  visit(all, all, 0, 0, 0);
  return rep;
}

// One realisation: sample the configuration and the coins, and record M+, M
// and N(edge) along the branch.
inline MartingaleTrace martingale_trace(const Domain4& m, const ModelParams& mp, int edge, std::uint64_t seed,
                                        const CoinLaws& coins = {}, int cap = enumeration_cap_default()) {
  const Domain& dom = m.domain;
  auto su = detail::martingale_setup(m, mp, cap);
  CounterRng rng(seed, 0);
  double u = rng.uniform(), acc = 0;
  std::size_t pick = su.cfgs.size() - 1;
  for (std::size_t i = 0; i < su.cfgs.size(); ++i) {
    acc += su.cfgs[i].p;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  auto& c = su.cfgs[pick];
  cplx theta = line_unit(m.edge_d);
  MartingaleTrace tr;
  tr.path = c.path;
  std::vector<int> slit(su.cfgs.size());
  for (std::size_t i = 0; i < slit.size(); ++i) slit[i] = int(i);
  double sign = 1;
  bool swallowed = false;
  for (std::size_t t = 0; t < c.path.size(); ++t) {
    auto v = detail::slit_value(su, slit, theta, dom.num_medial());
    tr.times.push_back(int(t));
    tr.M_plus.push_back(v.M);
    tr.M.push_back(sign * v.M);
    tr.N.push_back(swallowed ? cplx(std::numeric_limits<double>::quiet_NaN(), 0) : v.N.at(edge));
    if (t + 1 == c.path.size()) break;
    if (c.path[t] == edge) swallowed = true;
    if (detail::bc_position(su, dom, c.path[t]) >= 0) {
      tr.bc_visits.push_back(int(t));
      if (rng.uniform() >= coins.xi_plus()) sign = -sign;
    }
    auto [bit, open] = c.step[t];
    if (bit >= 0) {
      std::vector<int> keep;
      for (int i : slit)
        if (((su.cfgs[i].mask >> bit) & 1) == std::uint64_t(open)) keep.push_back(i);
      slit.swap(keep);
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Dumps

inline std::string observable_csv(const ObservableField& f, const Domain& dom) {
  std::ostringstream os;
  os.precision(17);
  os << "x2,y2,dir,re,im\n";
  for (int e = 0; e < dom.num_medial(); ++e) {
    if (!f.present[e]) continue;
    auto t = dom.medial_tail(e);
    os << t.x2 << ',' << t.y2 << ',' << dir_name(Dir(Domain::heading(e))) << ',' << f.edge[e].real() << ','
       << f.edge[e].imag() << '\n';
  }
  return os.str();
}

inline std::string height_csv(const HeightField& H) {
  std::ostringstream os;
  os.precision(17);
  os << "x2,y2,colour,H\n";
  for (int b = 0; b < H.dom->num_blacks(); ++b)
    if (!std::isnan(H.primal[b])) os << H.dom->black(b).x2 << ',' << H.dom->black(b).y2 << ",black," << H.primal[b] << '\n';
  for (std::size_t w = 0; w < H.dual.size(); ++w)
    if (!std::isnan(H.dual[w])) os << H.dual_sites[w].x2 << ',' << H.dual_sites[w].y2 << ",white," << H.dual[w] << '\n';
  return os.str();
}

}  // namespace fkl
