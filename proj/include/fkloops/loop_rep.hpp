#pragma once
// Loop representation of FK configurations on the medial lattice.
//
// The successor of a medial edge is decided at its head: an open primal edge
// sends the loop across to the neighbouring black square (right turn), a
// closed one keeps it on the same black square (left turn). Loops therefore
// run counterclockwise around primal clusters; the loops touching the inner
// boundary are the outer contours of the clusters containing boundary
// vertices and all turn by +4. The corner resolution at doubly visited medial
// vertices is implicit in the successor map.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fk_sampler.hpp"
#include "lattice_domain.hpp"

namespace fkl {

struct Loop {
  std::vector<int> edges;  // medial edge ids in loop order
  int turning = 0;         // total quarter turns, +4 or -4
  bool clockwise() const { return turning < 0; }
};

struct LoopEnsemble {
  std::vector<Loop> loops;
};

// Successor map of a configuration, restricted to the present medial edges.
class Board {
 public:
  Board(const Domain& dom, const FkConfig& cfg, const std::vector<std::uint8_t>* present = nullptr)
      : dom_(&dom), cfg_(&cfg), present_(present) {
    if (int(cfg.open.size()) != dom.num_edges()) throw std::invalid_argument("board: config shape mismatch");
  }
  const Domain& domain() const { return *dom_; }
  const FkConfig& config() const { return *cfg_; }
  bool has(int e) const { return !present_ || (*present_)[e]; }
  bool open_at_head(int e) const {
    int pe = dom_->head_edge(e);
    return pe >= 0 && cfg_->open[pe];
  }
  // -1 when the successor is not present (end of an open path)
  int next(int e) const {
    int n = dom_->succ(e, open_at_head(e));
    return has(n) ? n : -1;
  }

 private:
  const Domain* dom_;
  const FkConfig* cfg_;
  const std::vector<std::uint8_t>* present_;
};

inline int path_turning(const std::vector<int>& edges, bool cyclic) {
  int t = 0, n = int(edges.size());
  for (int i = 0; i + 1 < n; ++i) t += quarter_turn(Domain::heading(edges[i]), Domain::heading(edges[i + 1]));
  if (cyclic && n > 0) t += quarter_turn(Domain::heading(edges[n - 1]), Domain::heading(edges[0]));
  return t;
}

namespace detail {
inline Loop make_loop(std::vector<int> edges) {
  auto it = std::min_element(edges.begin(), edges.end());
  std::rotate(edges.begin(), it, edges.end());
  Loop l;
  l.turning = path_turning(edges, true);
  l.edges = std::move(edges);
  return l;
}

// cycles of the successor map among present edges not in `used`
inline std::vector<Loop> trace_cycles(const Board& bd, std::vector<char>& used) {
  std::vector<Loop> out;
  int nm = bd.domain().num_medial();
  for (int s = 0; s < nm; ++s) {
    if (used[s] || !bd.has(s)) continue;
    std::vector<int> cyc;
    int e = s;
    do {
      if (e < 0 || used[e]) throw std::logic_error("trace_cycles: successor map is not a permutation");
      used[e] = 1;
      cyc.push_back(e);
      e = bd.next(e);
    } while (e != s);
    out.push_back(make_loop(std::move(cyc)));
  }
  return out;
}
}  // namespace detail

inline LoopEnsemble extract_loops(const Domain& dom, const FkConfig& cfg) {
  Board bd(dom, cfg);
  std::vector<char> used(dom.num_medial(), 0);
  LoopEnsemble ens;
  ens.loops = detail::trace_cycles(bd, used);
  std::sort(ens.loops.begin(), ens.loops.end(), [](const Loop& a, const Loop& b) { return a.edges[0] < b.edges[0]; });
  return ens;
}

// The same loops traced from the dual side: edges reversed, white squares on
// the left. A closed dual edge (open primal edge) keeps the path on the same
// white square; an open dual edge sends it to the next white square.
inline LoopEnsemble extract_loops_dual(const Domain& dom, const FkConfig& dual) {
  if (int(dual.open.size()) != dom.num_edges()) throw std::invalid_argument("extract_loops_dual: shape mismatch");
  int nm = dom.num_medial();
  // medial edge bordering white w on its side t
  auto edge_of_white_side = [&](LatticeCoord w, int t) {
    int b = dom.find_black({w.x2 + 2 * detail::side_dx[t], w.y2 + 2 * detail::side_dy[t]});
    return b < 0 ? -1 : 4 * b + ((t + 2) & 3);
  };
  auto white_side_of = [&](int e) { return (Domain::side_of(e) + 2) & 3; };
  std::vector<char> used(nm, 0);
  LoopEnsemble ens;
  for (int s = 0; s < nm; ++s) {
    if (used[s]) continue;
    std::vector<int> cyc;
    int e = s;
    do {
      if (e < 0 || used[e]) throw std::logic_error("extract_loops_dual: not a permutation");
      used[e] = 1;
      cyc.push_back(e);
      LatticeCoord w = dom.white_across(e);
      int t = white_side_of(e);
      // reversed edge runs along side t of w, counterclockwise around w, ending at corner t of w
      int pe = dom.tail_edge(e);
      bool dual_open = pe < 0 || dual.open[pe];
      if (!dual_open) {
        e = edge_of_white_side(w, (t + 1) & 3);
      } else {
        LatticeCoord w2{w.x2 + 2 * detail::corner_dx[t], w.y2 + 2 * detail::corner_dy[t]};
        e = edge_of_white_side(w2, (t + 3) & 3);
      }
    } while (e != s);
    std::reverse(cyc.begin(), cyc.end());
    ens.loops.push_back(detail::make_loop(std::move(cyc)));
  }
  std::sort(ens.loops.begin(), ens.loops.end(), [](const Loop& a, const Loop& b) { return a.edges[0] < b.edges[0]; });
  return ens;
}

// undirected comparison: the same edge sets per loop
inline bool same_edge_sets(const LoopEnsemble& x, const LoopEnsemble& y) {
  auto key = [](const LoopEnsemble& e) {
    std::vector<std::vector<int>> k;
    for (auto& l : e.loops) {
      auto v = l.edges;
      std::sort(v.begin(), v.end());
      k.push_back(std::move(v));
    }
    std::sort(k.begin(), k.end());
    return k;
  };
  return key(x) == key(y);
}

struct DcnilReport {
  bool ok = true;
  std::string bullet;  // "coverage", "disjointness" or "non-intersection"
  std::string detail;
};

// Checks that loops (and open paths, if given) cover every present medial
// edge exactly once, and that successive edges are legal turns which pair up
// without crossing at every medial vertex.
inline DcnilReport validate_dcnil(const LoopEnsemble& ens, const Domain& dom,
                                  const std::vector<std::vector<int>>& paths = {},
                                  const std::vector<std::uint8_t>* present = nullptr) {
  int nm = dom.num_medial();
  std::vector<int> count(nm, 0), next(nm, -1);
  auto fail = [](const char* b, const std::string& d) { return DcnilReport{false, b, d}; };
  auto add = [&](const std::vector<int>& seq, bool cyclic) -> std::string {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      int e = seq[i];
      if (e < 0 || e >= nm) return "edge id out of range";
      ++count[e];
      if (i + 1 < seq.size())
        next[e] = seq[i + 1];
      else if (cyclic)
        next[e] = seq[0];
    }
    return {};
  };
  for (auto& l : ens.loops)
    if (auto s = add(l.edges, true); !s.empty()) return fail("coverage", s);
  for (auto& p : paths)
    if (auto s = add(p, false); !s.empty()) return fail("coverage", s);
  for (int e = 0; e < nm; ++e) {
    bool want = !present || (*present)[e];
    if (want && count[e] == 0) return fail("coverage", "medial edge " + std::to_string(e) + " not covered");
    if (!want && count[e] > 0) return fail("coverage", "medial edge " + std::to_string(e) + " is not present");
  }
  for (int e = 0; e < nm; ++e)
    if (count[e] > 1) return fail("disjointness", "medial edge " + std::to_string(e) + " used " + std::to_string(count[e]) + " times");
  // turn type per edge: 0 left, 1 right
  std::vector<int> turn(nm, -1);
  for (int e = 0; e < nm; ++e) {
    int f = next[e];
    if (f < 0) continue;
    if (f == Domain::left_out(e))
      turn[e] = 0;
    else if (f == dom.right_out(e))
      turn[e] = 1;
    else
      return fail("non-intersection", "edge " + std::to_string(e) + " is not followed by a turn at its head");
  }
  for (int e = 0; e < nm; ++e) {
    int o = dom.other_in(e);
    if (o < 0 || turn[e] < 0 || turn[o] < 0) continue;
    if (turn[e] != turn[o])
      return fail("non-intersection", "passages cross at the head of edge " + std::to_string(e));
  }
  return {};
}

inline double loop_weight(int num_loops) { return std::pow(kSqrt2, num_loops); }
inline double loop_weight(const LoopEnsemble& ens) { return loop_weight(int(ens.loops.size())); }

inline bool touches_boundary(const Loop& l, const Domain& dom) {
  for (int e : l.edges)
    if (dom.is_boundary_edge(e)) return true;
  return false;
}

inline LoopEnsemble boundary_loops(const LoopEnsemble& ens, const Domain& dom) {
  LoopEnsemble out;
  for (auto& l : ens.loops)
    if (touches_boundary(l, dom)) out.loops.push_back(l);
  return out;
}

// ---------------------------------------------------------------------------
// Excursions of a boundary loop. A touch is a maximal run of boundary edges;
// the excursions are the runs of interior edges between touches. The top arc
// is the excursion leaving the touch farthest from the root (counting forward
// along the boundary, the root edge itself last).

struct TopBottom {
  std::vector<int> top;
  std::vector<std::vector<int>> bottom;
  int touches = 0;
};

inline TopBottom top_bottom_split(const Loop& loop, const Domain& dom, int root) {
  int n = int(loop.edges.size());
  int L = dom.boundary_length();
  auto rho = [&](int e) {
    int r = dom.mod(dom.boundary_pos(e) - root);
    return r == 0 ? L : r;
  };
  int best = -1;
  for (int i = 0; i < n; ++i) {
    int e = loop.edges[i];
    if (dom.is_boundary_edge(e) && (best < 0 || rho(e) > rho(loop.edges[best]))) best = i;
  }
  if (best < 0) throw std::invalid_argument("top_bottom_split: loop does not touch the boundary");
  std::vector<int> seq(n);
  for (int i = 0; i < n; ++i) seq[i] = loop.edges[(best + 1 + i) % n];
  TopBottom tb;
  std::vector<std::vector<int>> exc;
  bool in_run = dom.is_boundary_edge(seq.back());
  for (int e : seq) {
    bool b = dom.is_boundary_edge(e);
    if (b && !in_run) ++tb.touches;
    if (!b) {
      if (in_run || exc.empty()) exc.emplace_back();
      exc.back().push_back(e);
    }
    in_run = b;
  }
  if (tb.touches == 0) tb.touches = 1;  // the loop runs along the boundary only
  if (!exc.empty()) {
    tb.top = std::move(exc[0]);
    for (std::size_t i = 1; i < exc.size(); ++i) tb.bottom.push_back(std::move(exc[i]));
  }
  return tb;
}

// ---------------------------------------------------------------------------
// Four-point decomposition: the open paths from a and c, and the curve
// gamma_hat from c to d, which uses the external arc from b to a when the path
// from c exits at b.

enum class Pattern { ab_cd, ad_cb };

inline const char* pattern_name(Pattern p) { return p == Pattern::ab_cd ? "(ab)(cd)" : "(ad)(cb)"; }

struct ArcDecomposition {
  std::vector<int> gamma1;  // from a
  std::vector<int> gamma2;  // from c
  Pattern pattern = Pattern::ab_cd;
  std::vector<int> gamma_hat;
  int alpha_index = -1;      // gamma_hat[alpha_index] is the first edge after the external arc
  std::vector<int> wfwd;     // quarter turns from gamma_hat[k] forward to the edge at d
  int closed_loops = 0;
};

inline int winding_across_alpha(const Domain4& m) { return m.alpha_turns; }

inline ArcDecomposition arc_decompose(const Domain4& m, const FkConfig& cfg) {
  const Domain& dom = m.domain;
  if (int(cfg.open.size()) != dom.num_edges()) throw std::invalid_argument("arc_decompose: config shape mismatch");
  for (int i = 0; i < dom.num_edges(); ++i)
    if (m.forced[i] == 1 && !cfg.open[i])
      throw std::invalid_argument("arc_decompose: held-open boundary edge " + std::to_string(i) + " is closed");
  Board bd(dom, cfg, &m.present);
  std::vector<char> used(dom.num_medial(), 0);
  auto trace = [&](int start) {
    std::vector<int> p;
    for (int e = start; e >= 0; e = bd.next(e)) {
      if (used[e]) throw std::logic_error("arc_decompose: path revisits an edge");
      used[e] = 1;
      p.push_back(e);
    }
    return p;
  };
  ArcDecomposition ad;
  ad.gamma1 = trace(m.edge_a);
  ad.gamma2 = trace(m.edge_c);
  int e1 = ad.gamma1.back(), e2 = ad.gamma2.back();
  bool ok = (e2 == m.edge_d && e1 == m.edge_b) || (e2 == m.edge_b && e1 == m.edge_d);
  if (!ok) throw std::logic_error("arc_decompose: paths do not end at the sinks");
  ad.closed_loops = int(detail::trace_cycles(bd, used).size());
  ad.gamma_hat = ad.gamma2;
  if (e2 == m.edge_d) {
    ad.pattern = Pattern::ab_cd;
  } else {
    ad.pattern = Pattern::ad_cb;
    ad.alpha_index = int(ad.gamma_hat.size());
    ad.gamma_hat.insert(ad.gamma_hat.end(), ad.gamma1.begin(), ad.gamma1.end());
  }
  int n = int(ad.gamma_hat.size());
  ad.wfwd.assign(n, 0);
  for (int k = n - 2; k >= 0; --k) {
    int t = (k + 1 == ad.alpha_index)
                ? m.alpha_turns
                : quarter_turn(Domain::heading(ad.gamma_hat[k]), Domain::heading(ad.gamma_hat[k + 1]));
    ad.wfwd[k] = ad.wfwd[k + 1] + t;
  }
  return ad;
}

// Loop weight of a four-point configuration with the external arcs: the arc
// from b to a always, the arc from d to c drawn only for the (ab)(cd) pattern
// in which it closes a loop.
inline double loop_weight4(const ArcDecomposition& ad, bool external_cd = true) {
  int k = ad.closed_loops + ((external_cd && ad.pattern == Pattern::ab_cd) ? 1 : 0);
  return loop_weight(k);
}

// JSON-friendly dump helpers
inline std::string loop_to_json(const Loop& l, const Domain& dom) {
  std::ostringstream os;
  os << "{\"turning\":" << l.turning << ",\"clockwise\":" << (l.clockwise() ? "true" : "false") << ",\"edges\":[";
  for (std::size_t i = 0; i < l.edges.size(); ++i) {
    auto t = dom.medial_tail(l.edges[i]);
    os << (i ? "," : "") << "[" << t.x2 << "," << t.y2 << ",\"" << dir_name(Dir(Domain::heading(l.edges[i]))) << "\"]";
  }
  os << "]}";
  return os.str();
}

}  // namespace fkl
