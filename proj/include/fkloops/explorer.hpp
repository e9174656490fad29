#pragma once
// Exploration tree of the boundary touching loops.
//
// Boundary positions are measured from the root r: rho(i) = i - r mod L, with
// the edge c_r arriving at the root counted last (rho = L). F_w is the set of
// boundary edges with rho >= rho(w). A branch follows the loop through the
// root edge c_{r+1}; at the first edge of F_w it either stops (the edge f_w =
// c_w) or jumps to the other outgoing edge at the tail of that edge and
// follows the loop through it.
//
// Roots sit at exterior corners, where c_r is followed by c_{r+1} in every
// configuration. The branch to the root itself is the root loop cut open at
// the root.

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice_domain.hpp"
#include "loop_rep.hpp"

namespace fkl {

struct SuccessorMap {
  const Domain* dom = nullptr;
  std::vector<int> next;  // -1 where an open path ends
};

inline SuccessorMap successor_map(const Board& bd) {
  const Domain& d = bd.domain();
  SuccessorMap s{&d, std::vector<int>(d.num_medial(), -1)};
  for (int e = 0; e < d.num_medial(); ++e)
    if (bd.has(e)) s.next[e] = bd.next(e);
  return s;
}

inline SuccessorMap successor_map(const LoopEnsemble& ens, const Domain& dom,
                                  const std::vector<std::vector<int>>& paths = {}) {
  SuccessorMap s{&dom, std::vector<int>(dom.num_medial(), -1)};
  for (auto& l : ens.loops)
    for (std::size_t i = 0; i < l.edges.size(); ++i) s.next[l.edges[i]] = l.edges[(i + 1) % l.edges.size()];
  for (auto& p : paths)
    for (std::size_t i = 0; i + 1 < p.size(); ++i) s.next[p[i]] = p[i + 1];
  return s;
}

struct Branch {
  int target = -1;
  std::vector<int> edges;
  std::vector<int> jump_points;  // boundary positions
};

inline int root_edge(const Domain& dom, int root) {
  if (root < 0 || root >= dom.boundary_length()) throw std::invalid_argument("explorer: root is not a boundary position");
  if (!dom.boundary_forced(root)) throw std::invalid_argument("explorer: root must be an exterior corner");
  if (dom.has_pinch()) throw std::invalid_argument("explorer: the boundary must be a simple curve");
  return dom.boundary_edge(root + 1);
}

namespace detail {
struct Frame {
  const SuccessorMap& s;
  const Domain& dom;
  int root, L;
  int rho(int pos) const {
    int r = dom.mod(pos - root);
    return r == 0 ? L : r;
  }
  bool in_f(int e, int thr) const {
    int p = dom.boundary_pos(e);
    return p >= 0 && rho(p) >= thr;
  }
};
}  // namespace detail

// The exploration process from the root to w, run literally.
inline Branch branch_to(const SuccessorMap& s, int root, int w) {
  const Domain& dom = *s.dom;
  int L = dom.boundary_length();
  if (w < 0 || w >= L) throw std::invalid_argument("branch_to: target is not a boundary position");
  int e0 = root_edge(dom, root);
  detail::Frame fr{s, dom, root, L};
  int thr = fr.rho(w), fend = dom.boundary_edge(w);
  Branch b;
  b.target = w;
  b.edges.push_back(e0);
  if (e0 == fend) return b;
  int cur = e0;
  std::size_t guard = 2 * s.next.size() + 4;
  while (true) {
    int nxt = s.next[cur];
    if (nxt < 0) throw std::logic_error("branch_to: path ended before reaching the target");
    if (fr.in_f(nxt, thr)) {
      if (nxt == fend) {
        b.edges.push_back(nxt);
        return b;
      }
      int u = dom.mod(dom.boundary_pos(nxt) - 1);
      if (dom.boundary_forced(u)) throw std::logic_error("branch_to: jump at an exterior corner");
      b.jump_points.push_back(u);
      nxt = dom.boundary_f2(u);
    }
    b.edges.push_back(nxt);
    cur = nxt;
    if (b.edges.size() > guard) throw std::logic_error("branch_to: process does not terminate");
  }
}

struct ExplorationTree {
  struct Node {
    int edge;
    int parent;
  };
  const Domain* dom = nullptr;
  int root = -1;
  std::vector<Node> nodes;
  std::vector<int> target_node;       // per boundary position: node of f_w
  std::vector<int> branching_points;  // boundary positions, increasing

  Branch branch(int w) const {
    Branch b;
    b.target = w;
    for (int n = target_node.at(w); n >= 0; n = nodes[n].parent) b.edges.push_back(nodes[n].edge);
    std::reverse(b.edges.begin(), b.edges.end());
    return b;
  }
};

// All branches at once. Going from target w to the target just before it,
// the branch either already contains the new f, and is cut there, or it
// loses its last edge and jumps at the tail of that edge.
inline ExplorationTree loops_to_tree(const SuccessorMap& s, int root) {
  const Domain& dom = *s.dom;
  int L = dom.boundary_length(), nm = dom.num_medial();
  int e0 = root_edge(dom, root);
  detail::Frame fr{s, dom, root, L};
  ExplorationTree t;
  t.dom = &dom;
  t.root = root;
  t.target_node.assign(L, -1);
  std::vector<int> st_edge, st_node, at(nm, -1);
  auto push = [&](int e) {
    if (at[e] >= 0) throw std::logic_error("loops_to_tree: branch revisits an edge");
    int parent = st_node.empty() ? -1 : st_node.back();
    t.nodes.push_back({e, parent});
    at[e] = int(st_edge.size());
    st_edge.push_back(e);
    st_node.push_back(int(t.nodes.size()) - 1);
  };
  auto pop = [&] {
    at[st_edge.back()] = -1;
    st_edge.pop_back();
    st_node.pop_back();
  };
  std::vector<char> jumped(L, 0);
  auto run = [&](int thr) {
    int fend = dom.boundary_edge(root + thr);
    int cur = st_edge.back();
    while (cur != fend) {
      int nxt = s.next[cur];
      if (nxt < 0) throw std::logic_error("loops_to_tree: path ended before reaching the target");
      if (fr.in_f(nxt, thr) && nxt != fend) {
        int u = dom.mod(dom.boundary_pos(nxt) - 1);
        if (dom.boundary_forced(u)) throw std::logic_error("loops_to_tree: jump at an exterior corner");
        jumped[u] = 1;
        nxt = dom.boundary_f2(u);
      }
      push(nxt);
      cur = nxt;
    }
  };
  push(e0);
  run(L);
  t.target_node[root] = st_node.back();
  for (int thr = L - 1; thr >= 1; --thr) {
    int w = dom.mod(root + thr);
    int fw = dom.boundary_edge(w);
    if (at[fw] >= 0) {
      while (st_edge.back() != fw) pop();
    } else {
      pop();
      if (dom.boundary_forced(w)) throw std::logic_error("loops_to_tree: jump at an exterior corner");
      jumped[w] = 1;
      push(dom.boundary_f2(w));
      run(thr);
    }
    t.target_node[w] = st_node.back();
  }
  for (int u = 0; u < L; ++u)
    if (jumped[u]) t.branching_points.push_back(u);
  return t;
}

// Boundary loops from the tree alone. The root loop is the branch to the
// root. The other loops sit at the branching points: vertices w where the
// branches split after e1 into f1 = c_{w+1} and f2; the loop is the part of
// T_w from f2 to f_w.
inline LoopEnsemble tree_to_loops(const ExplorationTree& t) {
  if (!t.dom) throw std::invalid_argument("tree_to_loops: empty tree");
  const Domain& dom = *t.dom;
  int L = dom.boundary_length(), nn = int(t.nodes.size());
  if (int(t.target_node.size()) != L) throw std::invalid_argument("tree_to_loops: target table has the wrong size");
  // euler tour intervals
  std::vector<std::vector<int>> kids(nn);
  std::vector<int> roots;
  for (int i = 0; i < nn; ++i) {
    int p = t.nodes[i].parent;
    if (p >= i) throw std::invalid_argument("tree_to_loops: parent after child");
    (p < 0 ? roots : kids[p]).push_back(i);
  }
  std::vector<int> tin(nn), tout(nn), node_of(dom.num_medial(), -1);
  int clock = 0;
  std::vector<std::pair<int, std::size_t>> st;
  for (int r : roots) {
    st.push_back({r, 0});
    tin[r] = clock++;
    while (!st.empty()) {
      auto& [v, k] = st.back();
      if (k < kids[v].size()) {
        int c = kids[v][k++];
        tin[c] = clock++;
        st.push_back({c, 0});
      } else {
        tout[v] = clock++;
        st.pop_back();
      }
    }
  }
  for (int i = 0; i < nn; ++i) {
    int e = t.nodes[i].edge;
    if (node_of[e] >= 0) throw std::invalid_argument("tree_to_loops: an edge occurs twice in the tree");
    node_of[e] = i;
  }
  auto ancestor = [&](int a, int b) { return tin[a] < tin[b] && tout[b] < tout[a]; };
  auto segment = [&](int from_excl, int to) {
    std::vector<int> seg;
    for (int n = to; n != from_excl; n = t.nodes[n].parent) {
      if (n < 0) throw std::invalid_argument("tree_to_loops: broken ancestry");
      seg.push_back(t.nodes[n].edge);
    }
    std::reverse(seg.begin(), seg.end());
    return seg;
  };
  LoopEnsemble out;
  out.loops.push_back(detail::make_loop(segment(-1, t.target_node[t.root])));
  std::vector<int> found;
  for (int w = 0; w < L; ++w) {
    if (w == t.root || dom.boundary_forced(w)) continue;
    int tn = t.target_node[w];
    if (tn < 0 || t.nodes[tn].edge != dom.boundary_edge(w)) throw std::invalid_argument("tree_to_loops: branch does not end at f_w");
    int n1 = node_of[dom.boundary_e1(w)];
    int nf1 = node_of[dom.boundary_edge(w + 1)], nf2 = node_of[dom.boundary_f2(w)];
    if (n1 < 0 || nf1 < 0 || nf2 < 0 || t.nodes[nf1].parent != n1 || t.nodes[nf2].parent != n1) continue;
    if (nf2 != tn && !ancestor(nf2, tn)) throw std::invalid_argument("tree_to_loops: T_w does not pass the split at w");
    found.push_back(w);
    out.loops.push_back(detail::make_loop(segment(n1, tn)));
  }
  if (found != t.branching_points) throw std::invalid_argument("tree_to_loops: branching points do not match the tree");
  std::sort(out.loops.begin(), out.loops.end(), [](const Loop& a, const Loop& b) { return a.edges[0] < b.edges[0]; });
  return out;
}

struct IndependenceResult {
  bool ok = true;
  int divergence = -1;  // index of the first edge of F_{w,w'} in either branch
};

// T_w and T_w' agree before the first edge of F_{w,w'} (positions from w to
// w' counting forward from the root).
inline IndependenceResult check_target_independence(const Branch& tw, const Branch& tw2, const Domain& dom, int root) {
  int L = dom.boundary_length();
  auto rho = [&](int p) {
    int r = dom.mod(p - root);
    return r == 0 ? L : r;
  };
  int lo = rho(tw.target), hi = rho(tw2.target);
  if (lo > hi) throw std::invalid_argument("check_target_independence: targets out of order");
  auto in_fww = [&](int e) {
    int p = dom.boundary_pos(e);
    return p >= 0 && rho(p) >= lo && rho(p) <= hi;
  };
  IndependenceResult r;
  std::size_t n = std::max(tw.edges.size(), tw2.edges.size());
  for (std::size_t k = 0; k < n; ++k) {
    bool a = k < tw.edges.size() && in_fww(tw.edges[k]);
    bool b = k < tw2.edges.size() && in_fww(tw2.edges[k]);
    if (a || b) {
      r.divergence = int(k);
      return r;
    }
    if (k >= tw.edges.size() || k >= tw2.edges.size() || tw.edges[k] != tw2.edges[k]) return {false, int(k)};
  }
  return r;
}

inline IndependenceResult check_target_independence(const SuccessorMap& s, int root, int w, int w2) {
  return check_target_independence(branch_to(s, root, w), branch_to(s, root, w2), *s.dom, root);
}

// signed quarter turns from path[from] to path[to]
inline int winding(const std::vector<int>& path, int from, int to) {
  if (from < 0 || to >= int(path.size()) || from > to) throw std::out_of_range("winding: index out of range");
  int w = 0;
  for (int k = from; k < to; ++k) w += quarter_turn(Domain::heading(path[k]), Domain::heading(path[k + 1]));
  return w;
}

// winding along gamma_hat reversed, from the edge at d back to gamma_hat[k]
inline int winding_from_d(const ArcDecomposition& ad, int k) {
  if (k < 0 || k >= int(ad.wfwd.size())) throw std::out_of_range("winding_from_d: index out of range");
  return -ad.wfwd[k];
}

inline std::string tree_to_json(const ExplorationTree& t) {
  std::ostringstream os;
  os << "{\"root\":" << t.root << ",\"branches\":{";
  for (int w = 0; w < int(t.target_node.size()); ++w) {
    auto b = t.branch(w);
    os << (w ? "," : "") << "\"" << w << "\":[";
    for (std::size_t i = 0; i < b.edges.size(); ++i) os << (i ? "," : "") << b.edges[i];
    os << "]";
  }
  os << "},\"branching_points\":[";
  for (std::size_t i = 0; i < t.branching_points.size(); ++i) os << (i ? "," : "") << t.branching_points[i];
  os << "]}";
  return os.str();
}

}  // namespace fkl
