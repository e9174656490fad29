#pragma once
// Lattices, admissible domains, boundary contours and 4-point markings.
//
// Coordinates are doubled integers. A black vertex (i,j), i+j even, owns the
// unit square centred at (i,j); its corners are medial vertices and its four
// sides are the medial edges that border it. Every medial edge borders one
// black and one white square and is directed with the black square on its
// left, i.e. counterclockwise around black squares.
//
// Medial edge ids: 4*b + s where b is the black square and s the side
// (0 = east, 1 = north, 2 = west, 3 = south). Side s runs from corner s-1 to
// corner s, corners being 0 = NE, 1 = NW, 2 = SW, 3 = SE. The heading of side
// s is the quarter-turn index (s+1)&3 measured from east.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fkl {

enum class Dir : std::uint8_t { E = 0, N = 1, W = 2, S = 3 };

inline const char* dir_name(Dir d) {
  static const char* names[] = {"E", "N", "W", "S"};
  return names[int(d)];
}

enum class Site { black, white, medial, none };

struct LatticeCoord {
  int x2 = 0;
  int y2 = 0;
  bool operator==(const LatticeCoord&) const = default;
};

inline int mod4(int v) { return ((v % 4) + 4) % 4; }

inline Site site_kind(LatticeCoord c) {
  bool ox = (c.x2 & 1) != 0, oy = (c.y2 & 1) != 0;
  if (ox && oy) return Site::medial;
  if (ox || oy) return Site::none;
  int r = mod4(c.x2 + c.y2);
  return r == 0 ? Site::black : Site::white;
}

struct DirectedMedialEdge {
  LatticeCoord tail;
  Dir dir;
  LatticeCoord head() const {
    static const int dx[] = {2, 0, -2, 0}, dy[] = {0, 2, 0, -2};
    return {tail.x2 + dx[int(dir)], tail.y2 + dy[int(dir)]};
  }
  bool operator==(const DirectedMedialEdge&) const = default;
};

namespace detail {
constexpr int corner_dx[4] = {1, -1, -1, 1};
constexpr int corner_dy[4] = {1, 1, -1, -1};
constexpr int side_dx[4] = {1, 0, -1, 0};
constexpr int side_dy[4] = {0, 1, 0, -1};

inline std::uint64_t key(int x2, int y2) {
  return (std::uint64_t(std::uint32_t(x2)) << 32) | std::uint32_t(y2);
}
}  // namespace detail

// +1 for a left turn from e to f, -1 for a right turn, 0 straight.
inline int quarter_turn(int heading_from, int heading_to) {
  int t = mod4(heading_to - heading_from);
  return t == 3 ? -1 : t;
}

class Domain {
 public:
  struct PrimalEdge {
    int u;
    int v;
    int ku;  // corner of u through which the edge passes
  };

  Domain() = default;

  explicit Domain(std::vector<LatticeCoord> blacks) : blacks_(std::move(blacks)) {
    if (blacks_.empty()) throw std::invalid_argument("domain: no black vertices");
    for (int b = 0; b < int(blacks_.size()); ++b) {
      auto c = blacks_[b];
      if (site_kind(c) != Site::black)
        throw std::invalid_argument("domain: (" + std::to_string(c.x2) + "," +
                                    std::to_string(c.y2) + ") is not a black vertex");
      if (!index_.emplace(detail::key(c.x2, c.y2), b).second)
        throw std::invalid_argument("domain: duplicate black vertex");
    }
    build();
  }

  int num_blacks() const { return int(blacks_.size()); }
  int num_edges() const { return int(edges_.size()); }
  int num_medial() const { return 4 * num_blacks(); }
  int num_interior_whites() const { return interior_whites_; }
  const std::vector<LatticeCoord>& blacks() const { return blacks_; }
  const LatticeCoord& black(int b) const { return blacks_[b]; }
  const PrimalEdge& edge(int i) const { return edges_[i]; }
  const std::vector<PrimalEdge>& edges() const { return edges_; }

  int find_black(LatticeCoord c) const {
    auto it = index_.find(detail::key(c.x2, c.y2));
    return it == index_.end() ? -1 : it->second;
  }
  int neighbour(int b, int k) const { return nbr_[b][k]; }
  int corner_edge(int b, int k) const { return corner_edge_[b][k]; }

  // medial edge helpers
  static int black_of(int e) { return e >> 2; }
  static int side_of(int e) { return e & 3; }
  static int heading(int e) { return (side_of(e) + 1) & 3; }
  LatticeCoord corner_point(int b, int k) const {
    return {blacks_[b].x2 + detail::corner_dx[k], blacks_[b].y2 + detail::corner_dy[k]};
  }
  LatticeCoord medial_tail(int e) const { return corner_point(black_of(e), (side_of(e) + 3) & 3); }
  LatticeCoord medial_head(int e) const { return corner_point(black_of(e), side_of(e)); }
  LatticeCoord medial_mid(int e) const {
    auto t = medial_tail(e), h = medial_head(e);
    return {(t.x2 + h.x2) / 2, (t.y2 + h.y2) / 2};
  }
  DirectedMedialEdge medial(int e) const { return {medial_tail(e), Dir(heading(e))}; }
  int find_medial(const DirectedMedialEdge& m) const {
    // the black square lies to the left of the edge
    static const int lx[] = {0, -1, 0, 1}, ly[] = {1, 0, -1, 0};
    auto h = m.head();
    LatticeCoord mid{(m.tail.x2 + h.x2) / 2, (m.tail.y2 + h.y2) / 2};
    int d = int(m.dir);
    LatticeCoord bc{mid.x2 + lx[d], mid.y2 + ly[d]};
    int b = find_black(bc);
    if (b < 0) return -1;
    int s = (d + 3) & 3;
    return 4 * b + s;
  }
  // primal edge whose midpoint is the head of e, -1 at exterior corners
  int head_edge(int e) const { return corner_edge_[black_of(e)][side_of(e)]; }
  bool head_forced(int e) const { return head_edge(e) < 0; }
  int tail_edge(int e) const { return corner_edge_[black_of(e)][(side_of(e) + 3) & 3]; }
  // left turn: keep hugging the same black square
  static int left_out(int e) { return (e & ~3) | ((side_of(e) + 1) & 3); }
  // right turn: cross to the black square on the other side of the head corner
  int right_out(int e) const {
    int b = black_of(e), k = side_of(e), nb = nbr_[b][k];
    return nb < 0 ? -1 : 4 * nb + ((k + 3) & 3);
  }
  // the other incoming edge at the head of e
  int other_in(int e) const {
    int b = black_of(e), k = side_of(e), nb = nbr_[b][k];
    return nb < 0 ? -1 : 4 * nb + ((k + 2) & 3);
  }
  // successor in the loop representation: closed edges send the loop around
  // the black square, open edges across to the neighbouring black square
  int succ(int e, bool open) const {
    return (open && head_edge(e) >= 0) ? right_out(e) : left_out(e);
  }

  // white square across side s of black b, and whether it is interior
  LatticeCoord white_across(int e) const {
    int b = black_of(e), s = side_of(e);
    return {blacks_[b].x2 + 2 * detail::side_dx[s], blacks_[b].y2 + 2 * detail::side_dy[s]};
  }
  bool is_boundary_edge(int e) const { return bpos_[e] >= 0; }

  // inner boundary cycle c_0..c_{L-1}; position i denotes the vertex head(c_i)
  int boundary_length() const { return int(boundary_.size()); }
  const std::vector<int>& boundary() const { return boundary_; }
  int boundary_edge(int i) const { return boundary_[mod(i)]; }
  int boundary_pos(int e) const { return bpos_[e]; }
  int mod(int i) const {
    int L = boundary_length();
    return ((i % L) + L) % L;
  }
  LatticeCoord boundary_vertex(int i) const { return medial_head(boundary_edge(i)); }
  bool boundary_forced(int i) const { return head_forced(boundary_edge(i)); }
  // interior edges at a variable boundary vertex
  int boundary_e1(int i) const { return other_in(boundary_edge(i)); }
  int boundary_f2(int i) const { return left_out(boundary_edge(i)); }
  // positions at which the boundary passes a vertex twice
  bool boundary_pinch(int i) const { return pinch_[mod(i)] != 0; }
  bool has_pinch() const {
    for (char c : pinch_)
      if (c) return true;
    return false;
  }

  const std::vector<DirectedMedialEdge>& outer_boundary() const { return outer_; }

 private:
  void build() {
    int nb = num_blacks();
    nbr_.assign(nb, {-1, -1, -1, -1});
    corner_edge_.assign(nb, {-1, -1, -1, -1});
    for (int b = 0; b < nb; ++b)
      for (int k = 0; k < 4; ++k)
        nbr_[b][k] = find_black({blacks_[b].x2 + 2 * detail::corner_dx[k],
                                 blacks_[b].y2 + 2 * detail::corner_dy[k]});
    for (int b = 0; b < nb; ++b)
      for (int k = 0; k < 2; ++k) {
        int o = nbr_[b][k];
        if (o < 0) continue;
        int id = int(edges_.size());
        edges_.push_back({b, o, k});
        corner_edge_[b][k] = id;
        corner_edge_[o][(k + 2) & 3] = id;
      }
    check_connected();
    count_interior_whites();
    if (nb - num_edges() + interior_whites_ != 1)
      throw std::invalid_argument("domain: not simply connected");
    build_inner_boundary();
    build_outer_boundary();
  }

  void check_connected() {
    int nb = num_blacks();
    std::vector<char> seen(nb, 0);
    std::vector<int> st{0};
    seen[0] = 1;
    int cnt = 1;
    while (!st.empty()) {
      int b = st.back();
      st.pop_back();
      for (int k = 0; k < 4; ++k) {
        int o = nbr_[b][k];
        if (o >= 0 && !seen[o]) {
          seen[o] = 1;
          ++cnt;
          st.push_back(o);
        }
      }
    }
    if (cnt != nb) throw std::invalid_argument("domain: not edge-connected");
  }

  bool white_interior(LatticeCoord w) const {
    for (int s = 0; s < 4; ++s)
      if (find_black({w.x2 + 2 * detail::side_dx[s], w.y2 + 2 * detail::side_dy[s]}) < 0)
        return false;
    return true;
  }

  void count_interior_whites() {
    std::unordered_map<std::uint64_t, char> seen;
    interior_whites_ = 0;
    for (int e = 0; e < num_medial(); ++e) {
      auto w = white_across(e);
      if (seen.emplace(detail::key(w.x2, w.y2), 1).second && white_interior(w)) ++interior_whites_;
    }
  }

  void build_inner_boundary() {
    int nm = num_medial();
    bpos_.assign(nm, -1);
    int start = -1, count = 0;
    for (int e = 0; e < nm; ++e) {
      if (white_interior(white_across(e))) continue;
      ++count;
      auto t = medial_tail(e);
      if (start < 0) {
        start = e;
        continue;
      }
      auto s = medial_tail(start);
      if (t.y2 < s.y2 || (t.y2 == s.y2 && (t.x2 < s.x2 || (t.x2 == s.x2 && e < start)))) start = e;
    }
    int e = start;
    do {
      if (bpos_[e] >= 0) throw std::logic_error("domain: inner boundary revisits an edge");
      bpos_[e] = int(boundary_.size());
      boundary_.push_back(e);
      int r = right_out(e);
      e = r >= 0 ? r : left_out(e);
    } while (e != start && int(boundary_.size()) <= nm);
    if (int(boundary_.size()) != count)
      throw std::invalid_argument("domain: inner boundary is not a single cycle");
    pinch_.assign(boundary_.size(), 0);
    for (int i = 0; i < boundary_length(); ++i) {
      int f2 = boundary_f2(i);
      if (!head_forced(boundary_[i]) && bpos_[f2] >= 0) pinch_[i] = 1;
    }
  }

  // The outer cycle runs along the far sides of the exterior white squares
  // adjacent to the domain, with the outside black squares on its left.
  void build_outer_boundary() {
    std::unordered_map<std::uint64_t, char> ring;  // exterior whites touching the domain
    for (int e : boundary_) {
      auto w = white_across(e);
      ring.emplace(detail::key(w.x2, w.y2), 1);
    }
    auto in_ring = [&](LatticeCoord w) { return ring.count(detail::key(w.x2, w.y2)) > 0; };
    // outer edges are sides of black squares outside the domain facing a ring white
    struct OE {
      LatticeCoord b;
      int s;
    };
    auto white_of = [&](LatticeCoord b, int s) {
      return LatticeCoord{b.x2 + 2 * detail::side_dx[s], b.y2 + 2 * detail::side_dy[s]};
    };
    auto is_outer = [&](LatticeCoord b, int s) { return find_black(b) < 0 && in_ring(white_of(b, s)); };
    OE start{{0, 0}, -1};
    for (auto& kv : ring) {
      LatticeCoord w{int(std::int32_t(kv.first >> 32)), int(std::int32_t(kv.first & 0xffffffffu))};
      for (int s = 0; s < 4; ++s) {
        LatticeCoord b{w.x2 - 2 * detail::side_dx[s], w.y2 - 2 * detail::side_dy[s]};
        if (!is_outer(b, s)) continue;
        if (start.s < 0 || b.y2 < start.b.y2 || (b.y2 == start.b.y2 && (b.x2 < start.b.x2 ||
                                                                        (b.x2 == start.b.x2 && s < start.s))))
          start = {b, s};
      }
    }
    if (start.s < 0) return;
    OE cur = start;
    std::size_t guard = 8 * ring.size() + 16;
    do {
      LatticeCoord tail{cur.b.x2 + detail::corner_dx[(cur.s + 3) & 3], cur.b.y2 + detail::corner_dy[(cur.s + 3) & 3]};
      outer_.push_back({tail, Dir((cur.s + 1) & 3)});
      int k = cur.s;
      OE left{cur.b, (k + 1) & 3};
      LatticeCoord nbc{cur.b.x2 + 2 * detail::corner_dx[k], cur.b.y2 + 2 * detail::corner_dy[k]};
      OE right{nbc, (k + 3) & 3};
      if (is_outer(left.b, left.s))
        cur = left;
      else if (is_outer(right.b, right.s))
        cur = right;
      else
        throw std::logic_error("domain: outer boundary broken");
    } while (!(cur.b == start.b && cur.s == start.s) && outer_.size() <= guard);
  }

  std::vector<LatticeCoord> blacks_;
  std::unordered_map<std::uint64_t, int> index_;
  std::vector<std::array<int, 4>> nbr_;
  std::vector<std::array<int, 4>> corner_edge_;
  std::vector<PrimalEdge> edges_;
  int interior_whites_ = 0;
  std::vector<int> boundary_;
  std::vector<int> bpos_;
  std::vector<char> pinch_;
  std::vector<DirectedMedialEdge> outer_;
};

// width x height block in the lattice basis (1,1), (-1,1)
inline LatticeCoord rect_black(int k, int l) { return {2 * (k - l), 2 * (k + l)}; }

inline Domain build_rect_domain(int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("rect domain: width and height must be >= 1");
  std::vector<LatticeCoord> v;
  v.reserve(std::size_t(width) * height);
  for (int l = 0; l < height; ++l)
    for (int k = 0; k < width; ++k) v.push_back(rect_black(k, l));
  return Domain(std::move(v));
}

// axis-aligned box: black vertices (i,j), i+j even, 0 <= i < width, 0 <= j < height
inline Domain build_box_domain(int width, int height) {
  if (width < 3 || height < 3) throw std::invalid_argument("box domain: width and height must be >= 3");
  std::vector<LatticeCoord> v;
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i)
      if (((i + j) & 1) == 0) v.push_back({2 * i, 2 * j});
  // blacks with a single neighbour sit in a box corner and would pinch the boundary
  Domain full(v);
  std::vector<LatticeCoord> kept;
  for (int b = 0; b < full.num_blacks(); ++b) {
    int deg = 0;
    for (int k = 0; k < 4; ++k) deg += full.neighbour(b, k) >= 0;
    if (deg > 1) kept.push_back(full.black(b));
  }
  return Domain(std::move(kept));
}

inline void write_domain(std::ostream& os, const Domain& d) {
  os << "fkdomain v1\n";
  for (auto& c : d.blacks()) os << c.x2 << ' ' << c.y2 << '\n';
}

inline Domain read_domain(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("fkdomain v1", 0) != 0)
    throw std::invalid_argument("domain file: missing 'fkdomain v1' header");
  std::vector<LatticeCoord> v;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto p = line.find('#');
    if (p != std::string::npos) line.resize(p);
    std::istringstream ss(line);
    int x, y;
    if (!(ss >> x)) continue;
    if (!(ss >> y)) throw std::invalid_argument("domain file: line " + std::to_string(lineno) + ": expected 'x2 y2'");
    v.push_back({x, y});
  }
  return Domain(std::move(v));
}

inline Domain load_domain(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("domain file: cannot open " + path);
  return read_domain(f);
}

// ---------------------------------------------------------------------------
// Four marked points.
//
// Marked points sit at exterior corners of the inner boundary. Walking the
// inner boundary in its own (counterclockwise) direction the points come as
// a, d, c, b. The arcs from a to d and from c to b (labelled da and bc) keep
// their boundary edges; along the arcs from d to c and from b to a (cd and
// ab) the boundary edges are removed and the primal boundary edges are held
// open, so paths bounce off them. a and c are then sources and b, d sinks.

enum class Arc : std::uint8_t { ab = 0, bc = 1, cd = 2, da = 3 };

inline const char* arc_name(Arc a) {
  static const char* names[] = {"ab", "bc", "cd", "da"};
  return names[int(a)];
}

struct Domain4 {
  Domain domain;
  int a = 0, b = 0, c = 0, d = 0;  // boundary positions
  std::vector<std::uint8_t> present;  // per medial edge
  std::vector<std::int8_t> forced;    // per primal edge: -1 free, 1 held open
  std::vector<Arc> arc_of_pos;        // arc containing boundary edge c_i
  std::array<std::vector<int>, 4> arcs;
  int edge_a = -1, edge_b = -1, edge_c = -1, edge_d = -1;
  int alpha_turns = 0;  // quarter turns from c_b across the external arc to c_{a+1}

  static bool natural(Arc x) { return x == Arc::bc || x == Arc::da; }
  int rho(int i) const { return domain.mod(i - a); }
};

namespace detail {
inline bool cyclic_order(const Domain& dom, int a, int d, int c, int b) {
  auto r = [&](int x) { return dom.mod(x - a); };
  return r(d) > 0 && r(d) < r(c) && r(c) < r(b);
}
}  // namespace detail

// positions = {a, b, c, d} as boundary vertex positions
inline Domain4 mark_four_points(const Domain& dom, std::array<int, 4> positions) {
  int L = dom.boundary_length();
  for (int& p : positions) {
    if (p < 0 || p >= L) throw std::invalid_argument("mark_four_points: position out of range");
  }
  auto [a, b, c, d] = positions;
  if (a == b || a == c || a == d || b == c || b == d || c == d)
    throw std::invalid_argument("mark_four_points: positions must be distinct");
  for (int p : positions)
    if (!dom.boundary_forced(p))
      throw std::invalid_argument("mark_four_points: position " + std::to_string(p) +
                                  " is not an exterior corner (in/out parity)");
  if (!detail::cyclic_order(dom, a, d, c, b))
    throw std::invalid_argument("mark_four_points: positions violate the cyclic order a,b,c,d");

  Domain4 m;
  m.domain = dom;
  m.a = a, m.b = b, m.c = c, m.d = d;
  m.present.assign(dom.num_medial(), 1);
  m.forced.assign(dom.num_edges(), -1);
  m.arc_of_pos.assign(L, Arc::ab);
  auto fill = [&](int from, int to, Arc arc) {  // edges c_{from+1} .. c_{to}
    for (int i = from + 1;; ++i) {
      int p = dom.mod(i);
      m.arc_of_pos[p] = arc;
      m.arcs[int(arc)].push_back(dom.boundary_edge(p));
      if (p == to) break;
    }
  };
  fill(a, d, Arc::da);
  fill(d, c, Arc::cd);
  fill(c, b, Arc::bc);
  fill(b, a, Arc::ab);
  for (Arc arc : {Arc::ab, Arc::cd})
    for (int e : m.arcs[int(arc)]) m.present[e] = 0;
  for (int i = 0; i < L; ++i) {
    int e = dom.boundary_edge(i);
    int pe = dom.head_edge(e);
    if (pe < 0) continue;
    int nxt = dom.boundary_edge(i + 1);
    if (!m.present[e] || !m.present[nxt]) m.forced[pe] = 1;
  }
  m.edge_a = dom.boundary_edge(a + 1);
  m.edge_b = dom.boundary_edge(b);
  m.edge_c = dom.boundary_edge(c + 1);
  m.edge_d = dom.boundary_edge(d);
  int turns = 0;
  for (int i = b;; ++i) {
    int p = dom.mod(i);
    turns += quarter_turn(Domain::heading(dom.boundary_edge(p)), Domain::heading(dom.boundary_edge(p + 1)));
    if (p == a) break;
  }
  m.alpha_turns = turns;
  return m;
}

// every admissible marking: all choices of four exterior corners, each
// rotation giving a different a
inline std::vector<Domain4> all_four_point_markings(const Domain& dom) {
  std::vector<int> fc;
  for (int i = 0; i < dom.boundary_length(); ++i)
    if (dom.boundary_forced(i)) fc.push_back(i);
  std::vector<Domain4> out;
  int n = int(fc.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        for (int l = k + 1; l < n; ++l) {
          int q[4] = {fc[i], fc[j], fc[k], fc[l]};
          for (int r = 0; r < 4; ++r)  // q[r] = a, then d, c, b
            out.push_back(mark_four_points(dom, {q[r], q[(r + 3) % 4], q[(r + 2) % 4], q[(r + 1) % 4]}));
        }
  return out;
}

inline Arc boundary_arc_membership(const Domain4& m, LatticeCoord v) {
  const Domain& dom = m.domain;
  for (int i = 0; i < dom.boundary_length(); ++i)
    if (dom.boundary_vertex(i) == v) return m.arc_of_pos[i];
  throw std::invalid_argument("boundary_arc_membership: vertex not on the inner boundary");
}

inline Arc boundary_arc_membership(const Domain4& m, int position) {
  if (position < 0 || position >= m.domain.boundary_length())
    throw std::invalid_argument("boundary_arc_membership: position out of range");
  return m.arc_of_pos[position];
}

// First exterior corner, along the inner boundary, of each extreme square of
// a rect domain; returned in boundary order starting from block (0,0).
inline std::array<int, 4> rect_corner_positions(const Domain& dom, int width, int height) {
  std::array<int, 4> sq = {dom.find_black(rect_black(0, 0)), dom.find_black(rect_black(width - 1, 0)),
                           dom.find_black(rect_black(width - 1, height - 1)),
                           dom.find_black(rect_black(0, height - 1))};
  std::array<int, 4> out{};
  int L = dom.boundary_length();
  int start = -1;
  for (int i = 0; i < L && start < 0; ++i) {
    int e = dom.boundary_edge(i);
    if (Domain::black_of(e) == sq[0] && dom.boundary_forced(i) &&
        Domain::black_of(dom.boundary_edge(i + 1)) == sq[0]) {
      // first corner of the square along the boundary: previous vertex is not
      // a corner of the same square
      int ep = dom.boundary_edge(i - 1);
      if (!(Domain::black_of(ep) == sq[0] && dom.boundary_forced(i - 1))) start = i;
    }
  }
  if (start < 0) throw std::logic_error("rect_corner_positions: corner not found");
  out[0] = start;
  for (int q = 1; q < 4; ++q) {
    int found = -1;
    for (int j = 1; j < L && found < 0; ++j) {
      int i = dom.mod(start + j);
      if (Domain::black_of(dom.boundary_edge(i)) == sq[q] && dom.boundary_forced(i)) found = i;
    }
    if (found < 0) throw std::logic_error("rect_corner_positions: corner not found");
    out[q] = found;
  }
  return out;
}

// Corner marking of a rect domain: a at block (0,0), then d, c, b in boundary
// order, so ab and cd run along the sides of length `height` and bc, da along
// the sides of length `width`.
inline Domain4 mark_rect_corners(const Domain& dom, int width, int height) {
  auto p = rect_corner_positions(dom, width, height);
  return mark_four_points(dom, {p[0], p[3], p[2], p[1]});
}

}  // namespace fkl
