#include "cap_family.hpp"
#include "doctest.h"
#include "fkloops/explorer.hpp"

using namespace fkl;

namespace {
FkConfig config_of(const Domain& d, long mask) {
  FkConfig c;
  c.open.assign(d.num_edges(), 0);
  for (int i = 0; i < d.num_edges(); ++i) c.open[i] = (mask >> i) & 1;
  return c;
}

std::vector<int> corner_positions(const Domain& d) {
  std::vector<int> v;
  for (int i = 0; i < d.boundary_length(); ++i)
    if (d.boundary_forced(i)) v.push_back(i);
  return v;
}

bool same_loops(const LoopEnsemble& a, const LoopEnsemble& b) {
  if (a.loops.size() != b.loops.size()) return false;
  for (std::size_t i = 0; i < a.loops.size(); ++i)
    if (a.loops[i].edges != b.loops[i].edges) return false;
  return true;
}

// every exact property of the tree for one configuration and root
void check_tree(const Domain& d, const FkConfig& c, int root, bool all_pairs) {
  auto ens = extract_loops(d, c);
  Board bd(d, c);
  auto s = successor_map(ens, d);
  auto t = loops_to_tree(s, root);
  auto bl = boundary_loops(ens, d);
  CHECK(same_loops(tree_to_loops(t), bl));
  CHECK(t.branching_points.size() + 1 == bl.loops.size());
  int L = d.boundary_length();
  std::vector<Branch> br(L);
  for (int w = 0; w < L; ++w) {
    br[w] = branch_to(s, root, w);
    CHECK(br[w].edges == t.branch(w).edges);
    CHECK(br[w].edges.back() == d.boundary_edge(w));
    std::vector<int> e = br[w].edges;
    std::sort(e.begin(), e.end());
    CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
    for (int u : br[w].jump_points) CHECK(c.open[d.head_edge(d.boundary_edge(u))] == 0);
  }
  if (all_pairs)
    for (int i = 1; i <= L; ++i)
      for (int j = i; j <= L; ++j) {
        int w = d.mod(root + i), w2 = d.mod(root + j);
        CHECK(check_target_independence(br[w], br[w2], d, root).ok);
      }
}
}  // namespace

TEST_CASE("tree bijection on cap-sized domains") {
  for (auto& sh : cap_shapes()) {
    auto& d = sh.domain;
    auto roots = corner_positions(d);
    for (long m = 0; m < (1L << d.num_edges()); ++m) {
      auto c = config_of(d, m);
      for (std::size_t k = 0; k < roots.size(); k += (m % 5 == 0 ? 1 : 3)) check_tree(d, c, roots[k], m % 17 == 0);
    }
  }
}

TEST_CASE("tree bijection on sampled configurations") {
  ModelParams mp;
  for (auto [w, h] : {std::pair{6, 5}, {12, 12}}) {
    auto d = build_rect_domain(w, h);
    SamplerOptions o;
    o.algorithm = Algorithm::chayes_machta;
    o.thin = 2;
    o.burn_in = 20;
    auto roots = corner_positions(d);
    int k = 0;
    for (auto& smp : sample(d, mp, 20, 3, o)) check_tree(d, smp.config, roots[(k++ * 7) % roots.size()], false);
  }
}

TEST_CASE("single loop and the all-open 2x2 golden branches") {
  auto d = build_rect_domain(2, 2);
  // all closed: each square is its own loop; the branches are arcs around the root square
  auto closed = config_of(d, 0);
  auto sc = successor_map(extract_loops(d, closed), d);
  int root = corner_positions(d)[0];
  auto t = loops_to_tree(sc, root);
  CHECK(tree_to_loops(t).loops.size() == 4);

  auto open = config_of(d, 15);
  auto ens = extract_loops(d, open);
  REQUIRE(ens.loops.size() == 2);  // the cluster contour and the central plaquette
  auto so = successor_map(ens, d);
  auto to = loops_to_tree(so, root);
  // one boundary loop: no branching points, every branch is an arc of the contour
  CHECK(to.branching_points.empty());
  auto bl = boundary_loops(ens, d);
  REQUIRE(bl.loops.size() == 1);
  for (int w = 0; w < d.boundary_length(); ++w) {
    auto b = to.branch(w);
    CHECK(b.edges.front() == d.boundary_edge(root + 1));
    CHECK(b.edges.back() == d.boundary_edge(w));
    CHECK(int(b.edges.size()) == d.mod(w - root - 1) + 1);
  }
  // the whole contour is the boundary run, so the branches are its arcs
  CHECK(bl.loops[0].edges.size() == std::size_t(d.boundary_length()));
}

TEST_CASE("branches with jumps") {
  // 3x3 with a single open edge at the centre: the boundary loops wrap the
  // individual boundary squares and branches must jump between them
  auto d = build_rect_domain(3, 3);
  auto c = config_of(d, 0);
  auto s = successor_map(extract_loops(d, c), d);
  int root = corner_positions(d)[0];
  auto t = loops_to_tree(s, root);
  CHECK(t.branching_points.size() == 7);  // nine squares, the centre one is interior
  int far = d.mod(root + d.boundary_length() / 2);
  auto b = branch_to(s, root, far);
  CHECK(!b.jump_points.empty());
  CHECK(b.edges.back() == d.boundary_edge(far));
}

TEST_CASE("target independence negative control") {
  auto d = build_rect_domain(3, 2);
  auto c = config_of(d, 0b0101101);
  auto s = successor_map(extract_loops(d, c), d);
  int root = corner_positions(d)[0];
  int w = d.mod(root + 5), w2 = d.mod(root + 9);
  auto a = branch_to(s, root, w), b = branch_to(s, root, w2);
  CHECK(check_target_independence(a, b, d, root).ok);
  CHECK(check_target_independence(a, a, d, root).ok);
  auto bad = b;
  bad.edges[1] = bad.edges[1] ^ 1;
  CHECK(!check_target_independence(a, bad, d, root).ok);
  CHECK_THROWS_AS(check_target_independence(b, a, d, root), std::invalid_argument);
}

TEST_CASE("roots must be exterior corners") {
  auto d = build_rect_domain(3, 3);
  auto s = successor_map(extract_loops(d, config_of(d, 0)), d);
  int var = -1;
  for (int i = 0; i < d.boundary_length() && var < 0; ++i)
    if (!d.boundary_forced(i)) var = i;
  CHECK_THROWS_AS(loops_to_tree(s, var), std::invalid_argument);
  CHECK_THROWS_AS(branch_to(s, corner_positions(d)[0], d.boundary_length()), std::invalid_argument);
  // an arm of width one pinches the boundary
  Domain arm({rect_black(0, 0), rect_black(1, 0), rect_black(2, 0), rect_black(0, 1), rect_black(0, 2)});
  REQUIRE(arm.has_pinch());
  auto sa = successor_map(extract_loops(arm, config_of(arm, 0)), arm);
  CHECK_THROWS_AS(loops_to_tree(sa, corner_positions(arm)[0]), std::invalid_argument);
}

TEST_CASE("winding") {
  auto d = build_rect_domain(2, 2);
  int e = 0;  // side 0 of the first square
  std::vector<int> plaquette = {e, Domain::left_out(e), Domain::left_out(Domain::left_out(e)),
                                Domain::left_out(Domain::left_out(Domain::left_out(e))), e};
  CHECK(winding(plaquette, 0, 4) == 4);
  CHECK(winding(plaquette, 0, 2) == 2);
  CHECK(winding(plaquette, 1, 1) == 0);
  CHECK(winding(plaquette, 0, 2) + winding(plaquette, 2, 4) == winding(plaquette, 0, 4));
  // straight: E then E across a corner pair
  std::vector<int> straight = {4 * 0 + 3, 4 * 0 + 3};
  CHECK(winding(straight, 0, 1) == 0);
  CHECK_THROWS_AS(winding(plaquette, 3, 2), std::out_of_range);
  CHECK_THROWS_AS(winding(plaquette, 0, 5), std::out_of_range);
  (void)d;
}
