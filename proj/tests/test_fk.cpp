#include <boost/math/distributions/chi_squared.hpp>
#include <functional>
#include <map>

#include "cap_family.hpp"
#include "doctest.h"
#include "fkloops/fk_sampler.hpp"

using namespace fkl;

namespace {

// clusters by recursive flood fill over the open edges
int flood_clusters(const Domain& d, const FkConfig& c) {
  std::vector<int> seen(d.num_blacks(), 0);
  std::function<void(int)> visit = [&](int b) {
    seen[b] = 1;
    for (int i = 0; i < d.num_edges(); ++i) {
      if (!c.open[i]) continue;
      int o = d.edge(i).u == b ? d.edge(i).v : d.edge(i).v == b ? d.edge(i).u : -1;
      if (o >= 0 && !seen[o]) visit(o);
    }
  };
  int k = 0;
  for (int b = 0; b < d.num_blacks(); ++b)
    if (!seen[b]) ++k, visit(b);
  return k;
}

double brute_weight(const Domain& d, const FkConfig& c, const ModelParams& mp) {
  int o = c.num_open();
  return std::pow(mp.p, o) * std::pow(1 - mp.p, d.num_edges() - o) * std::pow(mp.q, flood_clusters(d, c));
}

}  // namespace

TEST_CASE("critical point is self-dual") {
  CHECK(std::abs(dual_p(kPc, 2.0) - kPc) < 1e-15);
  double ps = dual_p(kPc, 2.0);
  CHECK(std::abs(kPc * ps / ((1 - kPc) * (1 - ps)) - 2.0) < 1e-14);
}

TEST_CASE("cluster counts match flood fill") {
  for (auto& s : cap_shapes()) {
    auto& d = s.domain;
    REQUIRE(d.num_edges() <= 12);
    FkConfig c;
    for (int m = 0; m < (1 << d.num_edges()); ++m) {
      c.open.assign(d.num_edges(), 0);
      for (int i = 0; i < d.num_edges(); ++i) c.open[i] = (m >> i) & 1;
      CHECK(count_clusters(d, c) == flood_clusters(d, c));
      auto lab = cluster_labels(d, c);
      for (int i = 0; i < d.num_edges(); ++i)
        if (c.open[i]) CHECK(lab[d.edge(i).u] == lab[d.edge(i).v]);
    }
  }
}

TEST_CASE("fk weights") {
  ModelParams mp;
  auto d = build_rect_domain(2, 1);
  FkConfig closed{{0}}, open{{1}};
  // free boundary on the primal graph: two singleton clusters
  CHECK(fk_weight(d, closed, mp) == doctest::Approx((1 - mp.p) * 4.0).epsilon(1e-14));
  CHECK(fk_weight(d, open, mp) == doctest::Approx(mp.p * 2.0).epsilon(1e-14));
  CHECK(fk_weight(d, closed, mp) == doctest::Approx(brute_weight(d, closed, mp)).epsilon(1e-14));
  ModelParams p1{1.0, 2.0, 1.0};
  CHECK(fk_weight(d, closed, p1) == 0.0);
  CHECK_THROWS_AS(fk_weight(d, FkConfig{{0, 1}}, mp), std::invalid_argument);

  auto d3 = build_rect_domain(3, 3);
  FkConfig all;
  all.open.assign(12, 1);
  CHECK(fk_weight(d3, all, mp) == doctest::Approx(std::pow(mp.p, 12) * 2.0).epsilon(1e-13));
}

TEST_CASE("exact enumeration") {
  ModelParams mp;
  auto d1 = build_rect_domain(1, 1);
  auto e1 = enumerate_measure(d1, mp);
  CHECK(e1.prob.size() == 1);
  CHECK(e1.prob[0] == 1.0);

  auto d2 = build_rect_domain(2, 1);
  auto e2 = enumerate_measure(d2, mp);
  int dk = flood_clusters(d2, FkConfig{{0}}) - flood_clusters(d2, FkConfig{{1}});
  CHECK(e2.prob[1] / e2.prob[0] == doctest::Approx(mp.p / ((1 - mp.p) * std::pow(mp.q, dk))).epsilon(1e-13));

  for (auto& s : cap_shapes()) {
    auto em = enumerate_measure(s.domain, mp);
    double z = 0;
    for (double p : em.prob) z += p;
    CHECK(std::abs(z - 1) < 1e-12);
    for (std::uint64_t m = 0; m < em.prob.size(); m += 37) CHECK(em.mask_of(em.config(m)) == m);
  }
  CHECK_THROWS_AS(enumerate_measure(build_rect_domain(4, 4), mp), std::invalid_argument);
}

TEST_CASE("dual configuration") {
  auto d = build_rect_domain(3, 2);
  FkConfig c;
  c.open = {1, 0, 1, 1, 0, 0, 1};
  REQUIRE(int(c.open.size()) == d.num_edges());
  auto du = dual_config(d, c);
  CHECK(dual_config(d, du) == c);
  CHECK(c.num_open() + du.num_open() == d.num_edges());
  FkConfig all;
  all.open.assign(d.num_edges(), 1);
  CHECK(dual_config(d, all).num_open() == 0);
  // all-open primal: every dual vertex is its own dual cluster
  auto g = dual_graph(d);
  CHECK(g.num_vertices == d.num_interior_whites() + 1);
  CHECK(count_dual_clusters(d, all) == g.num_vertices);
}

TEST_CASE("hex dumps round trip") {
  FkConfig c;
  c.open = {1, 0, 1, 1, 0, 0, 1, 0, 1};
  CHECK(to_hex(c) == "d41");
  CHECK(from_hex(to_hex(c), 9) == c);
}

namespace {
double chi_square_p(const std::vector<double>& prob, const std::vector<long>& counts, long n) {
  double x2 = 0;
  int dof = -1;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    double e = prob[i] * n;
    if (e <= 0) continue;
    x2 += (counts[i] - e) * (counts[i] - e) / e;
    ++dof;
  }
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, x2));
}
}  // namespace

TEST_CASE("samplers agree with enumeration") {
  ModelParams mp;
  auto d = build_rect_domain(2, 3);
  auto em = enumerate_measure(d, mp);
  for (auto algo : {Algorithm::heat_bath, Algorithm::chayes_machta}) {
    SamplerOptions o;
    o.algorithm = algo;
    o.thin = 3;
    long n = 20000;
    auto xs = sample(d, mp, int(n), 11, o);
    std::vector<long> cnt(em.prob.size(), 0);
    for (auto& s : xs) cnt[em.mask_of(s.config)]++;
    CHECK(chi_square_p(em.prob, cnt, n) > 1e-3);
  }
}

TEST_CASE("sampler determinism and degenerate p") {
  ModelParams mp;
  auto d = build_rect_domain(3, 3);
  SamplerOptions o;
  o.replicas = 3;
  auto a = sample(d, mp, 50, 5, o);
  o.workers = 3;
  auto b = sample(d, mp, 50, 5, o);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].config == b[i].config);
  auto c = sample(d, mp, 50, 6, o);
  bool differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) differ = differ || !(a[i].config == c[i].config);
  CHECK(differ);
  ModelParams p1{1.0, 2.0, 1.0};
  for (auto algo : {Algorithm::heat_bath, Algorithm::chayes_machta}) {
    o.algorithm = algo;
    for (auto& s : sample(d, p1, 20, 1, o)) CHECK(s.config.num_open() == d.num_edges());
  }
  CHECK_THROWS_AS(sample(d, mp, 0, 1), std::invalid_argument);
}

TEST_CASE("held-open edges stay open") {
  ModelParams mp;
  auto d = build_rect_domain(3, 3);
  auto m = mark_rect_corners(d, 3, 3);
  SamplerOptions o;
  for (auto algo : {Algorithm::heat_bath, Algorithm::chayes_machta}) {
    o.algorithm = algo;
    for (auto& s : sample(m, mp, 30, 2, o))
      for (int i = 0; i < d.num_edges(); ++i)
        if (m.forced[i] == 1) CHECK(s.config.open[i] == 1);
  }
  auto em = enumerate_measure(m, mp);
  for (std::uint64_t k = 0; k < em.prob.size(); ++k) CHECK(em.prob[k] > 0);
}
