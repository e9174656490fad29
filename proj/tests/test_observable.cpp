#include <set>

#include "cap_family.hpp"
#include "doctest.h"
#include "fkloops/observable.hpp"

using namespace fkl;

namespace {
// every marking of every cap shape, thinned by stride
template <class F>
void for_cap_markings(int stride, F&& fn) {
  for (auto& sh : cap_shapes()) {
    auto marks = all_four_point_markings(sh.domain);
    for (std::size_t k = 0; k < marks.size(); k += stride) fn(marks[k]);
  }
}

bool interior_window(LatticeCoord p, int n) {
  cplx z = block_coord(p);
  return z.real() >= n / 4.0 && z.real() <= 3 * n / 4.0 && z.imag() >= n / 4.0 && z.imag() <= 3 * n / 4.0;
}
}  // namespace

TEST_CASE("enumerated observable is s-holomorphic and agrees with the solver") {
  ModelParams mp;
  const cplx thetas[] = {1.0, -1.0, {0, 1}, {0, -1}, kLambda, -kLambda, std::conj(kLambda), -std::conj(kLambda)};
  int checked = 0;
  for_cap_markings(7, [&](const Domain4& m) {
    auto& d = m.domain;
    auto f = observable_enum(m, mp);
    CHECK(s_hol_residual(f, d) <= 1e-12);
    CHECK(line_residual(f) <= 1e-12);
    CHECK(projection_residual(f, d) <= 1e-12);
    CHECK(std::abs(f.edge[m.edge_d] - line_unit(m.edge_d)) <= 1e-12);
    CHECK(std::abs(f.edge[m.edge_d]) == doctest::Approx(1.0).epsilon(1e-12));
    int hits = 0;
    for (cplx t : thetas) hits += std::abs(f.theta - t) < 1e-15;
    CHECK(hits == 1);

    // edges that gamma_hat never visits carry no value
    auto em = enumerate_measure(m, mp);
    std::vector<char> seen(d.num_medial(), 0);
    for (std::uint64_t x = 0; x < em.prob.size(); ++x)
      if (em.prob[x] > 0)
        for (int e : arc_decompose(m, em.config(x)).gamma_hat) seen[e] = 1;
    for (int e = 0; e < d.num_medial(); ++e)
      if (!seen[e]) CHECK(f.edge[e] == cplx(0));

    auto g = observable_solve(m);
    CHECK(!g.rank_deficient);
    CHECK(g.rank == g.unknowns);
    CHECK(max_edge_difference(f, g) <= 1e-10);
    CHECK(s_hol_residual(g, d) <= 1e-10);
    CHECK(line_residual(g) <= 1e-10);
    ++checked;
  });
  CHECK(checked > 100);
}

TEST_CASE("line units") {
  auto d = build_rect_domain(1, 1);
  for (int s = 0; s < 4; ++s) {
    cplx eta = line_unit(s), dir = std::polar(1.0, kPi * Domain::heading(s) / 2);
    // the line of e is conj(sqrt(e)) R
    CHECK(std::abs((eta * eta * dir).imag()) <= 1e-15);
    CHECK((eta * eta * dir).real() > 0);
    CHECK(std::abs(project(3.0 * eta, s) - 3.0 * eta) <= 1e-15);
    CHECK(std::abs(project(cplx(0, 1) * eta, s)) <= 1e-15);
  }
  CHECK(std::abs(line_unit(0) - kLambda) <= 1e-15);  // side E, heading N
  (void)d;
}

TEST_CASE("height function plateaus and beta") {
  ModelParams mp;
  for_cap_markings(5, [&](const Domain4& m) {
    auto f = observable_enum(m, mp);
    auto H = build_H(f, m);
    CHECK(H.path_residual <= 1e-10);
    for (auto& p : H.plateaus) CHECK(p.spread <= 1e-10);
    CHECK(std::abs(H.plateaus[int(Arc::cd)].mean) <= 1e-10);
    CHECK(std::abs(H.plateaus[int(Arc::da)].mean - 1) <= 1e-10);
    CHECK(std::abs(H.plateaus[int(Arc::bc)].mean - 1) <= 1e-10);
    CHECK(H.beta >= -1e-12);
    CHECK(H.beta <= 1 + 1e-12);
    // sqrt(beta) is the probability of the internal pattern (ad)(cb)
    auto em = enumerate_measure(m, mp);
    double p = 0;
    for (std::uint64_t x = 0; x < em.prob.size(); ++x)
      if (em.prob[x] > 0 && arc_decompose(m, em.config(x)).pattern == Pattern::ad_cb) p += em.prob[x];
    CHECK(std::abs(H.beta - p * p) <= 1e-10);
  });
}

TEST_CASE("height increments across vertices") {
  ModelParams mp;
  for_cap_markings(9, [&](const Domain4& m) {
    auto& d = m.domain;
    auto f = observable_enum(m, mp);
    auto H = build_H(f, m);
    auto st = vertex_stars(d);
    for (int pe = 0; pe < d.num_edges(); ++pe) {
      auto& s = st[pe];
      bool ok = true;
      for (int e : {s.in[0], s.in[1], s.out[0], s.out[1]}) ok = ok && m.present[e];
      if (!ok) continue;
      auto w1 = d.white_across(s.in[0]), w2 = d.white_across(s.in[1]);
      cplx dzw(double(w2.x2 - w1.x2) / 2, double(w2.y2 - w1.y2) / 2);
      CHECK(std::abs(H.dual[H.dual_at(w2)] - H.dual[H.dual_at(w1)] - vertex_increment(f.vertex[pe], dzw)) <= 1e-10);
      int b1 = Domain::black_of(s.in[0]), b2 = Domain::black_of(s.in[1]);
      cplx dzb(double(d.black(b2).x2 - d.black(b1).x2) / 2, double(d.black(b2).y2 - d.black(b1).y2) / 2);
      CHECK(std::abs(H.primal[b2] - H.primal[b1] - vertex_increment(f.vertex[pe], dzb)) <= 1e-10);
    }
  });
}

TEST_CASE("sub and superharmonicity") {
  ModelParams mp;
  int dual_checked = 0, primal_checked = 0;
  for_cap_markings(5, [&](const Domain4& m) {
    auto H = build_H(observable_enum(m, mp), m);
    auto r = check_sub_super(H, m);
    CHECK(r.violations == 0);
    dual_checked += r.dual_checked;
    primal_checked += r.primal_checked;
  });
  CHECK(dual_checked > 0);
  CHECK(primal_checked > 0);

  auto d = build_rect_domain(8, 8);
  auto m = mark_rect_corners(d, 8, 8);
  auto H = build_H(observable_solve(m), m);
  CHECK(check_sub_super(H, m).violations == 0);
  auto gd = dual_graph_of(H, m);
  auto gp = primal_graph(H, m);
  auto bumped = H;
  for (std::size_t w = 0; w < H.dual.size(); ++w)
    if (gd.interior[w]) {
      bumped.dual[w] += 0.05;
      break;
    }
  CHECK(check_sub_super(bumped, m).violations >= 1);
  bumped = H;
  for (std::size_t b = 0; b < H.primal.size(); ++b)
    if (gp.interior[b]) {
      bumped.primal[b] -= 0.05;
      break;
    }
  CHECK(check_sub_super(bumped, m).violations >= 1);
  auto flat = H;
  for (double& v : flat.primal) v = 0.3;
  for (double& v : flat.dual) v = 0.3;
  auto r = check_sub_super(flat, m);
  CHECK(r.violations == 0);
  CHECK(r.dual_checked > 0);
  CHECK(r.primal_checked > 0);
}

TEST_CASE("preharmonic envelope") {
  ModelParams mp;
  for_cap_markings(5, [&](const Domain4& m) {
    auto H = build_H(observable_enum(m, mp), m);
    CHECK(preharmonic_envelope(H, m).min_slack >= -1e-10);
  });

  auto d = build_rect_domain(10, 7);
  auto m = mark_rect_corners(d, 10, 7);
  auto H = build_H(observable_solve(m), m);
  CHECK(preharmonic_envelope(H, m).min_slack >= -1e-10);
  // constant boundary data extends to the same constant
  for (double& v : H.primal) v = 0.625;
  for (double& v : H.dual) v = 0.625;
  auto env = preharmonic_envelope(H, m);
  for (double v : env.primal) CHECK(v == doctest::Approx(0.625).epsilon(1e-14));
  for (double v : env.dual) CHECK(v == doctest::Approx(0.625).epsilon(1e-14));
}

TEST_CASE("envelope gap shrinks with the mesh") {
  std::vector<double> gaps;
  for (int n : {8, 16, 32}) {
    auto d = build_rect_domain(n, n);
    auto m = mark_rect_corners(d, n, n);
    auto H = build_H(observable_solve(m), m);
    auto env = preharmonic_envelope(H, m);
    gaps.push_back(envelope_gap(H, env, m, [&](LatticeCoord p) { return interior_window(p, n); }));
  }
  CHECK(gaps[0] > gaps[1]);
  CHECK(gaps[1] > gaps[2]);
  CHECK(gaps[2] > 0);
}

TEST_CASE("beta on the square approaches the continuum value") {
  const double target = 3 - 2 * std::sqrt(2.0);
  double prev = 1;
  for (int n : {16, 32, 64}) {
    auto d = build_rect_domain(n, n);
    auto m = mark_rect_corners(d, n, n);
    auto f = observable_solve(m);
    CHECK(f.residual <= 1e-10);
    CHECK(s_hol_residual(f, d) <= 1e-10);
    auto H = build_H(f, m);
    double err = std::abs(H.beta - target);
    CHECK(err < prev);
    prev = err;
    if (n == 64) CHECK(err <= 3.0 / n);
  }
}

TEST_CASE("fused arc profile") {
  auto coarse = poisson_profile_check(16), fine = poisson_profile_check(32);
  for (auto* r : {&coarse, &fine}) {
    CHECK(r->at_w == 1.0);
    CHECK(r->flat_boundary <= 1e-10);
    CHECK(r->window_sites > 0);
    CHECK(r->scale > 0);
  }
  CHECK(coarse.max_deviation > fine.max_deviation);
  CHECK(coarse.max_deviation_rect > fine.max_deviation_rect);
  // the scale of the profile is of order of the mesh size
  CHECK(coarse.scale * 16 == doctest::Approx(fine.scale * 32).epsilon(0.1));
  CHECK_THROWS_AS(poisson_profile_check(1), std::invalid_argument);
}

TEST_CASE("coin laws") {
  CoinLaws c;
  CHECK(c.zeta0() == doctest::Approx(1 / (1 + std::sqrt(2.0))).epsilon(1e-15));
  CHECK(c.zeta1() == doctest::Approx(std::sqrt(2.0) / (1 + std::sqrt(2.0))).epsilon(1e-15));
  CHECK(c.xi_plus() == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(c.xi_minus() == doctest::Approx(1 - 1 / std::sqrt(2.0)).epsilon(1e-15));
  // coupling: xi = 1 when zeta = 0, a fair sign when zeta = 1
  CHECK(c.xi_plus() == doctest::Approx(c.zeta0() * 1.0 + c.zeta1() * 0.5).epsilon(1e-15));
  CHECK(c.xi_mean() * c.jump_factor == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("martingales along the branch") {
  ModelParams mp;
  long bc_steps = 0, prefixes = 0;
  for_cap_markings(13, [&](const Domain4& m) {
    auto r = mart_step_check(m, mp);
    CHECK(r.max_residual_M <= 1e-10);
    CHECK(r.max_residual_N <= 1e-10);
    CHECK(r.max_residual_M_plain <= 1e-12);
    prefixes += r.prefixes;
    if (r.bc_steps > 0) {
      CHECK(r.min_bc_ratio == doctest::Approx(1 + std::sqrt(2.0)).epsilon(1e-10));
      CHECK(r.max_bc_ratio == doctest::Approx(1 + std::sqrt(2.0)).epsilon(1e-10));
    }
    bc_steps += r.bc_steps;
  });
  CHECK(bc_steps > 0);
  CHECK(prefixes > 1000);
}

TEST_CASE("wrong jump factor breaks the martingale") {
  ModelParams mp;
  auto d = build_rect_domain(3, 3);
  auto m = mark_rect_corners(d, 3, 3);
  CoinLaws wrong;
  wrong.jump_factor = 2;
  auto good = mart_step_check(m, mp);
  auto bad = mart_step_check(m, mp, wrong);
  REQUIRE(good.bc_steps > 0);
  CHECK(good.max_residual_M <= 1e-10);
  CHECK(bad.max_residual_M > 1e-3);
  CHECK(bad.max_residual_M_plain <= 1e-12);
}

TEST_CASE("martingale traces") {
  ModelParams mp;
  auto d = build_rect_domain(3, 3);
  auto m = mark_rect_corners(d, 3, 3);
  int flips_seen = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto tr = martingale_trace(m, mp, m.edge_c, seed);
    REQUIRE(tr.M.size() == tr.path.size());
    CHECK(tr.path.back() == m.edge_d);
    std::set<int> bc(tr.bc_visits.begin(), tr.bc_visits.end());
    for (std::size_t t = 0; t < tr.M.size(); ++t) {
      CHECK(std::abs(tr.M_plus[t]) <= 1 + 1e-12);
      CHECK(std::abs(tr.M[t]) == doctest::Approx(tr.M_plus[t]).epsilon(1e-15));
      if (t > 0 && tr.M[t] * tr.M[t - 1] < 0) {
        ++flips_seen;
        CHECK(bc.count(int(t) - 1) == 1);
      }
    }
    // the branch ends at d, where gamma_1 is contained in gamma_hat or not
    CHECK((tr.M_plus.back() <= 1e-12 || tr.M_plus.back() >= 1 - 1e-12));
  }
  CHECK(flips_seen > 0);
}

TEST_CASE("dumps") {
  auto d = build_rect_domain(2, 2);
  auto m = mark_rect_corners(d, 2, 2);
  auto f = observable_solve(m);
  auto H = build_H(f, m);
  auto csv = observable_csv(f, d);
  int present = 0;
  for (auto p : m.present) present += p;
  CHECK(csv.rfind("x2,y2,dir,re,im\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == present + 1);
  auto hc = height_csv(H);
  CHECK(hc.rfind("x2,y2,colour,H\n", 0) == 0);
  CHECK(std::count(hc.begin(), hc.end(), '\n') == 1 + d.num_blacks() + int(H.dual.size()));
}
