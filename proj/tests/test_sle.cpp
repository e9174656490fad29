#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "fkloops/continuum_sle.hpp"

using namespace fkl;

namespace {
struct Moments {
  double n = 0, s = 0, s2 = 0;
  void add(double x) {
    n += 1;
    s += x;
    s2 += x * x;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt((s2 / n - mean() * mean()) / n); }
};

std::vector<double> every(const std::vector<double>& v, std::size_t stride) {
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); k += stride) out.push_back(v[k]);
  return out;
}
}  // namespace

// reference values from 40-digit evaluation of the closed forms
TEST_CASE("beta and the crossing probability") {
  CHECK(beta_of_v(1) == 1);
  CHECK(beta_of_v(0) == 0);
  CHECK(beta_of_v(0.5) == doctest::Approx(0.17157287525380990239662255158060384286).epsilon(1e-15));
  CHECK(beta_of_v(0.5) == doctest::Approx(std::pow(std::tan(std::numbers::pi / 8), 2)).epsilon(1e-14));
  CHECK(std::abs(beta_of_v(1e-6) / 2.500001250000781e-7 - 1) < 1e-8);
  CHECK(beta_of_v(0.3) == doctest::Approx(0.088933156439496347).epsilon(1e-14));
  CHECK(beta_of_v(0.9) == doctest::Approx(0.519493853295915704).epsilon(1e-14));
  for (double x = 0.05; x < 1.5; x += 0.1)
    CHECK(beta_of_v(std::pow(std::sin(x), 2)) == doctest::Approx(std::pow(std::tan(x / 2), 2)).epsilon(1e-12));

  CHECK(crossing_prob(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(crossing_prob(1) == 1);
  CHECK(crossing_prob(0) == 0);
  CHECK(crossing_prob(0.75) == doctest::Approx(0.6589186225978911223628788086480871441866).epsilon(1e-14));
  CHECK(crossing_prob(0.3) == doctest::Approx(0.375373808882431485).epsilon(1e-14));
  CHECK(crossing_prob(0.9) == doctest::Approx(0.784959256460989465).epsilon(1e-14));

  double prev = 0;
  for (int i = 1; i < 1000; ++i) {
    double v = i / 1000.0;
    CHECK(std::abs(crossing_prob(v) + crossing_prob(1 - v) - 1) < 1e-12);
    double b = beta_of_v(v);
    CHECK(b > prev);
    prev = b;
  }
  CHECK_THROWS_AS(beta_of_v(-1e-9), std::domain_error);
  CHECK_THROWS_AS(crossing_prob(1.5), std::domain_error);
  CHECK_THROWS_AS(beta_of_v(std::nan("")), std::domain_error);
}

TEST_CASE("partition function") {
  PartitionPoint p{0, 1, 2};
  CHECK(p.m() == doctest::Approx(std::sqrt(2.0) - 1).epsilon(1e-15));
  CHECK(partition_Z(p) == doctest::Approx(1.198123521493120122606585571820152450692).epsilon(1e-14));
  // w -> infinity at fixed u, v
  for (double x : {0.5, 1.0, 3.0}) {
    PartitionPoint far{0, x, x + 1e6};
    CHECK(std::abs(partition_Z(far) / std::pow(4 / x, 0.125) - 1) < 1e-6);
    // the drift of an SLE(kappa, rho) with force point at v
    CHECK(sle::kKappa * dlogZ_du(far) == doctest::Approx(-sle::kRho / x).epsilon(1e-5));
  }
  CHECK_THROWS_AS(partition_Z({1, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(dlogZ_du({0, 2, 1}), std::invalid_argument);

  // analytic derivative against central differences, and 1/s homogeneity of the drift
  for (PartitionPoint q : {PartitionPoint{0, 1, 2}, PartitionPoint{-0.3, 0.2, 4}, PartitionPoint{1, 1.01, 1.5}}) {
    for (double s : {1.0, 7.5}) {
      PartitionPoint a{s * q.u, s * q.v, s * q.w};
      double h = 1e-6 * a.x();
      double num = (std::log(partition_Z({a.u + h, a.v, a.w})) - std::log(partition_Z({a.u - h, a.v, a.w}))) / (2 * h);
      CHECK(dlogZ_du(a) == doctest::Approx(num).epsilon(1e-6));
      CHECK(s * dlogZ_du(a) == doctest::Approx(dlogZ_du(q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("four-point coefficients") {
  for (double M : {-0.9, -0.4, 0.01, 0.3, 0.7, 0.95}) {
    for (double Y : {0.1, 1.0, 5.0}) {
      double X = fourpoint_x_of(M, Y);
      CHECK(fourpoint_m_of(X, Y) == doctest::Approx(std::abs(M)).epsilon(1e-12));
      CHECK(beta_of_v(X / (X + Y)) == doctest::Approx(M * M).epsilon(1e-10));
      // sigma is dM/dX times the noise of X
      double h = 1e-5 * X;
      double dmdx = (fourpoint_m_of(X + h, Y) - fourpoint_m_of(X - h, Y)) / (2 * h);
      CHECK(fourpoint_sigma(M, Y) == doctest::Approx(sle::kSqrtKappa * dmdx).epsilon(1e-6));
      // the U drift of SLE[kappa, Z] closes the X equation: dX = dV - dU
      PartitionPoint p{0, X, X + Y};
      double drift = 2 / X - sle::kKappa * dlogZ_du(p);
      CHECK(fourpoint_x_drift(M, Y) == doctest::Approx(drift).epsilon(1e-10));
      // Y = W - V
      CHECK(fourpoint_y_rate(M, Y) == doctest::Approx(fourpoint_w_rate(M, Y) - 2 / X).epsilon(1e-10));
    }
  }
  // Bessel 3/2 limit at small X / Y
  for (double M : {1e-2, 1e-3}) {
    double X = fourpoint_x_of(M, 1);
    CHECK(fourpoint_x_drift(M, 1) == doctest::Approx(4.0 / (3 * X)).epsilon(1e-3));
  }
  // effective dimension of dX = sqrt(kappa) dB + (4/3) dt / X
  CHECK(1 + 2 * (4.0 / 3) / sle::kKappa == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("Bessel paths") {
  for (auto sc : {Scheme::euler, Scheme::exact_bessel}) {
    SdeParams p;
    p.dt = 1e-2;
    p.T = 1;
    p.scheme = sc;
    p.seed = 11;
    Moments m;
    for (int i = 0; i < 3000; ++i) {
      auto b = bessel_path(0.5, 1.5, p, i);
      for (double x : b.X) REQUIRE(x >= 0);
      m.add(b.X.back() * b.X.back());
    }
    CHECK(std::abs(m.mean() - (0.25 + 1.5)) < 3 * m.se());
  }
  // one Euler step from far away, with the squared increment as a control variate
  {
    CounterRng rng(5, 0);
    double x0 = 20, h = 1e-2, dim = 1.5;
    Moments m;
    for (int i = 0; i < 100000; ++i) {
      double q = detail::squared_bessel_step(x0 * x0, dim, h, Scheme::euler, rng);
      m.add(std::sqrt(q) - x0 - (q - x0 * x0 - dim * h) / (2 * x0));
    }
    CHECK(m.mean() == doctest::Approx((dim - 1) / (2 * x0) * h).epsilon(0.05));
  }
  // dimension 2 does not reach zero
  {
    SdeParams p;
    p.dt = 1e-3;
    p.T = 1;
    int hits = 0;
    for (int i = 0; i < 200; ++i) hits += bessel_path(0.3, 2, p, i).zero_hits;
    CHECK(hits == 0);
  }
  SdeParams bad;
  bad.dt = 2;
  CHECK_THROWS_AS(bessel_path(1, 1.5, bad), std::invalid_argument);
  CHECK_THROWS_AS(bessel_path(-1, 1.5, SdeParams{}), std::invalid_argument);
  CHECK_THROWS_AS(bessel_path(1, 0, SdeParams{}), std::invalid_argument);
}

TEST_CASE("tree branch") {
  SdeParams p;
  p.dt = 1e-3;
  p.T = 1;
  Moments qv;
  for (int i = 0; i < 300; ++i) {
    auto d = sle_tree_branch(p, 0, 0, i);
    CHECK(d.finite);
    CHECK(d.integral_inv_x > 0);
    for (std::size_t k = 0; k < d.size(); ++k) {
      REQUIRE(d.X(k) >= 0);
      REQUIRE(d.Lambda[k] == 0);
      if (k) REQUIRE(d.V[k] >= d.V[k - 1]);
    }
    qv.add(quadratic_variation_rate(d.times, d.U));
  }
  CHECK(qv.mean() == doctest::Approx(sle::kKappa).epsilon(0.05));
  auto csv = driving_csv(sle_tree_branch(p, 0.5, 1, 3));
  CHECK(csv.rfind("t,U,V,W,X,Y,Lambda\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == p.steps() + 2);
}

TEST_CASE("four-point diffusion") {
  SdeParams p;
  p.dt = 1e-3;
  p.T = 1;
  p.seed = 21;
  Moments m;
  int visits = 0, compared = 0;
  for (int i = 0; i < 2000; ++i) {
    auto f = fourpoint_sde(0.4, 1, 1, p, {}, i);
    for (std::size_t k = 0; k < f.times.size(); ++k) {
      REQUIRE(std::abs(f.M[k]) < 1);
      REQUIRE(f.X[k] >= 0);
      REQUIRE(f.Y[k] >= 0);
    }
    visits += f.zero_visits;
    compared += f.agree_until == f.times.size();
    m.add(f.M.back());
  }
  CHECK(std::abs(m.mean() - 0.4) < 3 * m.se());
  CHECK(visits > 0);
  CHECK(compared > 1000);

  // the three routes converge together at order one
  auto dev = [](double dt) {
    SdeParams q;
    q.dt = dt;
    q.T = 0.2;
    q.seed = 4;
    double dx = 0, dm = 0;
    int n = 0;
    for (int i = 0; i < 300; ++i) {
      auto f = fourpoint_sde(0.4, 1, 1, q, {}, i);
      if (f.agree_until != f.times.size()) continue;
      dx += f.max_dev_X;
      dm += f.max_dev_M;
      ++n;
    }
    return std::pair{dx / n, dm / n};
  };
  auto [x1, m1] = dev(1e-3);
  auto [x2, m2] = dev(5e-4);
  CHECK(x1 < 0.02);
  CHECK(x2 / x1 < 0.65);
  CHECK(m2 / m1 < 0.65);

  // implied drift of X near zero against the Bessel 3/2 limit, with the X
  // route as control variate
  {
    SdeParams q;
    q.dt = 1e-4;
    q.T = 1e-4;
    double M0 = 0.15, X0 = fourpoint_x_of(M0, 1);
    Moments d;
    for (int i = 0; i < 20000; ++i) {
      auto f = fourpoint_sde(M0, 1, 1, q, {}, i);
      d.add((f.X[1] - f.X_direct[1]) / q.dt + fourpoint_x_drift(M0, 1));
    }
    CHECK(d.mean() == doctest::Approx(4.0 / (3 * X0)).epsilon(0.1));
  }
  CHECK_THROWS_AS(fourpoint_sde(0, 1, 1, p), std::invalid_argument);
  CHECK_THROWS_AS(fourpoint_sde(1, 1, 1, p), std::invalid_argument);
  CHECK_THROWS_AS(fourpoint_sde(0.5, 0, 1, p), std::invalid_argument);
}

TEST_CASE("Loewner evolution") {
  // constant driving: the vertical slit
  int n = 400;
  std::vector<double> t(n + 1), u(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) t[k] = k * 0.25 / n;
  auto r = loewner_evolve(t, u);
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    CHECK(std::abs(r.trace[k] - sle::cplx(0, 2 * std::sqrt(r.times[k]))) < 1e-9);
    CHECK(r.V[k + 1] == doctest::Approx(2 * std::sqrt(t[k + 1])).epsilon(1e-12));
  }
  CHECK(r.Lambda.back() == 0);
  CHECK(r.max_height == doctest::Approx(1).epsilon(1e-9));

  // semigroup: the map over [0, n) is the composition of two pieces
  std::vector<double> s(n + 1), w(n + 1);
  for (int k = 0; k <= n; ++k) {
    s[k] = k * 1.0 / n;
    w[k] = std::sin(5 * s[k]) + 0.3 * s[k];
  }
  auto rw = loewner_evolve(s, w, 0);
  for (sle::cplx z : {sle::cplx(0.3, 0.2), sle::cplx(-2, 1), sle::cplx(4, 0.01)}) {
    auto whole = loewner_map(rw, z, 0, n);
    auto parts = loewner_map(rw, loewner_map(rw, z, 0, 137), 137, n);
    CHECK(std::abs(whole - parts) < 1e-8);
  }
  // half-plane capacity: g(z) = z + 2T / z + ...
  sle::cplx big(1e6, 1e6);
  CHECK(((loewner_map(rw, big, 0, n) - big) * big).real() == doctest::Approx(2 * s.back()).epsilon(1e-3));
  for (std::size_t k = 1; k < rw.Lambda.size(); ++k) CHECK(rw.Lambda[k] >= rw.Lambda[k - 1]);

  CHECK_THROWS_AS(loewner_evolve({0, 0}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(loewner_evolve({0}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(loewner_map(rw, big, 3, 2), std::out_of_range);
  CHECK(r.trace_csv().rfind("t,re,im\n", 0) == 0);
}

TEST_CASE("Lambda on tree branch drivers shrinks with the step") {
  SdeParams p;
  p.dt = 1e-4;
  p.T = 0.25;
  double L[3] = {0, 0, 0};
  std::size_t stride[3] = {16, 4, 1};
  for (int i = 0; i < 20; ++i) {
    auto d = sle_tree_branch(p, 0, 0, i);
    for (int j = 0; j < 3; ++j) L[j] += loewner_evolve(every(d.times, stride[j]), every(d.U, stride[j]), 0).Lambda.back();
  }
  CHECK(L[1] < L[0]);
  CHECK(L[2] < L[1]);
}

TEST_CASE("driving extraction") {
  // vertical segment of height 2
  std::vector<sle::cplx> seg;
  for (int k = 0; k <= 50; ++k) seg.push_back(sle::cplx(0.7, 2.0 * k / 50));
  auto d = driving_extract(seg);
  for (double x : d.U) CHECK(x == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(d.times.back() == doctest::Approx(1.0).epsilon(1e-12));

  // tilted segment: the driving moves monotonically towards the tilt
  std::vector<sle::cplx> tilt;
  for (int k = 0; k <= 60; ++k) tilt.push_back(sle::cplx(0.5, 1.0) * (k / 60.0));
  auto dt = driving_extract(tilt);
  for (std::size_t k = 1; k < dt.size(); ++k) {
    CHECK(dt.U[k] > dt.U[k - 1]);
    CHECK(dt.times[k] > dt.times[k - 1]);
  }

  // round trip through the evolution at two resolutions
  auto round_trip = [](int n) {
    std::vector<double> t(n + 1), u(n + 1);
    for (int k = 0; k <= n; ++k) {
      t[k] = double(k) / n;
      u[k] = std::sin(3 * t[k]);
    }
    auto r = loewner_evolve(t, u, 1);
    std::vector<sle::cplx> c{u[0]};
    c.insert(c.end(), r.trace.begin(), r.trace.end());
    auto e = driving_extract(c);
    double err = 0;
    for (std::size_t k = 1; k < e.size(); ++k) err = std::max(err, std::abs(e.U[k] - std::sin(3 * e.times[k])));
    CHECK(e.times.back() == doctest::Approx(1).epsilon(1e-9));
    return err;
  };
  double e1 = round_trip(100), e2 = round_trip(200);
  CHECK(e1 < 0.02);
  CHECK(e2 < 0.6 * e1);

  auto part = driving_extract(seg, 0.25);
  CHECK(part.times.back() < 0.3);
  CHECK(part.size() < d.size());
  CHECK_THROWS_AS(driving_extract({sle::cplx(0, 0.1), sle::cplx(0, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(driving_extract({sle::cplx(0, 0), sle::cplx(1, -1)}), std::invalid_argument);
  CHECK_THROWS_AS(driving_extract({sle::cplx(0, 0)}), std::invalid_argument);
}
