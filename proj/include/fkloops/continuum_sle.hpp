#pragma once
// Continuum side: closed forms for beta, the crossing probability and the
// partition function; Bessel paths; the tree branch SLE(kappa, kappa - 6);
// the four-point diffusion; Loewner evolution with vertical slit maps and
// the zipper that extracts a driving function from a curve.
//
// Loewner chains use g_t' = 2 / (g_t - U_t), so a vertical slit of height h
// has capacity h^2 / 4.

#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace fkl {

namespace sle {
using cplx = std::complex<double>;
inline constexpr double kKappa = 16.0 / 3.0;
inline constexpr double kRho = kKappa - 6.0;
inline const double kSqrtKappa = 4.0 / std::sqrt(3.0);
}  // namespace sle

// ---------------------------------------------------------------------------
// Closed forms

// beta(v) = (-v + 2 - 2 sqrt(1 - v)) / v, evaluated as v / (1 + sqrt(1 - v))^2
// to avoid the cancellation at small v
inline double beta_of_v(double v) {
  if (!(v >= 0 && v <= 1)) throw std::domain_error("beta_of_v: v must lie in [0, 1]");
  double s = 1 + std::sqrt(1 - v);
  return v / (s * s);
}

inline double crossing_prob(double v) {
  if (!(v >= 0 && v <= 1)) throw std::domain_error("crossing_prob: v must lie in [0, 1]");
  double a = std::sqrt(1 - std::sqrt(1 - v)), b = std::sqrt(1 - std::sqrt(v));
  return a / (a + b);
}

struct PartitionPoint {
  double u = 0, v = 0, w = 0;
  double x() const { return v - u; }
  double y() const { return w - v; }
  double m() const {
    double r = y() / x();
    return 1 / (std::sqrt(1 + r) + std::sqrt(r));
  }
};

inline void check_order(const PartitionPoint& p) {
  if (!(p.u < p.v && p.v < p.w)) throw std::invalid_argument("partition point: need u < v < w");
}

inline double partition_Z(const PartitionPoint& p) {
  check_order(p);
  double m = p.m();
  return 1 / (std::pow(p.y(), 0.125) * std::pow(m * m + 1, 0.25) * std::pow(m, 0.25));
}

// d/du log Z: only m depends on u, through r = y / x with dr/du = y / x^2
inline double dlogZ_du(const PartitionPoint& p) {
  check_order(p);
  double x = p.x(), y = p.y(), r = y / x, m = p.m();
  double dm_dr = -m / (2 * std::sqrt(r * (1 + r)));
  double dlogZ_dm = -0.5 * m / (m * m + 1) - 0.25 / m;
  return dlogZ_dm * dm_dr * y / (x * x);
}

// ---------------------------------------------------------------------------
// Four-point diffusion coefficients. X = V - U, Y = W - V and M = +-sqrt(beta)
// with beta = beta(X / (X + Y)), so X = 4 Y M^2 / (1 - M^2)^2.

inline double fourpoint_x_of(double M, double Y) {
  double q = 1 - M * M;
  return 4 * Y * M * M / (q * q);
}
inline double fourpoint_m_of(double X, double Y) {
  double r = Y / X;
  return 1 / (std::sqrt(1 + r) + std::sqrt(r));
}
inline double fourpoint_sigma(double M, double Y) {
  double m2 = M * M, q = 1 - m2;
  return q * q * q / (2 * std::sqrt(3.0) * Y * std::abs(M) * (m2 + 1));
}
inline double fourpoint_x_drift(double M, double Y) {
  double m2 = M * M, q = m2 - 1;
  return (3 * m2 * m2 + 2 * m2 + 1) * q * q / (3 * Y * m2 * (m2 + 1) * (m2 + 1));
}
inline double fourpoint_w_rate(double M, double Y) {
  double m2 = M * M, r = (m2 - 1) / (m2 + 1);
  return 2 * r * r / Y;
}
inline double fourpoint_y_rate(double M, double Y) {
  double m2 = M * M, q = m2 - 1, s = m2 + 1;
  return -q * q * q * q / (2 * Y * m2 * s * s);
}

// ---------------------------------------------------------------------------
// Paths

enum class Scheme { euler, exact_bessel };

struct SdeParams {
  double dt = 1e-3;
  double T = 1;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::exact_bessel;

  int steps() const {
    if (!(dt > 0) || !(T > 0) || dt > T) throw std::invalid_argument("sde params: need 0 < dt <= T");
    return int(std::llround(T / dt));
  }
};

struct BesselPath {
  std::vector<double> times, X;
  int zero_hits = 0;  // steps ending at 0 (Euler truncation)
};

namespace detail {
// squared Bessel process of dimension dim over one step of length h
inline double squared_bessel_step(double q, double dim, double h, Scheme scheme, CounterRng& rng) {
  if (scheme == Scheme::euler) {
    double qp = std::max(q, 0.0);
    return std::max(q + dim * h + 2 * std::sqrt(qp) * std::sqrt(h) * rng.normal(), 0.0);
  }
  // noncentral chi-square with dim degrees of freedom and parameter q / h,
  // as a Poisson mixture of central ones
  std::poisson_distribution<long> pois(0.5 * q / h);
  long n = q > 0 ? pois(rng) : 0;
  std::gamma_distribution<double> gam(0.5 * dim + double(n), 1.0);
  return 2 * h * gam(rng);
}
}  // namespace detail

inline BesselPath bessel_path(double x0, double dim, const SdeParams& p, std::uint64_t stream = 0) {
  if (!(x0 >= 0)) throw std::invalid_argument("bessel_path: x0 must be nonnegative");
  if (!(dim > 0)) throw std::invalid_argument("bessel_path: dimension must be positive");
  int n = p.steps();
  CounterRng rng(p.seed, stream);
  BesselPath b;
  b.times.resize(n + 1);
  b.X.resize(n + 1);
  double q = x0 * x0;
  b.X[0] = x0;
  for (int k = 1; k <= n; ++k) {
    q = detail::squared_bessel_step(q, dim, p.dt, p.scheme, rng);
    if (q == 0) ++b.zero_hits;
    b.times[k] = k * p.dt;
    b.X[k] = std::sqrt(q);
  }
  return b;
}

struct DrivingPath {
  std::vector<double> times, U, V, W, Lambda;
  double integral_inv_x = 0;  // int dt / (V - U)
  bool finite = true;

  std::size_t size() const { return times.size(); }
  double X(std::size_t i) const { return V[i] - U[i]; }
  double Y(std::size_t i) const { return W[i] - V[i]; }
};

// The branch: X = V - U is (4 / sqrt 3) times a Bessel process of dimension
// 3/2, V = V0 + int 2 / X and U = V - X, so Lambda = 0. Over a step the
// integral of 1 / X is taken as 2 h / (X_k + X_{k+1}), floored at the
// Bessel scale sqrt(h) in the denominator.
inline DrivingPath sle_tree_branch(const SdeParams& p, double x0 = 0, double v0 = 0, std::uint64_t stream = 0) {
  auto b = bessel_path(x0 / sle::kSqrtKappa, 1.5, p, stream);
  DrivingPath d;
  std::size_t n = b.X.size();
  d.times = b.times;
  d.U.resize(n);
  d.V.resize(n);
  d.W.assign(n, std::numeric_limits<double>::infinity());
  d.Lambda.assign(n, 0.0);
  double v = v0, floor = sle::kSqrtKappa * std::sqrt(p.dt);
  for (std::size_t k = 0; k < n; ++k) {
    double x = sle::kSqrtKappa * b.X[k];
    if (k > 0) {
      double xp = sle::kSqrtKappa * b.X[k - 1];
      double inc = 2 * p.dt / std::max(xp + x, floor);
      d.integral_inv_x += inc;
      v += 2 * inc;
    }
    d.V[k] = v;
    d.U[k] = v - x;
  }
  d.finite = std::isfinite(d.integral_inv_x);
  return d;
}

// realised quadratic variation of U over the path, divided by its duration
inline double quadratic_variation_rate(const std::vector<double>& t, const std::vector<double>& u) {
  if (t.size() < 2 || t.size() != u.size()) throw std::invalid_argument("quadratic_variation_rate: need two samples");
  double qv = 0;
  for (std::size_t k = 1; k < u.size(); ++k) qv += (u[k] - u[k - 1]) * (u[k] - u[k - 1]);
  return qv / (t.back() - t.front());
}

// ---------------------------------------------------------------------------
// Four-point diffusion
//
// Three routes driven by the same Brownian increments:
//   M: dM = sigma dB, W by its ODE, V by the Loewner flow, X from (M, Y);
//   X: dX = sign(M) (4 / sqrt 3) dB + drift dt, with Y and W again;
//   Z: dU = sqrt(kappa) dB' + kappa d/du log Z dt, V and W by the Loewner
//      flow, with dB' = -sign(M) dB, M = sqrt(beta(X / (X + Y))) up to sign.
// The M route takes state-sized substeps (see fourpoint_advance) and hands
// the summed increment to the other two. The routes are compared until the
// first visit to 0 or until X falls below guard * X0.

struct FourPointOptions {
  double y_floor = 1e-3;  // stop once Y drops below y_floor * Y0
  double min_substep = 1e-10;
  double step_frac = 0.1;
  double guard = 0.05;
};

struct FourPointPath {
  std::vector<double> times, M, X, Y, W, U, V;
  std::vector<double> X_direct, M_z;
  std::size_t agree_until = 0;  // routes are compared on indices < agree_until
  double max_dev_X = 0;         // |X - X_direct|
  double max_dev_M = 0;         // |M| vs the Z route
  bool stopped = false;         // Y reached its floor
  long substeps = 0;
  int zero_visits = 0;
};

namespace detail {
struct FourPointState {
  double M, V, W;
  double Y() const { return W - V; }
};

inline double fair_sign(CounterRng& rng) { return rng.uniform() < 0.5 ? -1.0 : 1.0; }

// Advances s over h and returns the Brownian increment used. Substeps are
// sized from the state alone, so that sigma sqrt(h') stays below
// o.step_frac of the distance from M to {0, +-1}; each is then a mean-free
// Milstein step. Where that would need h' < o.min_substep, M is next to zero
// and the step is taken in X instead, where the noise is additive, reflecting
// at zero with a fair sign. V moves by 2h' over the mean of X at the two
// ends, floored at the typical Bessel displacement. Stops early once Y < y_min.
inline double fourpoint_advance(FourPointState& s, double h, double y_min, const FourPointOptions& o,
                                CounterRng& rng, FourPointPath& out) {
  double left = h, dB = 0;
  while (left > 0) {
    double y = s.Y();
    if (y < y_min) break;
    double sig = fourpoint_sigma(s.M, y);
    double m = std::abs(s.M), q = 1 - m * m;
    double room = std::min(m, q > 0 ? 1 - m : 0.0);
    double hs = left, need = std::pow(o.step_frac * room / sig, 2);
    bool near_zero = need < o.min_substep && m < 0.5;
    if (near_zero) hs = std::min(left, o.min_substep);
    else if (need < hs) hs = std::max(need, o.min_substep);
    double db = std::sqrt(hs) * rng.normal();
    double x0 = fourpoint_x_of(s.M, y), Mp;
    ++out.substeps;
    if (near_zero) {
      double sg = s.M > 0 ? 1 : -1;
      double xp = x0 + sg * sle::kSqrtKappa * db + fourpoint_x_drift(s.M, y) * hs;
      if (xp <= 0) {
        ++out.zero_visits;
        sg = fair_sign(rng);
      }
      Mp = sg * fourpoint_m_of(std::max(std::abs(xp), std::numeric_limits<double>::min()), y);
    } else {
      double dlog = -6 * m / q - 1 / m - 2 * m / (m * m + 1);
      Mp = s.M + sig * db + 0.5 * sig * sig * (s.M > 0 ? dlog : -dlog) * (db * db - hs);
      if (Mp * s.M <= 0) {
        ++out.zero_visits;
        Mp = fair_sign(rng) * m;
      } else if (std::abs(Mp) >= 1) {
        Mp = s.M;
      }
    }
    double xbar = std::max(0.5 * (x0 + fourpoint_x_of(Mp, y)), sle::kSqrtKappa * std::sqrt(hs));
    s.W += fourpoint_w_rate(s.M, y) * hs;
    s.V = std::min(s.V + 2 * hs / xbar, s.W);
    s.M = Mp;
    dB += db;
    left -= hs;
  }
  return dB;
}
}  // namespace detail

inline FourPointPath fourpoint_sde(double M0, double Y0, double W0, const SdeParams& p, const FourPointOptions& o = {},
                                   std::uint64_t stream = 0) {
  if (!(std::abs(M0) < 1) || M0 == 0) throw std::invalid_argument("fourpoint_sde: need 0 < |M0| < 1");
  if (!(Y0 > 0)) throw std::invalid_argument("fourpoint_sde: Y0 must be positive");
  int n = p.steps();
  CounterRng rng(p.seed, stream);
  FourPointPath path;
  detail::FourPointState s{M0, W0 - Y0, W0};
  double X0 = fourpoint_x_of(M0, Y0);
  // X route and Z route state
  double xb = X0, yb = Y0, wb = W0, signb = M0 > 0 ? 1 : -1;
  double uc = s.V - X0, vc = s.V, wc = W0;
  bool comparing = true;
  auto record = [&](double t) {
    path.times.push_back(t);
    path.M.push_back(s.M);
    path.X.push_back(fourpoint_x_of(s.M, s.Y()));
    path.Y.push_back(s.Y());
    path.W.push_back(s.W);
    path.V.push_back(s.V);
    path.U.push_back(s.V - path.X.back());
    path.X_direct.push_back(xb);
    path.M_z.push_back(vc > uc && wc > vc ? fourpoint_m_of(vc - uc, wc - vc) : 0.0);
    if (comparing) {
      path.max_dev_X = std::max(path.max_dev_X, std::abs(path.X.back() - xb));
      path.max_dev_M = std::max(path.max_dev_M, std::abs(std::abs(s.M) - path.M_z.back()));
      path.agree_until = path.times.size();
    }
  };
  record(0);
  for (int k = 1; k <= n; ++k) {
    double mprev = s.M;
    int visits = path.zero_visits;
    double dB = detail::fourpoint_advance(s, p.dt, o.y_floor * Y0, o, rng, path);
    double xnow = fourpoint_x_of(s.M, s.Y());
    if (comparing) {
      double mb = signb * fourpoint_m_of(xb, yb);
      double xb2 = xb + signb * sle::kSqrtKappa * dB + fourpoint_x_drift(mb, yb) * p.dt;
      wb += fourpoint_w_rate(mb, yb) * p.dt;
      yb += fourpoint_y_rate(mb, yb) * p.dt;
      xb = xb2;
      double sgn = mprev > 0 ? 1 : -1;
      double x = vc - uc;
      double du = sle::kKappa * dlogZ_du({uc, vc, wc}) * p.dt - sgn * sle::kSqrtKappa * dB;
      vc += 2 * p.dt / x;
      wc += 2 * p.dt / (wc - uc);
      uc += du;
      if (path.zero_visits != visits || xb < o.guard * X0 || xnow < o.guard * X0 || vc - uc < o.guard * X0 ||
          yb <= 0)
        comparing = false;
    }
    record(k * p.dt);
    if (s.Y() < o.y_floor * Y0) {
      path.stopped = true;
      break;
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Loewner evolution with piecewise-constant driving
//
// Over step k the driving is constant, equal to the mean of the two samples,
// and g grows by the vertical slit map z -> u + sqrt((z - u)^2 + 4 h).

namespace detail {
inline sle::cplx upper_sqrt(sle::cplx q, sle::cplx sign_ref) {
  sle::cplx r = std::sqrt(q);
  if (r.imag() < 0 || (r.imag() == 0 && sign_ref.imag() == 0 && sign_ref.real() < 0)) r = -r;
  return r;
}
inline sle::cplx slit_forward(sle::cplx z, double u, double h) {
  return u + upper_sqrt((z - u) * (z - u) + 4 * h, z - u);
}
inline sle::cplx slit_inverse(sle::cplx w, double u, double h) {
  return u + upper_sqrt((w - u) * (w - u) - 4 * h, w - u);
}
}  // namespace detail

struct LoewnerResult {
  std::vector<double> times;          // at the recorded trace points
  std::vector<sle::cplx> trace;       // gamma(t)
  std::vector<double> V, Lambda;      // per driving sample
  std::vector<double> step_u, step_h;  // the elementary maps
  double max_height = 0;

  std::string trace_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "t,re,im\n";
    for (std::size_t i = 0; i < trace.size(); ++i) os << times[i] << ',' << trace[i].real() << ',' << trace[i].imag() << '\n';
    return os.str();
  }
};

// V is the image of the rightmost point of the hull on the real line. A step
// moves it by the flow of the real point, sqrt(X^2 + 4h) - X with
// X = V - u; when the driving sits to the right of V the slit starts off
// the hull and V first jumps to u. Those jumps accumulate into Lambda.
// trace_stride = 0 records no trace.
inline LoewnerResult loewner_evolve(const std::vector<double>& times, const std::vector<double>& U,
                                    int trace_stride = 1) {
  if (times.size() != U.size() || times.size() < 2) throw std::invalid_argument("loewner_evolve: need two samples");
  std::size_t n = times.size() - 1;
  LoewnerResult r;
  r.step_u.resize(n);
  r.step_h.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double h = times[k + 1] - times[k];
    if (!(h > 0)) throw std::invalid_argument("loewner_evolve: times must increase");
    r.step_u[k] = 0.5 * (U[k] + U[k + 1]);
    r.step_h[k] = h;
  }
  r.V.resize(n + 1);
  r.Lambda.resize(n + 1);
  double v = U[0], lam = 0;
  r.V[0] = v;
  r.Lambda[0] = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double u = r.step_u[k];
    if (u > v) {
      lam += u - v;
      v = u;
    }
    double x = v - u;
    v = u + std::sqrt(x * x + 4 * r.step_h[k]);
    r.V[k + 1] = v;
    r.Lambda[k + 1] = lam;
  }
  if (trace_stride > 0) {
    for (std::size_t k = 1; k <= n; k += trace_stride) {
      sle::cplx z = r.step_u[k - 1];
      for (std::size_t j = k; j-- > 0;) z = detail::slit_inverse(z, r.step_u[j], r.step_h[j]);
      r.times.push_back(times[k]);
      r.trace.push_back(z);
      r.max_height = std::max(r.max_height, z.imag());
    }
  }
  return r;
}

// g composed over the steps [from, to) of an evolution
inline sle::cplx loewner_map(const LoewnerResult& r, sle::cplx z, std::size_t from, std::size_t to) {
  if (from > to || to > r.step_u.size()) throw std::out_of_range("loewner_map: step range");
  for (std::size_t k = from; k < to; ++k) z = detail::slit_forward(z, r.step_u[k], r.step_h[k]);
  return z;
}

// Zipper with vertical slits: the image p = x + iy of the next vertex is
// unzipped by z -> x + sqrt((z - x)^2 + y^2), a step of capacity y^2 / 4
// with driving x. The result has one sample per vertex, starting at (0, U0).
// max_time stops the extraction once the capacity exceeds it.
inline DrivingPath driving_extract(const std::vector<sle::cplx>& curve,
                                   double max_time = std::numeric_limits<double>::infinity()) {
  if (curve.size() < 2) throw std::invalid_argument("driving_extract: need at least two vertices");
  if (curve[0].imag() != 0) throw std::invalid_argument("driving_extract: the curve must start on the real line");
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (!(curve[i].imag() > 0)) throw std::invalid_argument("driving_extract: the curve leaves the upper half-plane");
  DrivingPath d;
  std::vector<sle::cplx> pts(curve.begin() + 1, curve.end());
  double t = 0;
  d.times.push_back(0);
  d.U.push_back(curve[0].real());
  for (std::size_t k = 0; k < pts.size() && t <= max_time; ++k) {
    sle::cplx p = pts[k];
    if (!(p.imag() > 0)) throw std::runtime_error("driving_extract: unzipped vertex fell onto the real line");
    double x = p.real(), y = p.imag();
    t += y * y / 4;
    d.times.push_back(t);
    d.U.push_back(x);
    for (std::size_t j = k + 1; j < pts.size(); ++j) pts[j] = x + detail::upper_sqrt((pts[j] - x) * (pts[j] - x) + y * y, pts[j] - x);
  }
  std::size_t n = d.times.size();
  d.V.assign(n, std::numeric_limits<double>::quiet_NaN());
  d.W.assign(n, std::numeric_limits<double>::quiet_NaN());
  d.Lambda.assign(n, 0.0);
  return d;
}

inline std::string driving_csv(const DrivingPath& d) {
  std::ostringstream os;
  os.precision(17);
  os << "t,U,V,W,X,Y,Lambda\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    os << d.times[i] << ',' << d.U[i] << ',' << d.V[i] << ',' << d.W[i] << ',' << d.X(i) << ',' << d.Y(i) << ','
       << d.Lambda[i] << '\n';
  return os.str();
}

}  // namespace fkl
