#pragma once
// Critical FK measure on the primal graph of a domain: weights, exact
// enumeration and Markov chain samplers.
//
// The primal graph carries free boundary conditions; equivalently its dual is
// wired, all exterior white squares forming one dual vertex. Edges may be held
// open (the removed arcs of a 4-point marking); they are never resampled.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lattice_domain.hpp"
#include "rng.hpp"

namespace fkl {

inline const double kSqrt2 = std::sqrt(2.0);
inline const double kPc = kSqrt2 / (1.0 + kSqrt2);

struct ModelParams {
  double p = kPc;
  double q = 2.0;
  double mesh = 1.0;
};

// dual parameter from p p* / ((1-p)(1-p*)) = q
inline double dual_p(double p, double q) {
  double r = q * (1.0 - p) / p;
  return r / (1.0 + r);
}

struct FkConfig {
  std::vector<std::uint8_t> open;

  bool operator==(const FkConfig&) const = default;
  int num_open() const { return int(std::count(open.begin(), open.end(), 1)); }
};

inline std::string to_hex(const FkConfig& c) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < c.open.size(); i += 4) {
    int nib = 0;
    for (int j = 0; j < 4 && i + j < c.open.size(); ++j) nib |= (c.open[i + j] ? 1 : 0) << j;
    s.push_back(digits[nib]);
  }
  return s;
}

inline FkConfig from_hex(const std::string& s, int num_edges) {
  FkConfig c;
  c.open.assign(num_edges, 0);
  for (int i = 0; i < num_edges; ++i) {
    char ch = s.at(i / 4);
    int nib = (ch >= 'a') ? ch - 'a' + 10 : ch - '0';
    c.open[i] = (nib >> (i % 4)) & 1;
  }
  return c;
}

class UnionFind {
 public:
  explicit UnionFind(int n = 0) { reset(n); }
  void reset(int n) {
    parent_.resize(n);
    std::iota(parent_.begin(), parent_.end(), 0);
    count_ = n;
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return false;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
    --count_;
    return true;
  }
  int count() const { return count_; }

 private:
  std::vector<int> parent_;
  int count_ = 0;
};

inline int count_clusters(const Domain& dom, const FkConfig& cfg) {
  UnionFind uf(dom.num_blacks());
  for (int i = 0; i < dom.num_edges(); ++i)
    if (cfg.open[i]) uf.unite(dom.edge(i).u, dom.edge(i).v);
  return uf.count();
}

// cluster label per black vertex
inline std::vector<int> cluster_labels(const Domain& dom, const FkConfig& cfg) {
  UnionFind uf(dom.num_blacks());
  for (int i = 0; i < dom.num_edges(); ++i)
    if (cfg.open[i]) uf.unite(dom.edge(i).u, dom.edge(i).v);
  std::vector<int> lab(dom.num_blacks());
  for (int b = 0; b < dom.num_blacks(); ++b) lab[b] = uf.find(b);
  return lab;
}

// Dual graph: interior white squares plus one vertex standing for all
// exterior whites. Each primal edge has one dual edge crossing it.
struct DualGraph {
  int num_vertices = 0;
  std::vector<std::pair<int, int>> edges;  // indexed like primal edges
  std::vector<LatticeCoord> pos;           // white squares; pos[0] is unused
};

inline DualGraph dual_graph(const Domain& dom) {
  DualGraph g;
  g.pos.push_back({0, 0});
  std::unordered_map<std::uint64_t, int> id;
  auto white_id = [&](LatticeCoord w) {
    for (int s = 0; s < 4; ++s)
      if (dom.find_black({w.x2 + 2 * detail::side_dx[s], w.y2 + 2 * detail::side_dy[s]}) < 0) return 0;
    auto [it, fresh] = id.emplace(detail::key(w.x2, w.y2), int(id.size()) + 1);
    if (fresh) g.pos.push_back(w);
    return it->second;
  };
  g.edges.resize(dom.num_edges());
  for (int i = 0; i < dom.num_edges(); ++i) {
    auto& pe = dom.edge(i);
    auto c = dom.corner_point(pe.u, pe.ku);
    // the two white squares at this medial vertex sit on the other diagonal
    int sy = (pe.ku & 1) ? 1 : -1;
    LatticeCoord w1{c.x2 + 1, c.y2 + sy}, w2{c.x2 - 1, c.y2 - sy};
    g.edges[i] = {white_id(w1), white_id(w2)};
  }
  g.num_vertices = int(id.size()) + 1;
  return g;
}

inline FkConfig dual_config(const Domain& dom, const FkConfig& cfg) {
  if (int(cfg.open.size()) != dom.num_edges()) throw std::invalid_argument("dual_config: shape mismatch");
  FkConfig d;
  d.open.resize(cfg.open.size());
  for (std::size_t i = 0; i < cfg.open.size(); ++i) d.open[i] = cfg.open[i] ? 0 : 1;
  return d;
}

inline int count_dual_clusters(const Domain& dom, const FkConfig& cfg, const DualGraph& g) {
  UnionFind uf(g.num_vertices);
  for (int i = 0; i < dom.num_edges(); ++i)
    if (!cfg.open[i]) uf.unite(g.edges[i].first, g.edges[i].second);
  return uf.count();
}

inline int count_dual_clusters(const Domain& dom, const FkConfig& cfg) {
  return count_dual_clusters(dom, cfg, dual_graph(dom));
}

// p^{#open} (1-p)^{#closed} q^{#clusters} over the free edges. Held-open edges
// contribute no p factor and must be open.
inline double fk_weight(const Domain& dom, const FkConfig& cfg, const ModelParams& mp,
                        const std::vector<std::int8_t>* forced = nullptr) {
  if (int(cfg.open.size()) != dom.num_edges()) throw std::invalid_argument("fk_weight: shape mismatch");
  int o = 0, c = 0;
  for (int i = 0; i < dom.num_edges(); ++i) {
    if (forced && (*forced)[i] >= 0) {
      if (!cfg.open[i]) return 0.0;
      continue;
    }
    (cfg.open[i] ? o : c)++;
  }
  double w = std::pow(mp.q, count_clusters(dom, cfg));
  if (o) w *= std::pow(mp.p, o);
  if (c) w *= std::pow(1.0 - mp.p, c);
  return w;
}

inline double fk_weight(const Domain4& m, const FkConfig& cfg, const ModelParams& mp) {
  return fk_weight(m.domain, cfg, mp, &m.forced);
}

// Exact distribution over the free edges; config index bit k = state of the
// k-th free edge.
struct ExactMeasure {
  std::vector<int> free_edges;
  std::vector<double> prob;
  FkConfig base;  // held-open edges set, free edges closed

  FkConfig config(std::uint64_t mask) const {
    FkConfig c = base;
    for (std::size_t k = 0; k < free_edges.size(); ++k) c.open[free_edges[k]] = (mask >> k) & 1;
    return c;
  }
  std::uint64_t mask_of(const FkConfig& c) const {
    std::uint64_t m = 0;
    for (std::size_t k = 0; k < free_edges.size(); ++k)
      if (c.open[free_edges[k]]) m |= std::uint64_t(1) << k;
    return m;
  }
};

inline int enumeration_cap_default() { return 20; }

inline ExactMeasure enumerate_measure(const Domain& dom, const ModelParams& mp,
                                      const std::vector<std::int8_t>* forced = nullptr,
                                      int cap = enumeration_cap_default()) {
  ExactMeasure em;
  em.base.open.assign(dom.num_edges(), 0);
  for (int i = 0; i < dom.num_edges(); ++i) {
    if (forced && (*forced)[i] >= 0)
      em.base.open[i] = 1;
    else
      em.free_edges.push_back(i);
  }
  if (int(em.free_edges.size()) > cap)
    throw std::invalid_argument("enumerate_measure: " + std::to_string(em.free_edges.size()) +
                                " free edges exceed the cap of " + std::to_string(cap));
  std::uint64_t n = std::uint64_t(1) << em.free_edges.size();
  em.prob.resize(n);
  double z = 0.0;
  for (std::uint64_t m = 0; m < n; ++m) {
    em.prob[m] = fk_weight(dom, em.config(m), mp, forced);
    z += em.prob[m];
  }
  for (auto& p : em.prob) p /= z;
  return em;
}

inline ExactMeasure enumerate_measure(const Domain4& m, const ModelParams& mp,
                                      int cap = enumeration_cap_default()) {
  return enumerate_measure(m.domain, mp, &m.forced, cap);
}

enum class Algorithm { heat_bath, chayes_machta };

struct SamplerOptions {
  int burn_in = 100;
  int thin = 10;
  Algorithm algorithm = Algorithm::heat_bath;
  int replicas = 1;
  int workers = 1;
};

// One Markov chain. A sweep is one heat-bath update of every free edge in
// index order, or one Chayes-Machta step.
class FkChain {
 public:
  FkChain(const Domain& dom, const ModelParams& mp, std::uint64_t seed, std::uint64_t stream,
          const std::vector<std::int8_t>* forced = nullptr)
      : dom_(&dom), mp_(mp), rng_(seed, stream) {
    cfg_.open.assign(dom.num_edges(), 0);
    for (int i = 0; i < dom.num_edges(); ++i) {
      if (forced && (*forced)[i] >= 0)
        cfg_.open[i] = 1;
      else
        free_.push_back(i);
    }
    stamp_.assign(dom.num_blacks(), 0);
  }

  const FkConfig& config() const { return cfg_; }
  FkConfig& mutable_config() { return cfg_; }
  CounterRng& rng() { return rng_; }
  long sweeps() const { return sweeps_; }

  void heat_bath_sweep() {
    for (int e : free_) {
      auto& pe = dom_->edge(e);
      cfg_.open[e] = 0;
      bool joined = connected(pe.u, pe.v);
      double po = joined ? mp_.p : mp_.p / (mp_.p + (1.0 - mp_.p) * mp_.q);
      cfg_.open[e] = rng_.uniform() < po ? 1 : 0;
    }
    ++sweeps_;
  }

  // Chayes-Machta step for q >= 1: each cluster is active with probability
  // 1/q, then free edges inside the active set are resampled with probability p.
  void chayes_machta_step() {
    if (mp_.q < 1.0) throw std::invalid_argument("chayes_machta: requires q >= 1");
    int nb = dom_->num_blacks();
    uf_.reset(nb);
    for (int i = 0; i < dom_->num_edges(); ++i)
      if (cfg_.open[i]) uf_.unite(dom_->edge(i).u, dom_->edge(i).v);
    active_.assign(nb, 2);
    for (int b = 0; b < nb; ++b) {
      int r = uf_.find(b);
      if (active_[r] == 2) active_[r] = rng_.uniform() < 1.0 / mp_.q ? 1 : 0;
    }
    for (int e : free_) {
      auto& pe = dom_->edge(e);
      if (active_[uf_.find(pe.u)] == 1 && active_[uf_.find(pe.v)] == 1)
        cfg_.open[e] = rng_.uniform() < mp_.p ? 1 : 0;
    }
    ++sweeps_;
  }

  void sweep(Algorithm a) {
    if (a == Algorithm::heat_bath)
      heat_bath_sweep();
    else
      chayes_machta_step();
  }

 private:
  bool connected(int s, int t) {
    if (s == t) return true;
    if (++cur_stamp_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      cur_stamp_ = 1;
    }
    queue_.clear();
    queue_.push_back(s);
    stamp_[s] = cur_stamp_;
    for (std::size_t h = 0; h < queue_.size(); ++h) {
      int b = queue_[h];
      for (int k = 0; k < 4; ++k) {
        int e = dom_->corner_edge(b, k);
        if (e < 0 || !cfg_.open[e]) continue;
        int o = dom_->neighbour(b, k);
        if (o == t) return true;
        if (stamp_[o] != cur_stamp_) {
          stamp_[o] = cur_stamp_;
          queue_.push_back(o);
        }
      }
    }
    return false;
  }

  const Domain* dom_;
  ModelParams mp_;
  CounterRng rng_;
  FkConfig cfg_;
  std::vector<int> free_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t cur_stamp_ = 0;
  std::vector<int> queue_;
  UnionFind uf_;
  std::vector<std::uint8_t> active_;
  long sweeps_ = 0;
};

struct Sample {
  FkConfig config;
  std::uint64_t seed;
  int replica;
  long sweep;
};

template <class F>
void parallel_for(int n, int workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> th;
  std::atomic<int> next{0};
  for (int w = 0; w < std::min(workers, n); ++w)
    th.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) f(i);
    });
  for (auto& t : th) t.join();
}

// n samples split over opts.replicas independent chains; output order and
// content depend only on (seed, replicas), not on the worker count.
inline std::vector<Sample> sample(const Domain& dom, const ModelParams& mp, int n, std::uint64_t seed,
                                  const SamplerOptions& opts = {},
                                  const std::vector<std::int8_t>* forced = nullptr) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  int R = std::max(1, std::min(opts.replicas, n));
  std::vector<std::vector<Sample>> parts(R);
  parallel_for(R, opts.workers, [&](int r) {
    int cnt = n / R + (r < n % R ? 1 : 0);
    FkChain ch(dom, mp, seed, std::uint64_t(r), forced);
    for (int s = 0; s < opts.burn_in; ++s) ch.sweep(opts.algorithm);
    for (int i = 0; i < cnt; ++i) {
      for (int s = 0; s < std::max(1, opts.thin); ++s) ch.sweep(opts.algorithm);
      parts[r].push_back({ch.config(), seed, r, ch.sweeps()});
    }
  });
  std::vector<Sample> out;
  out.reserve(n);
  for (auto& p : parts)
    for (auto& s : p) out.push_back(std::move(s));
  return out;
}

inline std::vector<Sample> sample(const Domain4& m, const ModelParams& mp, int n, std::uint64_t seed,
                                  const SamplerOptions& opts = {}) {
  return sample(m.domain, mp, n, seed, opts, &m.forced);
}

}  // namespace fkl
