#include "fractalp/construction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fractalp/certify.hpp"
#include "fractalp/disparity.hpp"
#include "fractalp/level_graph.hpp"

namespace fractalp {

double p_series(double p) {
  if (!(p > 1.0)) throw UsageError("p_series: requires p > 1");
  const int N = 64;
  KahanSum head;
  for (int j = 1; j < N; ++j) head.add(std::pow(static_cast<double>(j), -p));
  double nn = static_cast<double>(N);
  double tail = std::pow(nn, 1.0 - p) / (p - 1.0) + 0.5 * std::pow(nn, -p) +
                p * std::pow(nn, -p - 1.0) / 12.0 -
                p * (p + 1.0) * (p + 2.0) * std::pow(nn, -p - 3.0) / 720.0;
  return head.value() + tail;
}

namespace {

int64_t ipow(int64_t base, int exp) {
  int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

bool sorted_subset(const std::vector<int64_t>& small,
                   const std::vector<int64_t>& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// Merge a sorted cell list into maximal runs of consecutive indices.
std::vector<IndexRange> runs_of(const std::vector<int64_t>& cells) {
  std::vector<IndexRange> out;
  for (int64_t c : cells) {
    if (!out.empty() && out.back().hi == c)
      ++out.back().hi;
    else
      out.push_back({c, c + 1});
  }
  return out;
}

double cell_mass_of_index(const SelfSimilarMeasure& mu, int64_t idx, int level,
                          int K) {
  if (mu.is_uniform()) return std::pow(1.0 / K, level);
  double m = 1.0;
  for (int t = 0; t < level; ++t) {
    m *= mu.weight(static_cast<int>(idx % K));
    idx /= K;
  }
  return m;
}

}  // namespace

ConstructionRun::ConstructionRun(const SubdivisionScheme& s,
                                 const SelfSimilarMeasure& mu,
                                 ConstructionConfig cfg)
    : s_(s), mu_(mu), cfg_(std::move(cfg)) {
  if (!(cfg_.p > 1.0)) throw UsageError("construction: requires p > 1");
  if (!(cfg_.sigma > 0.0)) throw UsageError("construction: sigma must be positive");
  if (cfg_.k_max < 1) throw UsageError("construction: k_max must be >= 1");
  if (cfg_.omega.empty()) throw UsageError("construction: omega word is empty");
  for (uint8_t sym : cfg_.omega)
    if (sym >= s.branching())
      throw UsageError("construction: omega symbol out of range");
  if (&mu.scheme() != &s && mu.scheme().fingerprint() != s.fingerprint())
    throw UsageError("construction: measure belongs to a different scheme");
  if (cfg_.m_star == 0)
    throw UsageError("construction: ring radius M* must be >= 1");

  int cert_depth = std::min(4, s.max_level());
  if (cfg_.m_star < 0) {
    m_star_ = std::max(1, certify_projection_radius(s, cert_depth).m_star);
  } else {
    m_star_ = cfg_.m_star;
  }
  auto stab = verify_projection_stability(s, m_star_, std::min(2, cert_depth - 1),
                                          cert_depth);
  if (!stab.ok) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "construction: projection stability fails at ring radius %d",
                  m_star_);
    throw AnalyticError(msg);
  }

  n_max_ = cfg_.k_max * step();
  if (n_max_ > s.max_level())
    throw UsageError("construction: k_max * (M*+1) exceeds the usable depth");

  // Target words: prefixes of the cycled omega address.
  for (int j = 0; j <= cfg_.k_max; ++j) {
    std::vector<uint8_t> syms;
    for (int t = 0; t < j * step(); ++t)
      syms.push_back(cfg_.omega[static_cast<size_t>(t) % cfg_.omega.size()]);
    targets_.emplace_back(std::move(syms));
  }
  for (int j = 0; j < cfg_.k_max; ++j)
    if (pi_k(targets_[static_cast<size_t>(j + 1)], step()) != targets_[static_cast<size_t>(j)])
      throw AnalyticError("construction: target words fail the projection round-trip");

  // Ring systems, plus the exhaustive nesting-chain check.
  int64_t proj_span = ipow(s.branching(), step());
  for (int j = 0; j <= cfg_.k_max; ++j) {
    RingSystem r;
    r.level = j * step();
    const LevelGraph& g = s.level_graph(r.level);
    r.center = g.index_of(targets_[static_cast<size_t>(j)]);
    r.a = g.gamma(m_star_, r.center);
    r.b = g.gamma(2 * m_star_, r.center);
    r.bstar = g.gamma(2 * m_star_ + 1, r.center);
    if (!sorted_subset(r.a, r.b) || !sorted_subset(r.b, r.bstar))
      throw AnalyticError("construction: ring monotonicity violated");
    if (g.gamma_set(1, r.b) != r.bstar)
      throw AnalyticError("construction: B* differs from the halo of B");
    if (j >= 1) {
      const auto& prev = rings_.back();
      for (int64_t c : r.bstar)
        if (!std::binary_search(prev.a.begin(), prev.a.end(), c / proj_span)) {
          char msg[128];
          std::snprintf(msg, sizeof msg,
                        "construction: nesting chain broken at j=%d (cell %lld)",
                        j, static_cast<long long>(c));
          throw AnalyticError(msg);
        }
    }
    rings_.push_back(std::move(r));
  }

  l_star_ = certify_degree_bound(s, cert_depth).l_star;
  for (int lev = 1; lev <= std::min(3, s.max_level()); ++lev) {
    std::vector<int64_t> cells(static_cast<size_t>(s.level_size(lev)));
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int64_t>(i);
    n_t_ = std::max(n_t_, covering_of(s, lev, cells).n_t);
  }
}

const RingSystem& ConstructionRun::rings(int j) const {
  if (j < 0 || j > cfg_.k_max)
    throw UsageError("construction: ring index out of range");
  return rings_[static_cast<size_t>(j)];
}

std::string ConstructionRun::shape_key(int j, int m, CutoffMode mode,
                                       std::vector<size_t>& canon_rank) const {
  const RingSystem& r = rings_[static_cast<size_t>(j)];
  const LevelGraph& g = s_.level_graph(r.level);
  auto [cx, cy] = g.coords(r.center);
  struct Rel {
    int64_t dy, dx;
    size_t pos;
    bool in_a;
  };
  std::vector<Rel> rel;
  for (size_t i = 0; i < r.b.size(); ++i) {
    auto [x, y] = g.coords(r.b[i]);
    rel.push_back({y - cy, x - cx, i,
                   std::binary_search(r.a.begin(), r.a.end(), r.b[i])});
  }
  std::sort(rel.begin(), rel.end(), [](const Rel& u, const Rel& v) {
    return std::tie(u.dy, u.dx) < std::tie(v.dy, v.dx);
  });
  canon_rank.assign(rel.size(), 0);
  std::string key;
  char buf[48];
  std::snprintf(buf, sizeof buf, "m=%d;mode=%d;", m, static_cast<int>(mode));
  key += buf;
  for (size_t rank = 0; rank < rel.size(); ++rank) {
    canon_rank[rel[rank].pos] = rank;
    std::snprintf(buf, sizeof buf, "%lld,%lld,%d;",
                  static_cast<long long>(rel[rank].dx),
                  static_cast<long long>(rel[rank].dy), rel[rank].in_a ? 1 : 0);
    key += buf;
  }
  return key;
}

SparseCellFunction ConstructionRun::instantiate(
    int n, int j, const CacheEntry& entry,
    const std::vector<size_t>& canon_rank) const {
  const RingSystem& r = rings_[static_cast<size_t>(j)];
  int m = n - r.level;
  int64_t span = ipow(s_.branching(), m);
  SparseCellFunction f;
  f.level = n;
  f.index.reserve(r.b.size() * static_cast<size_t>(span));
  f.value.reserve(r.b.size() * static_cast<size_t>(span));
  for (size_t pos = 0; pos < r.b.size(); ++pos) {
    int64_t base = r.b[pos] * span;
    const double* src = entry.values.data() +
                        static_cast<int64_t>(canon_rank[pos]) * span;
    for (int64_t t = 0; t < span; ++t) {
      f.index.push_back(base + t);
      f.value.push_back(src[t]);
    }
  }
  return f;
}

ConstructionRun::CacheEntry ConstructionRun::solve_harmonic(
    int n, int j, const std::string& warm_key,
    const std::vector<size_t>& canon_rank) {
  const RingSystem& r = rings_[static_cast<size_t>(j)];
  int m = n - r.level;
  int64_t span = ipow(s_.branching(), m);
  const LevelGraph& g = s_.level_graph(n);

  FixedAssignment pins;
  for (const IndexRange& run : runs_of(r.a))
    pins.pin_range(run.lo * span, run.hi * span, 1.0);
  int64_t cursor = 0;
  for (const IndexRange& run : runs_of(r.b)) {
    if (run.lo * span > cursor) pins.pin_range(cursor, run.lo * span, 0.0);
    cursor = run.hi * span;
  }
  if (cursor < g.size()) pins.pin_range(cursor, g.size(), 0.0);
  pins.normalize();

  int64_t est_free =
      static_cast<int64_t>(r.b.size() - r.a.size()) * span;
  SolverOptions opt =
      est_free > cfg_.relaxed_threshold ? relaxed_solver_profile() : cfg_.solver;

  SparseCellFunction warm;
  const SparseCellFunction* warm_ptr = nullptr;
  auto prev = cache_.find(warm_key);
  if (prev != cache_.end()) {
    int64_t pspan = span / s_.branching();
    warm.level = n;
    warm.index.reserve(r.b.size() * static_cast<size_t>(span));
    warm.value.reserve(r.b.size() * static_cast<size_t>(span));
    for (size_t pos = 0; pos < r.b.size(); ++pos) {
      int64_t base = r.b[pos] * span;
      const double* src = prev->second.values.data() +
                          static_cast<int64_t>(canon_rank[pos]) * pspan;
      for (int64_t t = 0; t < span; ++t) {
        warm.index.push_back(base + t);
        warm.value.push_back(src[t / s_.branching()]);
      }
    }
    warm_ptr = &warm;
  }

  DirichletSolution sol = solve_dirichlet(g, pins, cfg_.p, opt, warm_ptr);
  if (!opt.relaxed && !sol.stats.converged) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "construction: cutoff solve missed tolerance at n=%d j=%d "
                  "(residual %.3e)",
                  n, j, sol.stats.kkt_residual);
    throw SolveError(msg);
  }
  if (sol.f.index.size() != r.b.size() * static_cast<size_t>(span))
    throw AnalyticError("construction: cutoff support mismatch");

  // Clamp to [0, 1]: pointwise projection is 1-Lipschitz on every edge, so
  // it never increases the energy and keeps the pinned sets exact.
  bool changed = false;
  for (double& v : sol.f.value) {
    double c = std::min(1.0, std::max(0.0, v));
    if (c != v) {
      v = c;
      changed = true;
    }
  }
  CacheEntry entry;
  entry.relaxed = opt.relaxed;
  entry.energy = changed ? p_energy(g, sol.f, cfg_.p) : sol.energy;
  entry.values.assign(r.b.size() * static_cast<size_t>(span), 0.0);
  for (size_t pos = 0; pos < r.b.size(); ++pos)
    std::copy_n(sol.f.value.data() + static_cast<int64_t>(pos) * span, span,
                entry.values.data() + static_cast<int64_t>(canon_rank[pos]) * span);
  return entry;
}

ConstructionRun::CacheEntry ConstructionRun::solve_max_of_cells(int n, int j) {
  const RingSystem& r = rings_[static_cast<size_t>(j)];
  int m = n - r.level;
  int64_t span = ipow(s_.branching(), m);
  const LevelGraph& g = s_.level_graph(n);
  const LevelGraph& gc = s_.level_graph(r.level);

  int64_t est_free = static_cast<int64_t>(r.b.size()) * span;
  SolverOptions opt =
      est_free > cfg_.relaxed_threshold ? relaxed_solver_profile() : cfg_.solver;

  // Dense layout over S(B), filled with the pointwise max of the per-cell
  // ring potentials (ball radius M* around each w in A).
  std::vector<double> acc(r.b.size() * static_cast<size_t>(span), 0.0);
  for (int64_t w : r.a) {
    ConductanceResult res =
        ring_conductance(s_, gc.word(w), m, cfg_.p, opt, m_star_);
    for (size_t t = 0; t < res.potential.index.size(); ++t) {
      int64_t idx = res.potential.index[t];
      int64_t cell = idx / span;
      auto it = std::lower_bound(r.b.begin(), r.b.end(), cell);
      if (it == r.b.end() || *it != cell)
        throw AnalyticError(
            "construction: cell cutoff leaks outside the outer ring");
      size_t pos = static_cast<size_t>(it - r.b.begin());
      double v = std::min(1.0, std::max(0.0, res.potential.value[t]));
      size_t slot = pos * static_cast<size_t>(span) +
                    static_cast<size_t>(idx - cell * span);
      acc[slot] = std::max(acc[slot], v);
    }
  }

  SparseCellFunction f;
  f.level = n;
  f.index.reserve(acc.size());
  f.value.reserve(acc.size());
  for (size_t pos = 0; pos < r.b.size(); ++pos) {
    int64_t base = r.b[pos] * span;
    for (int64_t t = 0; t < span; ++t) {
      f.index.push_back(base + t);
      f.value.push_back(acc[pos * static_cast<size_t>(span) + static_cast<size_t>(t)]);
    }
  }
  CacheEntry entry;
  entry.relaxed = opt.relaxed;
  entry.energy = p_energy(g, f, cfg_.p);
  entry.values = std::move(acc);  // b-index order; caller re-ranks below
  return entry;
}

SparseCellFunction ConstructionRun::build_cutoff(int n, int j, CutoffMode mode,
                                                 CutoffRecord* rec) {
  if (j < 1 || j > cfg_.k_max)
    throw UsageError("construction: cutoff index j out of range");
  if (n > n_max_ || step() * j > n)
    throw UsageError("construction: need (M*+1) j <= n <= k_max (M*+1)");
  const RingSystem& r = rings_[static_cast<size_t>(j)];
  if (static_cast<int64_t>(r.b.size()) == s_.level_size(r.level)) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "construction: outer ring B_%d fills level %d; no zero "
                  "boundary remains (raise n or shrink M*)",
                  j, r.level);
    throw AnalyticError(msg);
  }
  int m = n - step() * j;
  int64_t span = ipow(s_.branching(), m);

  std::vector<size_t> canon_rank;
  std::string key = shape_key(j, m, mode, canon_rank);
  bool cached = cache_.count(key) > 0;
  if (!cached) {
    if (mode == CutoffMode::HarmonicMinimizer) {
      std::vector<size_t> warm_rank;
      std::string warm_key =
          m >= 1 ? shape_key(j, m - 1, mode, warm_rank) : std::string();
      cache_[key] = solve_harmonic(n, j, warm_key, canon_rank);
    } else {
      CacheEntry entry = solve_max_of_cells(n, j);
      // re-rank from b-index order into the canonical shape order
      std::vector<double> canon(entry.values.size());
      for (size_t pos = 0; pos < r.b.size(); ++pos)
        std::copy_n(entry.values.data() + static_cast<int64_t>(pos) * span, span,
                    canon.data() + static_cast<int64_t>(canon_rank[pos]) * span);
      entry.values = std::move(canon);
      cache_[key] = std::move(entry);
    }
  }
  const CacheEntry& entry = cache_[key];
  SparseCellFunction f = instantiate(n, j, entry, canon_rank);

  // Constraint satisfaction: exact 1 on S(A_j); support inside S(B_j) holds
  // by the storage layout.
  for (int64_t c : r.a) {
    int64_t pos = f.find(c * span);
    for (int64_t t = 0; t < span; ++t)
      if (f.value[static_cast<size_t>(pos + t)] != 1.0)
        throw AnalyticError("construction: cutoff is not exactly 1 on S(A_j)");
  }
  if (rec) {
    rec->j = j;
    rec->m = m;
    rec->energy = entry.energy;
    rec->scaled = entry.energy * std::pow(cfg_.sigma, m);
    rec->from_cache = cached;
    rec->relaxed = entry.relaxed;
  }
  return f;
}

SparseCellFunction ConstructionRun::assemble(
    int n, const std::vector<SparseCellFunction>& cutoffs) const {
  int k = n / step();
  if (static_cast<int>(cutoffs.size()) != k)
    throw UsageError("construction: assemble needs cutoffs j = 1..k");

  SparseCellFunction f = cutoffs[0];
  for (int j = 2; j <= k; ++j) {
    const SparseCellFunction& fj = cutoffs[static_cast<size_t>(j - 1)];
    double inv = 1.0 / j;
    for (size_t t = 0; t < fj.index.size(); ++t) {
      int64_t pos = f.find(fj.index[t]);
      if (pos < 0)
        throw AnalyticError("construction: cutoff supports are not nested");
      f.value[static_cast<size_t>(pos)] += inv * fj.value[t];
    }
  }

  // Support separation: the halo of the innermost cutoff's support stays
  // inside S(A_{k-1}), where the previous cutoff is identically 1.
  if (k >= 2) {
    const RingSystem& prev = rings_[static_cast<size_t>(k - 1)];
    int64_t span_prev = ipow(s_.branching(), n - prev.level);
    const LevelGraph& g = s_.level_graph(n);
    const SparseCellFunction& fk = cutoffs[static_cast<size_t>(k - 1)];
    int64_t buf[LevelGraph::kMaxNeighbors];
    auto inside = [&](int64_t idx) {
      return std::binary_search(prev.a.begin(), prev.a.end(), idx / span_prev);
    };
    for (size_t t = 0; t < fk.index.size(); ++t) {
      if (fk.value[t] == 0.0) continue;
      if (!inside(fk.index[t]))
        throw AnalyticError("construction: support separation failed (cell)");
      int cnt = g.neighbors(fk.index[t], buf);
      for (int q = 0; q < cnt; ++q)
        if (!inside(buf[q]))
          throw AnalyticError("construction: support separation failed (halo)");
    }
  }
  return f;
}

SparseCellFunction ConstructionRun::project_one_level(
    const SparseCellFunction& f) const {
  SparseCellFunction out;
  out.level = f.level - 1;
  int K = s_.branching();
  for (size_t t = 0; t < f.index.size(); ++t) {
    int64_t parent = f.index[t] / K;
    double w = mu_.weight(static_cast<int>(f.index[t] % K));
    if (out.index.empty() || out.index.back() != parent) {
      out.index.push_back(parent);
      out.value.push_back(0.0);
    }
    out.value.back() += w * f.value[t];
  }
  return out;
}

LevelRecord ConstructionRun::analyze(int n) {
  if (n < step() || n > n_max_)
    throw UsageError("construction: level n outside the run range");
  LevelRecord rec;
  rec.n = n;
  rec.k = n / step();

  std::vector<SparseCellFunction> cutoffs;
  for (int j = 1; j <= rec.k; ++j) {
    CutoffRecord cr;
    cutoffs.push_back(build_cutoff(n, j, cfg_.cutoff_mode, &cr));
    rec.cutoffs.push_back(cr);
  }
  SparseCellFunction f = assemble(n, cutoffs);

  const LevelGraph& g = s_.level_graph(n);
  rec.energy = p_energy(g, f, cfg_.p);
  rec.scaled_energy = std::pow(cfg_.sigma, n) * rec.energy;

  KahanSum decomp;
  for (const CutoffRecord& cr : rec.cutoffs)
    decomp.add(std::pow(static_cast<double>(cr.j), -cfg_.p) * cr.energy);
  rec.decomposition_gap =
      std::abs(rec.energy - decomp.value()) / std::max(rec.energy, 1e-300);

  // Plateau: ascending-j harmonic sum, then exact comparison on S(A_k).
  double h = 0.0;
  for (int j = 1; j <= rec.k; ++j) h += 1.0 / j;
  rec.plateau_expected = h;
  const RingSystem& rk = rings_[static_cast<size_t>(rec.k)];
  int64_t span_k = ipow(s_.branching(), n - rk.level);
  rec.plateau_exact = true;
  for (int64_t c : rk.a) {
    int64_t pos = f.find(c * span_k);
    for (int64_t t = 0; t < span_k; ++t)
      if (f.value[static_cast<size_t>(pos + t)] != h) rec.plateau_exact = false;
  }
  rec.max_value = 0.0;
  for (double v : f.value) rec.max_value = std::max(rec.max_value, v);
  rec.plateau = h;
  if (rec.max_value != h) rec.plateau_exact = false;

  KahanSum lp;
  int K = s_.branching();
  for (size_t t = 0; t < f.index.size(); ++t)
    if (f.value[t] != 0.0)
      lp.add(cell_mass_of_index(mu_, f.index[t], n, K) * pow_abs(f.value[t], cfg_.p));
  rec.lp_norm = std::pow(lp.value(), 1.0 / cfg_.p);

  rec.projected.assign(static_cast<size_t>(n), {0, 0.0});
  rec.projected[static_cast<size_t>(n - 1)] = {n, rec.scaled_energy};
  SparseCellFunction cur = std::move(f);
  for (int m = n - 1; m >= 1; --m) {
    cur = project_one_level(cur);
    rec.projected[static_cast<size_t>(m - 1)] = {
        m, std::pow(cfg_.sigma, m) * p_energy(s_.level_graph(m), cur, cfg_.p)};
  }
  for (auto& [m, v] : rec.projected)
    rec.projected_max = std::max(rec.projected_max, v);
  return rec;
}

ConstructionReport ConstructionRun::run() {
  ConstructionReport rep;
  rep.p = cfg_.p;
  rep.sigma = cfg_.sigma;
  rep.sigma_source = cfg_.sigma_source;
  rep.cutoff_mode = cfg_.cutoff_mode == CutoffMode::HarmonicMinimizer
                        ? "harmonic-minimizer"
                        : "max-of-cell-cutoffs";
  rep.m_star = m_star_;
  rep.k_max = cfg_.k_max;
  rep.n_max = n_max_;
  rep.l_star = l_star_;
  rep.n_t = n_t_;
  rep.gamma_max = mu_.max_weight();

  for (int n = step(); n <= n_max_; ++n) rep.levels.push_back(analyze(n));

  for (const LevelRecord& lr : rep.levels)
    for (const CutoffRecord& cr : lr.cutoffs) rep.c1 = std::max(rep.c1, cr.scaled);
  rep.series = p_series(cfg_.p);
  rep.energy_bound = rep.c1 * rep.series;
  for (const LevelRecord& lr : rep.levels)
    rep.scaled_max = std::max(rep.scaled_max, lr.scaled_energy);
  rep.scaled_bounded = rep.scaled_max <= rep.energy_bound * (1.0 + 1e-12);

  double q = std::pow(rep.gamma_max, step() / cfg_.p);
  rep.lp_bound = std::pow(std::pow(static_cast<double>(l_star_ + 1), 2 * m_star_),
                          1.0 / cfg_.p) *
                 q / (1.0 - q);
  for (const LevelRecord& lr : rep.levels)
    rep.lp_max = std::max(rep.lp_max, lr.lp_norm);
  rep.lp_bounded = rep.lp_max <= rep.lp_bound * (1.0 + 1e-12);

  for (const LevelRecord& lr : rep.levels) {
    if (!(lr.scaled_energy > 0.0))
      throw AnalyticError("construction: assembled function has zero energy");
    rep.c2_observed =
        std::max(rep.c2_observed, lr.projected_max / lr.scaled_energy);
  }
  rep.c2_formula = static_cast<double>(l_star_) * static_cast<double>(n_t_);

  rep.sigma_le_one = cfg_.sigma <= 1.0 + 1e-15;
  rep.boundedness_label =
      rep.sigma_le_one
          ? (rep.scaled_bounded && rep.lp_bounded ? "holds at every depth"
                                                  : "violated (see records)")
          : "inapplicable (sigma > 1)";
  return rep;
}

ConstructionReport run_construction(const SubdivisionScheme& s,
                                    const SelfSimilarMeasure& mu,
                                    const ConstructionConfig& cfg) {
  ConstructionRun run(s, mu, cfg);
  return run.run();
}

}  // namespace fractalp
