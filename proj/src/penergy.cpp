#include "fractalp/penergy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace fractalp {

// ---------------------------------------------------------------- energies

double p_energy(const LevelGraph& g, std::span<const double> values, double p) {
  if (p < 1.0) throw UsageError("p_energy: requires p >= 1");
  if (static_cast<int64_t>(values.size()) != g.size())
    throw UsageError("p_energy: value count does not match the level size");
  KahanSum acc;
  g.for_each_edge(
      [&](int64_t u, int64_t v) { acc.add(pow_abs(values[u] - values[v], p)); });
  return acc.value();
}

double p_energy_on(const LevelGraph& g, std::span<const int64_t> cells,
                   std::span<const double> values, double p) {
  if (p < 1.0) throw UsageError("p_energy_on: requires p >= 1");
  if (cells.size() != values.size())
    throw UsageError("p_energy_on: cells/values size mismatch");
  if (!std::is_sorted(cells.begin(), cells.end()))
    throw UsageError("p_energy_on: cells must be sorted");
  KahanSum acc;
  int64_t buf[LevelGraph::kMaxNeighbors];
  for (size_t a = 0; a < cells.size(); ++a) {
    int k = g.neighbors(cells[a], buf);
    for (int t = 0; t < k; ++t) {
      if (buf[t] <= cells[a]) continue;  // each unordered pair once
      auto it = std::lower_bound(cells.begin(), cells.end(), buf[t]);
      if (it != cells.end() && *it == buf[t])
        acc.add(pow_abs(values[a] - values[static_cast<size_t>(it - cells.begin())], p));
    }
  }
  return acc.value();
}

int64_t SparseCellFunction::find(int64_t i) const {
  auto it = std::lower_bound(index.begin(), index.end(), i);
  if (it == index.end() || *it != i) return -1;
  return it - index.begin();
}

double SparseCellFunction::at(int64_t i) const {
  int64_t pos = find(i);
  return pos < 0 ? 0.0 : value[static_cast<size_t>(pos)];
}

double SparseCellFunction::max_abs() const {
  double m = 0;
  for (double v : value) m = std::max(m, std::fabs(v));
  return m;
}

void SparseCellFunction::check_sorted() const {
  if (index.size() != value.size())
    throw UsageError("sparse function: index/value size mismatch");
  for (size_t i = 0; i + 1 < index.size(); ++i)
    if (index[i] >= index[i + 1])
      throw UsageError("sparse function: indices not strictly increasing");
}

double p_energy(const LevelGraph& g, const SparseCellFunction& f, double p) {
  if (p < 1.0) throw UsageError("p_energy: requires p >= 1");
  if (f.level != g.level()) throw UsageError("p_energy: level mismatch");
  KahanSum acc;
  int64_t buf[LevelGraph::kMaxNeighbors];
  for (size_t a = 0; a < f.index.size(); ++a) {
    int64_t u = f.index[a];
    int k = g.neighbors(u, buf);
    for (int t = 0; t < k; ++t) {
      int64_t v = buf[t];
      int64_t pos = f.find(v);
      if (pos >= 0) {
        if (v > u)
          acc.add(pow_abs(f.value[a] - f.value[static_cast<size_t>(pos)], p));
      } else {
        // absent neighbors hold 0 and are visited from this side only
        acc.add(pow_abs(f.value[a], p));
      }
    }
  }
  return acc.value();
}

// ------------------------------------------------------------------- pins

void FixedAssignment::pin_range(int64_t lo, int64_t hi, double value) {
  if (lo < 0 || hi <= lo) throw UsageError("pin_range: empty or negative interval");
  if (!std::isfinite(value)) throw UsageError("pin_range: non-finite value");
  ranges_.push_back({lo, hi, value});
  normalized_ = false;
}

void FixedAssignment::pin_descendants(const SubdivisionScheme& s, const CellWord& w,
                                      int at_level, double value) {
  if (at_level < w.level())
    throw UsageError("pin_descendants: target level above the cell");
  if (at_level > s.max_level())
    throw UsageError("pin_descendants: level exceeds the scheme limit");
  int64_t base = 0;
  for (int i = 0; i < w.level(); ++i) base = base * s.branching() + w.symbol(i);
  int64_t span = 1;
  for (int i = w.level(); i < at_level; ++i) span *= s.branching();
  pin_range(base * span, (base + 1) * span, value);
}

void FixedAssignment::normalize() {
  std::sort(ranges_.begin(), ranges_.end(),
            [](const PinnedRange& a, const PinnedRange& b) { return a.lo < b.lo; });
  std::vector<PinnedRange> merged;
  for (const PinnedRange& r : ranges_) {
    if (!merged.empty()) {
      PinnedRange& prev = merged.back();
      if (r.lo < prev.hi) throw UsageError("pins overlap");
      if (r.lo == prev.hi && r.value == prev.value) {
        prev.hi = r.hi;
        continue;
      }
    }
    merged.push_back(r);
  }
  ranges_ = std::move(merged);
  normalized_ = true;
}

int64_t FixedAssignment::pinned_count() const {
  int64_t n = 0;
  for (const PinnedRange& r : ranges_) n += r.hi - r.lo;
  return n;
}

std::optional<double> FixedAssignment::value_of(int64_t i) const {
  if (!normalized_) throw UsageError("value_of: pins not normalized");
  auto it = std::upper_bound(
      ranges_.begin(), ranges_.end(), i,
      [](int64_t x, const PinnedRange& r) { return x < r.lo; });
  if (it == ranges_.begin()) return std::nullopt;
  --it;
  if (i < it->hi) return it->value;
  return std::nullopt;
}

double FixedAssignment::min_value() const {
  if (ranges_.empty()) throw UsageError("min_value: no pins");
  double m = ranges_[0].value;
  for (const PinnedRange& r : ranges_) m = std::min(m, r.value);
  return m;
}

double FixedAssignment::max_value() const {
  if (ranges_.empty()) throw UsageError("max_value: no pins");
  double m = ranges_[0].value;
  for (const PinnedRange& r : ranges_) m = std::max(m, r.value);
  return m;
}

// -------------------------------------------------------------- extraction

int64_t ExtractedProblem::free_index(int64_t rank) const {
  auto it = std::upper_bound(free_prefix.begin(), free_prefix.end(), rank);
  size_t ri = static_cast<size_t>(it - free_prefix.begin()) - 1;
  return free_ranges[ri].lo + (rank - free_prefix[ri]);
}

int64_t ExtractedProblem::rank_of(int64_t graph_index) const {
  auto it = std::upper_bound(
      free_ranges.begin(), free_ranges.end(), graph_index,
      [](int64_t x, const IndexRange& r) { return x < r.lo; });
  if (it == free_ranges.begin()) return -1;
  size_t ri = static_cast<size_t>(it - free_ranges.begin()) - 1;
  if (graph_index >= free_ranges[ri].hi) return -1;
  return free_prefix[ri] + (graph_index - free_ranges[ri].lo);
}

ExtractedProblem extract_problem(const LevelGraph& g, const FixedAssignment& pins) {
  if (!pins.normalized()) throw UsageError("extract_problem: pins not normalized");
  const auto& prs = pins.ranges();
  if (!prs.empty() && (prs.front().lo < 0 || prs.back().hi > g.size()))
    throw UsageError("extract_problem: pins outside the level");

  ExtractedProblem ex;
  ex.graph = &g;
  int64_t cursor = 0;
  for (const PinnedRange& r : prs) {
    if (r.lo > cursor) ex.free_ranges.push_back({cursor, r.lo});
    cursor = r.hi;
  }
  if (cursor < g.size()) ex.free_ranges.push_back({cursor, g.size()});
  ex.free_prefix.resize(ex.free_ranges.size() + 1);
  ex.free_prefix[0] = 0;
  for (size_t i = 0; i < ex.free_ranges.size(); ++i)
    ex.free_prefix[i + 1] =
        ex.free_prefix[i] + (ex.free_ranges[i].hi - ex.free_ranges[i].lo);
  ex.n_free = ex.free_prefix.back();
  if (ex.n_free > std::numeric_limits<int32_t>::max())
    throw AnalyticError("extract_problem: free set exceeds 2^31 vertices");

  const int64_t n = ex.n_free;
  ex.ff_offset.assign(static_cast<size_t>(n) + 1, 0);
  ex.fb_offset.assign(static_cast<size_t>(n) + 1, 0);

  int64_t buf[LevelGraph::kMaxNeighbors];
  int64_t rank = 0;
  for (const IndexRange& fr : ex.free_ranges)
    for (int64_t u = fr.lo; u < fr.hi; ++u, ++rank) {
      int k = g.neighbors(u, buf);
      for (int t = 0; t < k; ++t) {
        if (ex.rank_of(buf[t]) >= 0)
          ++ex.ff_offset[static_cast<size_t>(rank) + 1];
        else
          ++ex.fb_offset[static_cast<size_t>(rank) + 1];
      }
    }
  for (int64_t i = 0; i < n; ++i) {
    ex.ff_offset[static_cast<size_t>(i) + 1] += ex.ff_offset[static_cast<size_t>(i)];
    ex.fb_offset[static_cast<size_t>(i) + 1] += ex.fb_offset[static_cast<size_t>(i)];
  }
  ex.ff_slot.resize(static_cast<size_t>(ex.ff_offset[static_cast<size_t>(n)]));
  ex.fb_value.resize(static_cast<size_t>(ex.fb_offset[static_cast<size_t>(n)]));

  std::vector<int64_t> ffpos(ex.ff_offset.begin(), ex.ff_offset.end() - 1);
  std::vector<int64_t> fbpos(ex.fb_offset.begin(), ex.fb_offset.end() - 1);
  rank = 0;
  for (const IndexRange& fr : ex.free_ranges)
    for (int64_t u = fr.lo; u < fr.hi; ++u, ++rank) {
      int k = g.neighbors(u, buf);
      for (int t = 0; t < k; ++t) {
        int64_t rv = ex.rank_of(buf[t]);
        if (rv >= 0)
          ex.ff_slot[static_cast<size_t>(ffpos[static_cast<size_t>(rank)]++)] =
              static_cast<int32_t>(rv);
        else
          ex.fb_value[static_cast<size_t>(fbpos[static_cast<size_t>(rank)]++)] =
              *pins.value_of(buf[t]);
      }
    }

  // free-free components, and whether each touches a pin
  ex.component.assign(static_cast<size_t>(n), -1);
  std::vector<int32_t> stack;
  int32_t comp = 0;
  for (int64_t seed = 0; seed < n; ++seed) {
    if (ex.component[static_cast<size_t>(seed)] >= 0) continue;
    ex.component[static_cast<size_t>(seed)] = comp;
    stack.push_back(static_cast<int32_t>(seed));
    while (!stack.empty()) {
      int64_t u = stack.back();
      stack.pop_back();
      for (int64_t e = ex.ff_offset[static_cast<size_t>(u)];
           e < ex.ff_offset[static_cast<size_t>(u) + 1]; ++e) {
        int32_t v = ex.ff_slot[static_cast<size_t>(e)];
        if (ex.component[static_cast<size_t>(v)] < 0) {
          ex.component[static_cast<size_t>(v)] = comp;
          stack.push_back(v);
        }
      }
    }
    ++comp;
  }
  ex.n_components = comp;
  ex.component_grounded.assign(static_cast<size_t>(comp), 0);
  for (int64_t u = 0; u < n; ++u)
    if (ex.fb_offset[static_cast<size_t>(u) + 1] > ex.fb_offset[static_cast<size_t>(u)])
      ex.component_grounded[static_cast<size_t>(ex.component[static_cast<size_t>(u)])] = 1;
  return ex;
}

// ------------------------------------------------------------------ solver

SolverOptions relaxed_solver_profile() {
  SolverOptions o;
  o.tol_kkt = 3e-6;
  o.eps_final_factor = 1e-8;
  o.max_irls_per_stage = 12;
  o.newton_polish_iters = 3;
  o.max_pcg = 1200;
  o.relaxed = true;
  return o;
}

namespace {

// IRLS weight: phi'(d)/d for phi(d) = (d^2+eps^2)^{p/2}
inline double irls_weight(double d, double p, double eps2) {
  return p * std::pow(d * d + eps2, 0.5 * p - 1.0);
}
// phi''(d), positive for p > 1
inline double newton_weight(double d, double p, double eps2) {
  double s = d * d + eps2;
  return p * std::pow(s, 0.5 * p - 2.0) * ((p - 1.0) * d * d + eps2);
}
inline double grad_phi(double d, double p, double eps2) {
  return p * d * std::pow(d * d + eps2, 0.5 * p - 1.0);
}

class DirichletSolver {
 public:
  DirichletSolver(const ExtractedProblem& ex, double p, const SolverOptions& opt,
                  double lo, double hi)
      : ex_(ex), p_(p), opt_(opt), lo_(lo), hi_(hi), spread_(hi - lo),
        n_(ex.n_free) {
    size_t ns = static_cast<size_t>(n_);
    x_.assign(ns, 0.5 * (lo_ + hi_));
    wff_.resize(ex_.ff_slot.size());
    wfb_.resize(ex_.fb_value.size());
    diag_.resize(ns);
    bvec_.resize(ns);
    r_.resize(ns);
    z_.resize(ns);
    pd_.resize(ns);
    ap_.resize(ns);
    sol_.resize(ns);
    trial_.resize(ns);
    grad_.resize(ns);
    use_ic0_ = n_ >= opt_.ic0_threshold;
    if (use_ic0_) build_ic0_pattern();
  }

  void seed(const SparseCellFunction& warm) {
    int64_t rank = 0;
    for (const IndexRange& fr : ex_.free_ranges)
      for (int64_t u = fr.lo; u < fr.hi; ++u, ++rank)
        x_[static_cast<size_t>(rank)] =
            std::clamp(warm.at(u), std::min(lo_, hi_), std::max(lo_, hi_));
    zero_ungrounded();
    warm_ = true;
  }

  void run(SolveStats& stats) {
    zero_ungrounded();
    double floor_eps = std::max(spread_ * opt_.eps_final_factor, 1e-300);
    double eps0 = spread_ * (warm_ ? std::min(1e-4, opt_.eps_initial_factor)
                                   : opt_.eps_initial_factor);
    eps0 = std::max(eps0, floor_eps);
    double tol_abs = opt_.tol_kkt * std::pow(spread_, p_ - 1.0);

    if (p_ == 2.0) {
      run_stage(floor_eps, 1e-12, stats);
    } else {
      double eps = eps0;
      while (true) {
        double frac = eps0 <= floor_eps
                          ? 1.0
                          : std::log(eps0 / eps) / std::log(eps0 / floor_eps);
        double rtol = 3e-2 * std::pow(1e-8 / 3e-2, frac);
        run_stage(eps, rtol, stats);
        if (eps <= floor_eps * 1.0000001) break;
        eps = std::max(eps * 0.5, floor_eps);
      }
      polish(floor_eps, stats);
    }

    // Residual of the smoothed functional at the final smoothing level. The
    // raw gradient p|d|^{p-1} is useless as a certificate for p < 2: on an
    // edge whose true difference is 0, roundoff alone puts |d| near 1e-16 and
    // |d|^{p-1} near 1e-8. The smoothed residual is what the continuation
    // actually drives to zero, and the energy is second-order in it.
    stats.eps_final = p_ == 2.0 ? 0.0 : floor_eps;
    gradient_eps(stats.eps_final * stats.eps_final);
    double gmax = 0;
    for (double gv : grad_) gmax = std::max(gmax, std::fabs(gv));
    stats.kkt_residual = gmax;
    stats.kkt_tolerance = tol_abs;
    stats.converged = stats.kkt_residual <= tol_abs;
  }

  const std::vector<double>& values() const { return x_; }

 private:
  void zero_ungrounded() {
    for (int64_t u = 0; u < n_; ++u)
      if (!ex_.component_grounded[static_cast<size_t>(
              ex_.component[static_cast<size_t>(u)])])
        x_[static_cast<size_t>(u)] = 0.0;
  }

  // weights + diagonal (+ IRLS rhs) at the current iterate
  void compute_weights(double eps2, bool newton) {
    std::fill(diag_.begin(), diag_.end(), 0.0);
    if (!newton) std::fill(bvec_.begin(), bvec_.end(), 0.0);
    for (int64_t u = 0; u < n_; ++u) {
      double xu = x_[static_cast<size_t>(u)];
      double dsum = 0;
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e) {
        double d = xu - x_[static_cast<size_t>(ex_.ff_slot[static_cast<size_t>(e)])];
        double w = newton ? newton_weight(d, p_, eps2) : irls_weight(d, p_, eps2);
        wff_[static_cast<size_t>(e)] = w;
        dsum += w;
      }
      for (int64_t e = ex_.fb_offset[static_cast<size_t>(u)];
           e < ex_.fb_offset[static_cast<size_t>(u) + 1]; ++e) {
        double b = ex_.fb_value[static_cast<size_t>(e)];
        double d = xu - b;
        double w = newton ? newton_weight(d, p_, eps2) : irls_weight(d, p_, eps2);
        wfb_[static_cast<size_t>(e)] = w;
        dsum += w;
        if (!newton) bvec_[static_cast<size_t>(u)] += w * b;
      }
      diag_[static_cast<size_t>(u)] = dsum;
    }
  }

  void apply(const std::vector<double>& v, std::vector<double>& out) const {
    for (int64_t u = 0; u < n_; ++u) {
      double acc = diag_[static_cast<size_t>(u)] * v[static_cast<size_t>(u)];
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e)
        acc -= wff_[static_cast<size_t>(e)] *
               v[static_cast<size_t>(ex_.ff_slot[static_cast<size_t>(e)])];
      out[static_cast<size_t>(u)] = acc;
    }
  }

  double energy_eps(const std::vector<double>& v, double eps2) const {
    KahanSum acc;
    double half = 0.5 * p_;
    for (int64_t u = 0; u < n_; ++u) {
      double xu = v[static_cast<size_t>(u)];
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e) {
        int32_t s = ex_.ff_slot[static_cast<size_t>(e)];
        if (s <= u) continue;
        double d = xu - v[static_cast<size_t>(s)];
        acc.add(std::pow(d * d + eps2, half));
      }
      for (int64_t e = ex_.fb_offset[static_cast<size_t>(u)];
           e < ex_.fb_offset[static_cast<size_t>(u) + 1]; ++e) {
        double d = xu - ex_.fb_value[static_cast<size_t>(e)];
        acc.add(std::pow(d * d + eps2, half));
      }
    }
    return acc.value();
  }

  void gradient_eps(double eps2) {
    for (int64_t u = 0; u < n_; ++u) {
      double xu = x_[static_cast<size_t>(u)];
      double gsum = 0;
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e)
        gsum += grad_phi(
            xu - x_[static_cast<size_t>(ex_.ff_slot[static_cast<size_t>(e)])], p_,
            eps2);
      for (int64_t e = ex_.fb_offset[static_cast<size_t>(u)];
           e < ex_.fb_offset[static_cast<size_t>(u) + 1]; ++e)
        gsum += grad_phi(xu - ex_.fb_value[static_cast<size_t>(e)], p_, eps2);
      grad_[static_cast<size_t>(u)] = gsum;
    }
  }

  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  static double nrm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

  void precondition() {
    if (ic0_ok_) {
      ic0_solve();
      return;
    }
    for (int64_t u = 0; u < n_; ++u) {
      double d = diag_[static_cast<size_t>(u)];
      z_[static_cast<size_t>(u)] =
          d > 0 ? r_[static_cast<size_t>(u)] / d : r_[static_cast<size_t>(u)];
    }
  }

  // Solves A sol = rhs from the current sol; returns iterations used.
  int64_t pcg(const std::vector<double>& rhs, std::vector<double>& sol, double rtol) {
    apply(sol, ap_);
    for (int64_t u = 0; u < n_; ++u)
      r_[static_cast<size_t>(u)] =
          rhs[static_cast<size_t>(u)] - ap_[static_cast<size_t>(u)];
    double norm0 = nrm2(r_);
    if (norm0 == 0) return 0;
    double target = rtol * norm0;
    if (use_ic0_) ic0_factor();
    precondition();
    pd_ = z_;
    double rz = dot(r_, z_);
    int64_t it = 0;
    for (; it < opt_.max_pcg; ++it) {
      apply(pd_, ap_);
      double pap = dot(pd_, ap_);
      if (!(pap > 0)) break;
      double alpha = rz / pap;
      for (size_t i = 0; i < sol.size(); ++i) {
        sol[i] += alpha * pd_[i];
        r_[i] -= alpha * ap_[i];
      }
      if (nrm2(r_) <= target) {
        ++it;
        break;
      }
      precondition();
      double rz2 = dot(r_, z_);
      double beta = rz2 / rz;
      rz = rz2;
      for (size_t i = 0; i < pd_.size(); ++i) pd_[i] = z_[i] + beta * pd_[i];
    }
    return it;
  }

  void run_stage(double eps, double rtol, SolveStats& stats) {
    ++stats.stages;
    double eps2 = eps * eps;
    double step_tol = std::max(1e-4 * eps, 4e-16 * spread_);
    for (int iter = 0; iter < opt_.max_irls_per_stage; ++iter) {
      ++stats.irls_iterations;
      compute_weights(eps2, /*newton=*/false);
      sol_ = x_;
      // residual before the solve gives the descent slope <g, s> = -r0.s
      apply(x_, ap_);
      double r0max = 0, dmax = 0;
      for (size_t i = 0; i < r_.size(); ++i) {
        r_[i] = bvec_[i] - ap_[i];
        r0max = std::max(r0max, std::fabs(r_[i]));
        dmax = std::max(dmax, diag_[i]);
      }
      // below the roundoff floor of the residual itself, PCG chases noise
      if (r0max <= 4e-16 * dmax * spread_) break;
      std::vector<double> r0 = r_;
      stats.pcg_iterations += pcg(bvec_, sol_, rtol);
      double slope = 0, smax = 0;
      for (size_t i = 0; i < sol_.size(); ++i) {
        double si = sol_[i] - x_[i];
        slope -= r0[i] * si;
        smax = std::max(smax, std::fabs(si));
      }
      if (smax == 0) break;
      double e0 = energy_eps(x_, eps2);
      double t = 1.0, accepted = -1.0;
      for (int ls = 0; ls < 40; ++ls) {
        for (size_t i = 0; i < trial_.size(); ++i)
          trial_[i] = x_[i] + t * (sol_[i] - x_[i]);
        double et = energy_eps(trial_, eps2);
        if (et <= e0 + 1e-4 * t * slope) {
          accepted = t;
          break;
        }
        t *= 0.5;
      }
      if (accepted < 0) break;
      x_.swap(trial_);
      if (accepted * smax <= step_tol) break;
    }
  }

  void polish(double eps, SolveStats& stats) {
    double eps2 = eps * eps;
    double gtarget =
        0.25 * opt_.tol_kkt * std::pow(std::max(spread_, 1e-300), p_ - 1.0);
    for (int iter = 0; iter < opt_.newton_polish_iters; ++iter) {
      gradient_eps(eps2);
      double gmax = 0;
      for (double gv : grad_) gmax = std::max(gmax, std::fabs(gv));
      compute_weights(eps2, /*newton=*/true);
      double dmax = 0;
      for (double dv : diag_) dmax = std::max(dmax, dv);
      if (opt_.verbosity >= 2)
        std::fprintf(stderr, "    polish it=%d eps=%.2e gmax=%.3e floor=%.3e\n",
                     iter, eps, gmax, 4e-16 * dmax * spread_);
      if (gmax <= std::max(gtarget, 4e-16 * dmax * spread_)) break;
      for (double& dv : diag_) dv += 1e-14 * dmax;
      std::fill(sol_.begin(), sol_.end(), 0.0);
      std::vector<double> rhs(grad_.size());
      for (size_t i = 0; i < rhs.size(); ++i) rhs[i] = -grad_[i];
      stats.pcg_iterations += pcg(rhs, sol_, 1e-10);
      double slope = dot(grad_, sol_);
      if (opt_.verbosity >= 2)
        std::fprintf(stderr, "    polish slope=%.3e\n", slope);
      if (!(slope < 0)) break;
      double e0 = energy_eps(x_, eps2);
      double t = 1.0;
      bool ok = false;
      for (int ls = 0; ls < 40; ++ls) {
        for (size_t i = 0; i < trial_.size(); ++i) trial_[i] = x_[i] + t * sol_[i];
        double et = energy_eps(trial_, eps2);
        if (et <= e0 + 1e-4 * t * slope) {
          ok = true;
          break;
        }
        t *= 0.5;
      }
      if (!ok) break;
      x_.swap(trial_);
      ++stats.irls_iterations;
    }
  }

  // ---- incomplete Cholesky (zero fill) over the free-free pattern ----

  void build_ic0_pattern() {
    size_t ns = static_cast<size_t>(n_);
    low_off_.assign(ns + 1, 0);
    for (int64_t u = 0; u < n_; ++u) {
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e)
        if (ex_.ff_slot[static_cast<size_t>(e)] < u) ++low_off_[static_cast<size_t>(u) + 1];
    }
    for (size_t i = 0; i < ns; ++i) low_off_[i + 1] += low_off_[i];
    size_t nnz = low_off_[ns];
    low_col_.resize(nnz);
    low_edge_.resize(nnz);
    low_val_.resize(nnz);
    dval_.resize(ns);
    std::vector<size_t> pos(low_off_.begin(), low_off_.end() - 1);
    for (int64_t u = 0; u < n_; ++u) {
      size_t beg = pos[static_cast<size_t>(u)];
      for (int64_t e = ex_.ff_offset[static_cast<size_t>(u)];
           e < ex_.ff_offset[static_cast<size_t>(u) + 1]; ++e) {
        int32_t v = ex_.ff_slot[static_cast<size_t>(e)];
        if (v < u) {
          low_col_[pos[static_cast<size_t>(u)]] = v;
          low_edge_[pos[static_cast<size_t>(u)]] = static_cast<int64_t>(e);
          ++pos[static_cast<size_t>(u)];
        }
      }
      size_t end = pos[static_cast<size_t>(u)];
      // sort this row's (col, edge) pairs by column
      std::vector<std::pair<int32_t, int64_t>> row;
      row.reserve(end - beg);
      for (size_t i = beg; i < end; ++i) row.push_back({low_col_[i], low_edge_[i]});
      std::sort(row.begin(), row.end());
      for (size_t i = beg; i < end; ++i) {
        low_col_[i] = row[i - beg].first;
        low_edge_[i] = row[i - beg].second;
      }
    }
    // transpose lists for the backward sweep
    up_off_.assign(ns + 1, 0);
    for (size_t i = 0; i < nnz; ++i) ++up_off_[static_cast<size_t>(low_col_[i]) + 1];
    for (size_t i = 0; i < ns; ++i) up_off_[i + 1] += up_off_[i];
    up_row_.resize(nnz);
    up_ptr_.resize(nnz);
    std::vector<size_t> upos(up_off_.begin(), up_off_.end() - 1);
    for (int64_t u = 0; u < n_; ++u)
      for (size_t i = low_off_[static_cast<size_t>(u)];
           i < low_off_[static_cast<size_t>(u) + 1]; ++i) {
        size_t c = static_cast<size_t>(low_col_[i]);
        up_row_[upos[c]] = static_cast<int32_t>(u);
        up_ptr_[upos[c]] = i;
        ++upos[c];
      }
  }

  void ic0_factor() {
    size_t ns = static_cast<size_t>(n_);
    double shift = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      bool ok = true;
      for (size_t u = 0; u < ns && ok; ++u) {
        size_t rb = low_off_[u], re = low_off_[u + 1];
        for (size_t i = rb; i < re; ++i) {
          size_t k = static_cast<size_t>(low_col_[i]);
          double a = -wff_[static_cast<size_t>(low_edge_[i])];
          // subtract sum over shared earlier columns of rows u and k
          size_t iu = rb, ik = low_off_[k], ke = low_off_[k + 1];
          double s = 0;
          while (iu < i && ik < ke) {
            int32_t cu = low_col_[iu], ck = low_col_[ik];
            if (cu == ck) {
              s += low_val_[iu] * low_val_[ik];
              ++iu;
              ++ik;
            } else if (cu < ck) {
              ++iu;
            } else {
              ++ik;
            }
          }
          low_val_[i] = (a - s) / dval_[k];
        }
        double s = 0;
        for (size_t i = rb; i < re; ++i) s += low_val_[i] * low_val_[i];
        double d = diag_[u] * (1.0 + shift) - s;
        if (d <= 1e-300) {
          ok = false;
          break;
        }
        dval_[u] = std::sqrt(d);
      }
      if (ok) {
        ic0_ok_ = true;
        return;
      }
      shift = shift == 0.0 ? 1e-3 : shift * 10.0;
    }
    ic0_ok_ = false;  // fall back to Jacobi for this solve
  }

  void ic0_solve() {
    size_t ns = static_cast<size_t>(n_);
    // forward: L y = r  (y kept in z_)
    for (size_t u = 0; u < ns; ++u) {
      double s = r_[u];
      for (size_t i = low_off_[u]; i < low_off_[u + 1]; ++i)
        s -= low_val_[i] * z_[static_cast<size_t>(low_col_[i])];
      z_[u] = s / dval_[u];
    }
    // backward: L^T z = y
    for (int64_t u = n_ - 1; u >= 0; --u) {
      size_t us = static_cast<size_t>(u);
      double s = z_[us];
      for (size_t i = up_off_[us]; i < up_off_[us + 1]; ++i)
        s -= low_val_[up_ptr_[i]] * z_[static_cast<size_t>(up_row_[i])];
      z_[us] = s / dval_[us];
    }
  }

  const ExtractedProblem& ex_;
  double p_;
  SolverOptions opt_;
  double lo_, hi_, spread_;
  int64_t n_;
  bool warm_ = false;
  bool use_ic0_ = false, ic0_ok_ = false;
  std::vector<double> x_, wff_, wfb_, diag_, bvec_, r_, z_, pd_, ap_, sol_, trial_,
      grad_;
  std::vector<size_t> low_off_, up_off_;
  std::vector<int32_t> low_col_, up_row_;
  std::vector<int64_t> low_edge_;
  std::vector<size_t> up_ptr_;
  std::vector<double> low_val_, dval_;
};

SparseCellFunction assemble_solution(const LevelGraph& g, const FixedAssignment& pins,
                                     const ExtractedProblem& ex,
                                     const std::vector<double>& x) {
  SparseCellFunction f;
  f.level = g.level();
  int64_t total = ex.n_free;
  for (const PinnedRange& r : pins.ranges())
    if (r.value != 0.0) total += r.hi - r.lo;
  f.index.reserve(static_cast<size_t>(total));
  f.value.reserve(static_cast<size_t>(total));
  const auto& prs = pins.ranges();
  size_t ip = 0, ifr = 0;
  int64_t rank = 0;
  while (ip < prs.size() || ifr < ex.free_ranges.size()) {
    bool take_pin;
    if (ip >= prs.size())
      take_pin = false;
    else if (ifr >= ex.free_ranges.size())
      take_pin = true;
    else
      take_pin = prs[ip].lo < ex.free_ranges[ifr].lo;
    if (take_pin) {
      if (prs[ip].value != 0.0)
        for (int64_t i = prs[ip].lo; i < prs[ip].hi; ++i) {
          f.index.push_back(i);
          f.value.push_back(prs[ip].value);
        }
      ++ip;
    } else {
      for (int64_t i = ex.free_ranges[ifr].lo; i < ex.free_ranges[ifr].hi; ++i) {
        f.index.push_back(i);
        f.value.push_back(x[static_cast<size_t>(rank++)]);
      }
      ++ifr;
    }
  }
  return f;
}

}  // namespace

DirichletSolution solve_dirichlet(const LevelGraph& g, const FixedAssignment& pins_in,
                                  double p, const SolverOptions& opt,
                                  const SparseCellFunction* warm) {
  if (p <= 1.0) throw UsageError("solve_dirichlet: requires p > 1");
  FixedAssignment local;
  const FixedAssignment* pins = &pins_in;
  if (!pins_in.normalized()) {
    local = pins_in;
    local.normalize();
    pins = &local;
  }
  DirichletSolution out;
  if (pins->empty()) {
    out.f.level = g.level();
    out.stats.converged = true;
    return out;
  }
  ExtractedProblem ex = extract_problem(g, *pins);
  double lo = pins->min_value(), hi = pins->max_value();

  if (ex.n_free == 0 || lo == hi) {
    std::vector<double> x(static_cast<size_t>(ex.n_free), lo);
    // ungrounded free vertices stay at 0 even when every pin shares a value
    for (int64_t u = 0; u < ex.n_free; ++u)
      if (!ex.component_grounded[static_cast<size_t>(
              ex.component[static_cast<size_t>(u)])])
        x[static_cast<size_t>(u)] = 0.0;
    out.f = assemble_solution(g, *pins, ex, x);
    out.energy = p_energy(g, out.f, p);
    out.stats.converged = true;
    return out;
  }

  DirichletSolver solver(ex, p, opt, lo, hi);
  if (warm != nullptr) solver.seed(*warm);
  solver.run(out.stats);
  out.f = assemble_solution(g, *pins, ex, solver.values());
  out.energy = p_energy(g, out.f, p);
  return out;
}

ConductanceResult effective_conductance(const LevelGraph& g,
                                        std::span<const IndexRange> ones,
                                        std::span<const IndexRange> zeros,
                                        double p, const SolverOptions& opt) {
  FixedAssignment pins;
  for (const IndexRange& r : ones) pins.pin_range(r.lo, r.hi, 1.0);
  for (const IndexRange& r : zeros) pins.pin_range(r.lo, r.hi, 0.0);
  pins.normalize();
  DirichletSolution sol = solve_dirichlet(g, pins, p, opt);
  if (!sol.stats.converged && !opt.relaxed) {
    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "conductance solve missed tolerance: kkt=%.3e (tol %.3e)",
                  sol.stats.kkt_residual, sol.stats.kkt_tolerance);
    throw SolveError(msg);
  }
  ConductanceResult res;
  res.value = sol.energy;
  res.stats = sol.stats;
  res.potential = std::move(sol.f);
  return res;
}

ConductanceResult ring_conductance(const SubdivisionScheme& s, const CellWord& w,
                                   int m, double p, const SolverOptions& opt,
                                   int ball_radius) {
  if (m < 0) throw UsageError("ring_conductance: negative refinement depth");
  if (ball_radius < 1) throw UsageError("ring_conductance: ball radius must be >= 1");
  int n = w.level() + m;
  if (n > s.max_level())
    throw UsageError("ring_conductance: level exceeds the scheme limit");
  const LevelGraph& g = s.level_graph(n);
  const LevelGraph& gw = s.level_graph(w.level());
  int64_t wi = gw.index_of(w);
  std::vector<int64_t> ball = gw.gamma(ball_radius, wi);
  int64_t span = 1;
  for (int i = 0; i < m; ++i) span *= s.branching();

  std::vector<IndexRange> ones = {{wi * span, (wi + 1) * span}};
  // zeros: complement of the refined ball, as merged ranges
  std::vector<IndexRange> zeros;
  int64_t cursor = 0;
  for (int64_t b : ball) {
    int64_t lo = b * span, hi = (b + 1) * span;
    if (lo > cursor) zeros.push_back({cursor, lo});
    cursor = std::max(cursor, hi);
  }
  if (cursor < g.size()) zeros.push_back({cursor, g.size()});
  return effective_conductance(g, ones, zeros, p, opt);
}

}  // namespace fractalp
