#include "fractalp/disparity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fractalp/level_graph.hpp"
#include "fractalp/penergy.hpp"

namespace fractalp {

namespace {

// d/dx |x|^p = p |x|^(p-1) sgn(x); continuous at 0 for p >= 1.
double dpow(double d, double p) {
  if (d == 0.0) return 0.0;
  double mag = (p == 2.0) ? 2.0 * std::abs(d) : p * std::pow(std::abs(d), p - 1.0);
  return d > 0 ? mag : -mag;
}

void validate_cells(const SubdivisionScheme& s, std::span<const int64_t> cells,
                    int level, int m) {
  if (level < 0 || m < 1) throw UsageError("disparity: need level >= 0 and m >= 1");
  if (level + m > s.max_level())
    throw UsageError("disparity: level + m exceeds the scheme's usable depth");
  int64_t limit = s.level_size(level);
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] < 0 || cells[i] >= limit)
      throw UsageError("disparity: cell index out of range for its level");
    if (i > 0 && cells[i] <= cells[i - 1])
      throw UsageError("disparity: cells must be sorted and distinct");
  }
}

// The quotient problem: fine vertices of S^m(A) with mu-conditional weights
// toward their level-`level` ancestors, plus both induced edge lists.
struct PatchProblem {
  std::vector<int64_t> a_cells;
  std::vector<int64_t> fine;              // sorted, level level+m
  std::vector<int32_t> anc;               // position in a_cells
  std::vector<double> w;                  // mu(fine)/mu(ancestor)
  std::vector<std::array<int32_t, 2>> fe;  // fine edges, positions
  std::vector<std::array<int32_t, 2>> ce;  // coarse edges, positions
  std::vector<int32_t> comp;
  int n_comp = 0;
};

PatchProblem build_patch(const SubdivisionScheme& s, const SelfSimilarMeasure& mu,
                         std::span<const int64_t> a_cells, int level, int m) {
  PatchProblem pp;
  pp.a_cells.assign(a_cells.begin(), a_cells.end());
  const int K = s.branching();
  int64_t span = 1;
  for (int t = 0; t < m; ++t) span *= K;

  // Conditional weight of a depth-m tail: product of the symbol weights.
  std::vector<double> tail(1, 1.0);
  for (int t = 0; t < m; ++t) {
    std::vector<double> next(tail.size() * static_cast<size_t>(K));
    for (size_t i = 0; i < tail.size(); ++i)
      for (int sym = 0; sym < K; ++sym)
        next[i * static_cast<size_t>(K) + static_cast<size_t>(sym)] =
            tail[i] * mu.weight(sym);
    tail.swap(next);
  }

  size_t n_fine = a_cells.size() * static_cast<size_t>(span);
  pp.fine.reserve(n_fine);
  pp.anc.reserve(n_fine);
  pp.w.reserve(n_fine);
  for (size_t ai = 0; ai < a_cells.size(); ++ai) {
    int64_t base = a_cells[ai] * span;
    for (int64_t r = 0; r < span; ++r) {
      pp.fine.push_back(base + r);
      pp.anc.push_back(static_cast<int32_t>(ai));
      pp.w.push_back(tail[static_cast<size_t>(r)]);
    }
  }

  const LevelGraph& gf = s.level_graph(level + m);
  int64_t buf[LevelGraph::kMaxNeighbors];
  for (size_t u = 0; u < pp.fine.size(); ++u) {
    int k = gf.neighbors(pp.fine[u], buf);
    for (int t = 0; t < k; ++t) {
      if (buf[t] <= pp.fine[u]) continue;
      auto it = std::lower_bound(pp.fine.begin(), pp.fine.end(), buf[t]);
      if (it != pp.fine.end() && *it == buf[t])
        pp.fe.push_back({static_cast<int32_t>(u),
                         static_cast<int32_t>(it - pp.fine.begin())});
    }
  }

  const LevelGraph& gc = s.level_graph(level);
  for (size_t a = 0; a < pp.a_cells.size(); ++a) {
    int k = gc.neighbors(pp.a_cells[a], buf);
    for (int t = 0; t < k; ++t) {
      if (buf[t] <= pp.a_cells[a]) continue;
      auto it = std::lower_bound(pp.a_cells.begin(), pp.a_cells.end(), buf[t]);
      if (it != pp.a_cells.end() && *it == buf[t])
        pp.ce.push_back({static_cast<int32_t>(a),
                         static_cast<int32_t>(it - pp.a_cells.begin())});
    }
  }

  // Connected components of the fine graph (BFS over the edge list).
  pp.comp.assign(pp.fine.size(), -1);
  std::vector<std::vector<int32_t>> adj(pp.fine.size());
  for (auto& e : pp.fe) {
    adj[static_cast<size_t>(e[0])].push_back(e[1]);
    adj[static_cast<size_t>(e[1])].push_back(e[0]);
  }
  std::vector<int32_t> stack;
  for (size_t u = 0; u < pp.fine.size(); ++u) {
    if (pp.comp[u] >= 0) continue;
    int32_t c = pp.n_comp++;
    pp.comp[u] = c;
    stack.assign(1, static_cast<int32_t>(u));
    while (!stack.empty()) {
      int32_t v = stack.back();
      stack.pop_back();
      for (int32_t nb : adj[static_cast<size_t>(v)])
        if (pp.comp[static_cast<size_t>(nb)] < 0) {
          pp.comp[static_cast<size_t>(nb)] = c;
          stack.push_back(nb);
        }
    }
  }
  return pp;
}

// The ratio is infinite iff some per-component-constant function has coarse
// energy: check each component's averaged indicator across every coarse edge.
void check_finite(const PatchProblem& pp) {
  if (pp.n_comp <= 1 || pp.ce.empty()) return;
  std::vector<double> h(pp.a_cells.size());
  for (int c = 0; c < pp.n_comp; ++c) {
    std::fill(h.begin(), h.end(), 0.0);
    for (size_t u = 0; u < pp.fine.size(); ++u)
      if (pp.comp[u] == c) h[static_cast<size_t>(pp.anc[u])] += pp.w[u];
    for (auto& e : pp.ce)
      if (std::abs(h[static_cast<size_t>(e[0])] - h[static_cast<size_t>(e[1])]) >
          1e-12) {
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "disparity is infinite: a fine component's averaged "
                      "indicator carries coarse energy (component %d of %d)",
                      c, pp.n_comp);
        throw AnalyticError(msg);
      }
  }
}

struct Evaluator {
  const PatchProblem& pp;
  double p;
  std::vector<double> h, cg;  // coarse average, coarse gradient
  std::vector<int32_t> comp_size;

  explicit Evaluator(const PatchProblem& pp_, double p_)
      : pp(pp_), p(p_), h(pp_.a_cells.size()), cg(pp_.a_cells.size()),
        comp_size(static_cast<size_t>(pp_.n_comp), 0) {
    for (int32_t c : pp.comp) ++comp_size[static_cast<size_t>(c)];
  }

  // Remove per-component means: quotient representative with fine energy
  // vanishing only at g = 0.
  void deflate(std::vector<double>& g) const {
    std::vector<double> mean(static_cast<size_t>(pp.n_comp), 0.0);
    for (size_t u = 0; u < g.size(); ++u)
      mean[static_cast<size_t>(pp.comp[u])] += g[u];
    for (size_t c = 0; c < mean.size(); ++c) mean[c] /= comp_size[c];
    for (size_t u = 0; u < g.size(); ++u)
      g[u] -= mean[static_cast<size_t>(pp.comp[u])];
  }

  bool normalize(std::vector<double>& g) const {
    double s = 0;
    for (double v : g) s += v * v;
    if (s < 1e-280) return false;
    double inv = 1.0 / std::sqrt(s);
    for (double& v : g) v *= inv;
    return true;
  }

  void average(const std::vector<double>& g) {
    std::fill(h.begin(), h.end(), 0.0);
    for (size_t u = 0; u < g.size(); ++u)
      h[static_cast<size_t>(pp.anc[u])] += pp.w[u] * g[u];
  }

  double ratio(const std::vector<double>& g) {
    average(g);
    KahanSum num, den;
    for (auto& e : pp.ce)
      num.add(pow_abs(h[static_cast<size_t>(e[0])] - h[static_cast<size_t>(e[1])], p));
    for (auto& e : pp.fe)
      den.add(pow_abs(g[static_cast<size_t>(e[0])] - g[static_cast<size_t>(e[1])], p));
    double d = den.value();
    if (d <= 0) return 0.0;
    return num.value() / d;
  }

  // Gradient of N/D at g (assumes average(g) is current and den > 0).
  void gradient(const std::vector<double>& g, double num, double den,
                std::vector<double>& out) {
    std::fill(cg.begin(), cg.end(), 0.0);
    for (auto& e : pp.ce) {
      double t = dpow(h[static_cast<size_t>(e[0])] - h[static_cast<size_t>(e[1])], p);
      cg[static_cast<size_t>(e[0])] += t;
      cg[static_cast<size_t>(e[1])] -= t;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (size_t u = 0; u < g.size(); ++u)
      out[u] = cg[static_cast<size_t>(pp.anc[u])] * pp.w[u];
    double r = num / den;
    for (auto& e : pp.fe) {
      double t = dpow(g[static_cast<size_t>(e[0])] - g[static_cast<size_t>(e[1])], p);
      out[static_cast<size_t>(e[0])] -= r * t;
      out[static_cast<size_t>(e[1])] += r * t;
    }
    for (double& v : out) v /= den;
  }

  double num_den(const std::vector<double>& g, double& den) {
    average(g);
    KahanSum num, d;
    for (auto& e : pp.ce)
      num.add(pow_abs(h[static_cast<size_t>(e[0])] - h[static_cast<size_t>(e[1])], p));
    for (auto& e : pp.fe)
      d.add(pow_abs(g[static_cast<size_t>(e[0])] - g[static_cast<size_t>(e[1])], p));
    den = d.value();
    return num.value();
  }

  // Both quadratic forms restricted to span{v_0..v_{k-1}} (p = 2 only):
  // Nm(i,j) pairs coarse diffs of the averages, Dm(i,j) pairs fine diffs.
  void pair_forms(const std::vector<std::vector<double>>& v, Eigen::MatrixXd& Nm,
                  Eigen::MatrixXd& Dm) {
    const auto k = static_cast<Eigen::Index>(v.size());
    Nm = Eigen::MatrixXd::Zero(k, k);
    Dm = Eigen::MatrixXd::Zero(k, k);
    std::vector<std::vector<double>> hv(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      average(v[i]);
      hv[i] = h;
    }
    std::vector<double> diff(v.size());
    for (auto& e : pp.ce) {
      for (size_t i = 0; i < v.size(); ++i)
        diff[i] = hv[i][static_cast<size_t>(e[0])] - hv[i][static_cast<size_t>(e[1])];
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i; j < k; ++j)
          Nm(i, j) += diff[static_cast<size_t>(i)] * diff[static_cast<size_t>(j)];
    }
    for (auto& e : pp.fe) {
      for (size_t i = 0; i < v.size(); ++i)
        diff[i] = v[i][static_cast<size_t>(e[0])] - v[i][static_cast<size_t>(e[1])];
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i; j < k; ++j)
          Dm(i, j) += diff[static_cast<size_t>(i)] * diff[static_cast<size_t>(j)];
    }
    Nm = Nm.selfadjointView<Eigen::Upper>();
    Dm = Dm.selfadjointView<Eigen::Upper>();
  }
};

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Covering covering_of(const SubdivisionScheme& s, int level,
                     std::span<const int64_t> cells) {
  validate_cells(s, cells, level, 1);  // m unused; reuses the range checks
  Covering cov;
  cov.level = level;
  const LevelGraph& g = s.level_graph(level);
  std::vector<int64_t> sorted(cells.begin(), cells.end());
  std::unordered_map<int64_t, int> hit_count;
  for (int64_t c : sorted) {
    std::vector<int64_t> star = g.gamma(1, c);
    std::vector<int64_t> patch;
    std::set_intersection(star.begin(), star.end(), sorted.begin(), sorted.end(),
                          std::back_inserter(patch));
    for (int64_t x : patch) ++hit_count[x];
    cov.centers.push_back(c);
    cov.patches.push_back(std::move(patch));
  }
  cov.n_t = 0;
  for (auto& kv : hit_count) cov.n_t = std::max(cov.n_t, kv.second);

  // Chaining bound: adjacent u, v within the set always lie together in the
  // patch centered at u, so every edge is covered by one patch.
  cov.n_e = 1;
  for (size_t i = 0; i < sorted.size(); ++i) {
    int64_t buf[LevelGraph::kMaxNeighbors];
    int k = g.neighbors(sorted[i], buf);
    for (int t = 0; t < k; ++t) {
      if (!std::binary_search(sorted.begin(), sorted.end(), buf[t])) continue;
      if (!std::binary_search(cov.patches[i].begin(), cov.patches[i].end(), buf[t]))
        throw AnalyticError("covering_of: star patch missed an incident edge");
    }
  }
  return cov;
}

DisparityEstimate neighbor_disparity(const SubdivisionScheme& s,
                                     const SelfSimilarMeasure& mu,
                                     std::span<const int64_t> a_cells, int level,
                                     int m, double p, const AscentOptions& opt) {
  if (p < 1.0) throw UsageError("neighbor_disparity: requires p >= 1");
  validate_cells(s, a_cells, level, m);
  if (&mu.scheme() != &s && mu.scheme().fingerprint() != s.fingerprint())
    throw UsageError("neighbor_disparity: measure belongs to a different scheme");

  DisparityEstimate est;
  est.level = level;
  est.m = m;
  est.restarts = opt.restarts;

  PatchProblem pp = build_patch(s, mu, a_cells, level, m);
  est.fine_cells = pp.fine;
  est.maximizer.assign(pp.fine.size(), 0.0);
  if (a_cells.size() <= 1 || pp.ce.empty()) return est;  // no coarse edges
  check_finite(pp);
  if (pp.fe.empty())
    throw AnalyticError("disparity is infinite: no fine edges but coarse energy exists");

  Evaluator ev(pp, p);
  std::vector<double> g(pp.fine.size()), grad(pp.fine.size()), trial(pp.fine.size());
  double best = 0.0;

  // Fine-Laplacian metric: the euclidean gradient crawls on elongated patches
  // (the fine form's conditioning grows like the patch diameter squared), so
  // residuals are preconditioned with a shifted Cholesky factored once per
  // patch. Deflated right-hand sides keep the shift's nullspace leak benign.
  const auto nf = static_cast<Eigen::Index>(pp.fine.size());
  double max_deg = 1.0;
  {
    std::vector<double> deg(pp.fine.size(), 0.0);
    for (auto& e : pp.fe) {
      deg[static_cast<size_t>(e[0])] += 1.0;
      deg[static_cast<size_t>(e[1])] += 1.0;
    }
    for (double d : deg) max_deg = std::max(max_deg, d);
  }
  Eigen::SparseMatrix<double> lf(nf, nf);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(pp.fe.size() * 4 + pp.fine.size());
    double shift = 1e-8 * max_deg;
    for (Eigen::Index i = 0; i < nf; ++i) trips.emplace_back(i, i, shift);
    for (auto& e : pp.fe) {
      trips.emplace_back(e[0], e[0], 1.0);
      trips.emplace_back(e[1], e[1], 1.0);
      trips.emplace_back(e[0], e[1], -1.0);
      trips.emplace_back(e[1], e[0], -1.0);
    }
    lf.setFromTriplets(trips.begin(), trips.end());
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(lf);
  const bool have_chol = chol.info() == Eigen::Success;
  auto precondition = [&](const std::vector<double>& r, std::vector<double>& z) {
    if (have_chol) {
      Eigen::Map<const Eigen::VectorXd> rv(r.data(), nf);
      Eigen::VectorXd zv = chol.solve(rv);
      z.assign(zv.data(), zv.data() + nf);
    } else {
      z = r;
    }
  };

  const bool quadratic = p == 2.0;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    std::mt19937_64 rng(opt.seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(r + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : g) v = gauss(rng);
    ev.deflate(g);
    if (!ev.normalize(g)) continue;

    double den = 0.0;
    double num = ev.num_den(g, den);
    if (den <= 0) continue;
    double cur = num / den;

    if (quadratic) {
      // Exact maximization over span{g, preconditioned residual, previous
      // move} each step: monotone, every iterate stays a feasible ratio.
      std::vector<double> dprev;
      std::vector<std::vector<double>> basis;
      for (int iter = 0; iter < opt.max_iters; ++iter) {
        ev.gradient(g, num, den, grad);
        ev.deflate(grad);
        std::vector<double> z;
        precondition(grad, z);
        ev.deflate(z);

        basis.clear();
        auto push = [&](std::vector<double> v) {
          for (const auto& b : basis) {
            double d0 = vdot(v, b);
            for (size_t u = 0; u < v.size(); ++u) v[u] -= d0 * b[u];
          }
          double nn = std::sqrt(vdot(v, v));
          if (nn > 1e-10) {
            for (double& x : v) x /= nn;
            basis.push_back(std::move(v));
          }
        };
        push(g);
        push(std::move(z));
        if (!dprev.empty()) push(dprev);
        if (basis.size() < 2) break;

        Eigen::MatrixXd Nm, Dm;
        ev.pair_forms(basis, Nm, Dm);
        Dm.diagonal().array() += 1e-13 * (Dm.trace() + 1.0);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Nm, Dm);
        if (es.info() != Eigen::Success) break;
        Eigen::VectorXd y = es.eigenvectors().col(Nm.rows() - 1);
        std::fill(trial.begin(), trial.end(), 0.0);
        for (size_t i = 0; i < basis.size(); ++i)
          for (size_t u = 0; u < trial.size(); ++u)
            trial[u] += y(static_cast<Eigen::Index>(i)) * basis[i][u];
        ev.deflate(trial);
        if (!ev.normalize(trial)) break;
        double tden = 0.0;
        double tnum = ev.num_den(trial, tden);
        if (tden <= 0 || tnum / tden <= cur * (1.0 + 1e-16)) break;
        double next = tnum / tden;
        dprev.assign(g.size(), 0.0);
        for (size_t u = 0; u < g.size(); ++u) dprev[u] = trial[u] - g[u];
        bool improved = next > cur * (1.0 + opt.tol);
        g.swap(trial);
        num = tnum;
        den = tden;
        cur = next;
        if (!improved) break;
      }
    } else {
      // Preconditioned conjugate directions with a backtracking ratio search.
      std::vector<double> z(g.size()), dir(g.size()), r_prev, z_prev;
      double step = 0.5;
      for (int iter = 0; iter < opt.max_iters; ++iter) {
        ev.gradient(g, num, den, grad);
        ev.deflate(grad);
        if (vdot(grad, grad) < 1e-300) break;
        precondition(grad, z);
        ev.deflate(z);
        double beta = 0.0;
        if (!r_prev.empty()) {
          double numer = 0, denom = 0;
          for (size_t u = 0; u < z.size(); ++u) {
            numer += z[u] * (grad[u] - r_prev[u]);
            denom += z_prev[u] * r_prev[u];
          }
          if (denom > 0) beta = std::max(0.0, numer / denom);
        }
        if (iter == 0 || beta == 0.0)
          dir = z;
        else
          for (size_t u = 0; u < dir.size(); ++u) dir[u] = z[u] + beta * dir[u];
        if (vdot(dir, grad) <= 0) dir = z;
        r_prev = grad;
        z_prev = z;
        bool improved = false;
        for (int bt = 0; bt < 30; ++bt) {
          for (size_t u = 0; u < g.size(); ++u) trial[u] = g[u] + step * dir[u];
          ev.deflate(trial);
          if (!ev.normalize(trial)) { step *= 0.4; continue; }
          double tden = 0.0;
          double tnum = ev.num_den(trial, tden);
          if (tden > 0 && tnum / tden > cur * (1.0 + 1e-16)) {
            double next = tnum / tden;
            improved = next > cur * (1.0 + opt.tol);
            g.swap(trial);
            num = tnum;
            den = tden;
            cur = next;
            step *= 1.3;
            break;
          }
          step *= 0.4;
        }
        if (!improved) break;
      }
    }
    if (cur > best) {
      best = cur;
      est.maximizer = g;
    }
  }
  est.value = best;
  return est;
}

double neighbor_disparity_p2_eigen(const SubdivisionScheme& s,
                                   const SelfSimilarMeasure& mu,
                                   std::span<const int64_t> a_cells, int level,
                                   int m) {
  validate_cells(s, a_cells, level, m);
  PatchProblem pp = build_patch(s, mu, a_cells, level, m);
  if (a_cells.size() <= 1 || pp.ce.empty()) return 0.0;
  check_finite(pp);
  if (pp.fe.empty())
    throw AnalyticError("disparity is infinite: no fine edges but coarse energy exists");
  const size_t F = pp.fine.size();
  if (F > 20000)
    throw UsageError("neighbor_disparity_p2_eigen: dense problem too large");

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pp.a_cells.size()),
                                            static_cast<Eigen::Index>(F));
  for (size_t u = 0; u < F; ++u)
    P(pp.anc[u], static_cast<Eigen::Index>(u)) = pp.w[u];

  Eigen::MatrixXd La = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pp.a_cells.size()),
                                             static_cast<Eigen::Index>(pp.a_cells.size()));
  for (auto& e : pp.ce) {
    La(e[0], e[0]) += 1;
    La(e[1], e[1]) += 1;
    La(e[0], e[1]) -= 1;
    La(e[1], e[0]) -= 1;
  }
  Eigen::MatrixXd Qc = P.transpose() * La * P;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(F),
                                            static_cast<Eigen::Index>(F));
  for (auto& e : pp.fe) {
    B(e[0], e[0]) += 1;
    B(e[1], e[1]) += 1;
    B(e[0], e[1]) -= 1;
    B(e[1], e[0]) -= 1;
  }
  // Deflation: add per-component mean projectors so B is positive definite
  // exactly on the quotient where the ratio lives.
  std::vector<int> comp_size(static_cast<size_t>(pp.n_comp), 0);
  for (int32_t c : pp.comp) ++comp_size[static_cast<size_t>(c)];
  for (size_t u = 0; u < F; ++u)
    for (size_t v = 0; v < F; ++v)
      if (pp.comp[u] == pp.comp[v])
        B(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) +=
            1.0 / comp_size[static_cast<size_t>(pp.comp[u])];

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Qc, B);
  if (es.info() != Eigen::Success)
    throw SolveError("neighbor_disparity_p2_eigen: eigensolver failed");
  double lam = es.eigenvalues().maxCoeff();
  return lam > 0 ? lam : 0.0;
}

LevelDisparity level_disparity(const SubdivisionScheme& s,
                               const SelfSimilarMeasure& mu, int n, int m,
                               double p, const AscentOptions& opt) {
  if (n < 0) throw UsageError("level_disparity: need n >= 0");
  LevelDisparity out;
  out.level = n;
  out.m = m;
  out.total = s.level_size(n);
  const LevelGraph& g = s.level_graph(n);

  std::unordered_map<std::string, double> by_shape;
  char buf[32];
  for (int64_t c = 0; c < out.total; ++c) {
    std::vector<int64_t> patch = g.gamma(1, c);
    double value;
    if (mu.is_uniform()) {
      auto [cx, cy] = g.coords(c);
      std::string key;
      key.reserve(patch.size() * 8);
      for (int64_t q : patch) {
        auto [qx, qy] = g.coords(q);
        std::snprintf(buf, sizeof buf, "%lld,%lld;", static_cast<long long>(qx - cx),
                      static_cast<long long>(qy - cy));
        key += buf;
      }
      auto it = by_shape.find(key);
      if (it != by_shape.end()) {
        value = it->second;
      } else {
        value = neighbor_disparity(s, mu, patch, n, m, p, opt).value;
        by_shape.emplace(std::move(key), value);
        ++out.evaluated;
      }
    } else {
      value = neighbor_disparity(s, mu, patch, n, m, p, opt).value;
      ++out.evaluated;
    }
    if (value > out.value || out.argmax_center < 0) {
      out.value = value;
      out.argmax_center = c;
      out.argmax_patch = std::move(patch);
    }
  }
  return out;
}

}  // namespace fractalp
