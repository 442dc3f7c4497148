#include "fractalp/homogeneity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fractalp/level_graph.hpp"

namespace fractalp {

namespace {

// Consecutive-ratio extrapolation: if the ratios approach their limit
// geometrically, Aitken's delta-squared removes the leading correction.
// Guarded: outside a safe contraction band it falls back to the last ratio
// or to the global LSQ slope.
void extrapolate(ScalingFit& fit, double slope_base) {
  const auto& r = fit.ratio_estimates;
  if (r.empty()) {
    fit.sigma_hat = slope_base;
    fit.method = "slope";
    return;
  }
  fit.sigma_hat = r.back();
  fit.method = "ratio";
  if (r.size() < 3) return;
  double d1 = r[r.size() - 2] - r[r.size() - 3];
  double d2 = r[r.size() - 1] - r[r.size() - 2];
  if (std::abs(d2) <= 1e-12 * std::abs(r.back())) return;  // converged flat
  if (d1 == 0.0 || !std::isfinite(d2 / d1)) {
    fit.sigma_hat = slope_base;
    fit.method = "slope";
    return;
  }
  double q = d2 / d1;
  if (q > 0.02 && q < 0.98) {
    fit.sigma_hat = r.back() + d2 * q / (1.0 - q);
    fit.method = "aitken";
  } else if (q <= 0.0) {
    // oscillating ratios: the LSQ slope averages over the oscillation
    fit.sigma_hat = slope_base;
    fit.method = "slope";
  }
  // q in [0.98, inf) or (0, 0.02]: keep the last ratio
}

void finish_fit(ScalingFit& fit) {
  size_t n = fit.samples.size();
  if (n < 2) throw UsageError("scaling fit: need at least two depths");
  for (auto& [m, v] : fit.samples)
    if (!(v > 0)) {
      char msg[96];
      std::snprintf(msg, sizeof msg,
                    "scaling fit: non-positive sample %.3g at depth %d", v, m);
      throw AnalyticError(msg);
    }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto& [m, v] : fit.samples) {
    double x = m, y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double dn = static_cast<double>(n);
  fit.log_slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  double intercept = (sy - fit.log_slope * sx) / dn;
  fit.residual = 0;
  for (auto& [m, v] : fit.samples)
    fit.residual = std::max(
        fit.residual, std::abs(std::log(v) - (intercept + fit.log_slope * m)));

  fit.ratio_estimates.clear();
  for (size_t i = 0; i + 1 < n; ++i) {
    double a = fit.samples[i].second, b = fit.samples[i + 1].second;
    fit.ratio_estimates.push_back(fit.source == ScanSource::Conductance ? a / b
                                                                        : b / a);
  }
  double slope_base = fit.source == ScanSource::Conductance
                          ? std::exp(-fit.log_slope)
                          : std::exp(fit.log_slope);
  extrapolate(fit, slope_base);
}

}  // namespace

std::vector<CellWord> default_w_samples(const SubdivisionScheme& s, int level) {
  if (level < 1 || level > s.max_level())
    throw UsageError("default_w_samples: level out of range");
  const LevelGraph& g = s.level_graph(level);
  int dmin = 1 << 30, dmax = -1;
  for (int64_t i = 0; i < g.size(); ++i) {
    int d = g.degree(i);
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  std::vector<int64_t> picks;
  auto first_with = [&](auto&& pred) -> int64_t {
    for (int64_t i = 0; i < g.size(); ++i)
      if (pred(g.degree(i))) return i;
    return -1;
  };
  picks.push_back(first_with([&](int d) { return d == dmin; }));
  if (dmax != dmin) picks.push_back(first_with([&](int d) { return d == dmax; }));
  int64_t mid = first_with([&](int d) { return d > dmin && d < dmax; });
  if (mid >= 0) picks.push_back(mid);
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  std::vector<CellWord> out;
  for (int64_t i : picks) out.push_back(g.word(i));
  return out;
}

ScalingFit fit_sigma_conductance(const SubdivisionScheme& s, double p, int m_lo,
                                 int m_hi, std::span<const CellWord> w_samples,
                                 int ball_radius, const SolverOptions& opt,
                                 const RingEval& eval) {
  if (m_lo < 1 || m_hi < m_lo + 1)
    throw UsageError("fit_sigma_conductance: need m_lo >= 1 and m_hi > m_lo");
  if (w_samples.empty())
    throw UsageError("fit_sigma_conductance: need at least one center cell");
  ScalingFit fit;
  fit.p = p;
  fit.source = ScanSource::Conductance;
  for (int m = m_lo; m <= m_hi; ++m) {
    double best = 0;
    for (const CellWord& w : w_samples) {
      double v = eval ? eval(w, m, p)
                      : ring_conductance(s, w, m, p, opt, ball_radius).value;
      best = std::max(best, v);
    }
    fit.samples.emplace_back(m, best);
  }
  finish_fit(fit);
  return fit;
}

ScalingFit fit_sigma_disparity(const SubdivisionScheme& s,
                               const SelfSimilarMeasure& mu, double p, int m_lo,
                               int m_hi, int n, const AscentOptions& opt) {
  if (m_lo < 1 || m_hi < m_lo + 1)
    throw UsageError("fit_sigma_disparity: need m_lo >= 1 and m_hi > m_lo");
  ScalingFit fit;
  fit.p = p;
  fit.source = ScanSource::Disparity;
  for (int m = m_lo; m <= m_hi; ++m)
    fit.samples.emplace_back(m, level_disparity(s, mu, n, m, p, opt).value);
  finish_fit(fit);
  return fit;
}

HomogeneityReport check_homogeneity(const SubdivisionScheme& s,
                                    const SelfSimilarMeasure& mu, double p,
                                    int m_lo, int m_hi, int ball_radius,
                                    std::span<const CellWord> w_samples, int n,
                                    const SolverOptions& sopt,
                                    const AscentOptions& aopt) {
  if (m_lo < 1 || m_hi < m_lo + 1)
    throw UsageError("check_homogeneity: need m_lo >= 1 and m_hi > m_lo");
  HomogeneityReport rep;
  rep.p = p;
  rep.ball_radius = ball_radius;
  for (int m = m_lo; m <= m_hi; ++m) {
    HomogeneityRow row;
    row.m = m;
    for (const CellWord& w : w_samples)
      row.conductance = std::max(
          row.conductance, ring_conductance(s, w, m, p, sopt, ball_radius).value);
    row.disparity = level_disparity(s, mu, n, m, p, aopt).value;
    row.product = row.conductance * row.disparity;
    rep.rows.push_back(row);
  }
  std::vector<double> runmax;
  double cur = 0;
  for (auto& row : rep.rows) {
    cur = std::max(cur, row.product);
    runmax.push_back(cur);
  }
  size_t half = rep.rows.size() / 2;
  rep.bounded_looking = runmax.back() <= 1.10 * runmax[half];
  char note[160];
  std::snprintf(note, sizeof note,
                "finite-depth heuristic: running max %.6g at m=%d vs %.6g at "
                "m=%d (within 10%% = bounded-looking)",
                runmax.back(), rep.rows.back().m, runmax[half], rep.rows[half].m);
  rep.note = note;
  return rep;
}

DimArResult estimate_dim_ar(double p_lo, double p_hi, double tol_p,
                            const SigmaEval& sigma) {
  if (!(p_lo > 1.0) || !(p_hi > p_lo) || !(tol_p > 0))
    throw UsageError("estimate_dim_ar: need 1 < p_lo < p_hi and tol_p > 0");
  DimArResult res;
  double s_lo = sigma(p_lo), s_hi = sigma(p_hi);
  res.evaluations = {{p_lo, s_lo}, {p_hi, s_hi}};
  if (!(s_lo < 1.0 && s_hi > 1.0)) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "estimate_dim_ar: no crossing inside [%.4g, %.4g] "
                  "(sigma = %.6g and %.6g)",
                  p_lo, p_hi, s_lo, s_hi);
    throw AnalyticError(msg);
  }
  double lo = p_lo, hi = p_hi;
  while (hi - lo > tol_p) {
    double mid = 0.5 * (lo + hi);
    double s_mid = sigma(mid);
    res.evaluations.emplace_back(mid, s_mid);
    if (s_mid < 1.0)
      lo = mid;
    else
      hi = mid;
  }
  res.p_lo = lo;
  res.p_hi = hi;
  res.p_star = 0.5 * (lo + hi);
  std::sort(res.evaluations.begin(), res.evaluations.end());
  for (size_t i = 0; i + 1 < res.evaluations.size(); ++i)
    if (res.evaluations[i + 1].second < res.evaluations[i].second - 1e-9)
      res.monotone = false;
  return res;
}

DimArResult estimate_dim_ar(const SubdivisionScheme& s, double p_lo, double p_hi,
                            double tol_p, int m_lo, int m_hi,
                            std::span<const CellWord> w_samples, int ball_radius,
                            const SolverOptions& opt) {
  return estimate_dim_ar(p_lo, p_hi, tol_p, [&](double p) {
    return fit_sigma_conductance(s, p, m_lo, m_hi, w_samples, ball_radius, opt)
        .sigma_hat;
  });
}

std::vector<std::pair<int, double>> wp_scaled_energies(const SelfSimilarMeasure& mu,
                                                       const CellFunction& f,
                                                       double sigma, double p) {
  if (!(sigma > 0)) throw UsageError("wp_scaled_energies: sigma must be positive");
  if (!(p >= 1)) throw UsageError("wp_scaled_energies: requires p >= 1");
  if (f.level < 1) throw UsageError("wp_scaled_energies: need level >= 1");
  const SubdivisionScheme& s = mu.scheme();
  std::vector<std::pair<int, double>> out;
  double scale = 1.0;
  for (int m = 1; m <= f.level; ++m) {
    scale *= sigma;
    CellFunction pm = project_to_level(mu, f, m);
    out.emplace_back(m, scale * p_energy(s.level_graph(m), pm.values, p));
  }
  return out;
}

}  // namespace fractalp
