#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fractalp/disparity.hpp"
#include "fractalp/measure.hpp"
#include "fractalp/penergy.hpp"
#include "fractalp/scheme.hpp"

namespace fractalp {

enum class ScanSource { Conductance, Disparity };

// Least-squares power-law fit of a per-depth quantity, plus a sequence
// extrapolation of consecutive ratios. sigma_hat is the extrapolated scaling
// base (conductance decays like sigma^-m, disparity grows like sigma^m).
struct ScalingFit {
  double p = 0;
  ScanSource source = ScanSource::Conductance;
  std::vector<std::pair<int, double>> samples;  // (m, value)
  double log_slope = 0;  // LSQ slope of log(value) vs m
  double residual = 0;   // max |log value - fitted line|
  std::vector<double> ratio_estimates;
  double sigma_hat = 0;
  std::string method;  // "aitken", "ratio", or "slope"
};

// Per-(w, m) conductance evaluator; the CLI substitutes a caching wrapper.
using RingEval = std::function<double(const CellWord&, int, double)>;

// Deterministic representative cells at the given level: the first cell of
// minimal degree, the first of maximal degree, and (when present) the first
// with a degree strictly between.
std::vector<CellWord> default_w_samples(const SubdivisionScheme& s, int level = 2);

ScalingFit fit_sigma_conductance(const SubdivisionScheme& s, double p, int m_lo,
                                 int m_hi, std::span<const CellWord> w_samples,
                                 int ball_radius = 1,
                                 const SolverOptions& opt = {},
                                 const RingEval& eval = {});

ScalingFit fit_sigma_disparity(const SubdivisionScheme& s,
                               const SelfSimilarMeasure& mu, double p, int m_lo,
                               int m_hi, int n = 1, const AscentOptions& opt = {});

struct HomogeneityRow {
  int m = 0;
  double conductance = 0;
  double disparity = 0;
  double product = 0;
};

// Product sequence m -> sigma_{p,m} * E_{ball,p,m}; if both quantities scale
// with reciprocal bases the products stay bounded. The verdict is a
// finite-depth heuristic: the running max over the scanned range must not
// grow more than 10% past its value at the half-way depth.
struct HomogeneityReport {
  double p = 0;
  int ball_radius = 1;
  std::vector<HomogeneityRow> rows;
  bool bounded_looking = false;
  std::string note;
};

HomogeneityReport check_homogeneity(const SubdivisionScheme& s,
                                    const SelfSimilarMeasure& mu, double p,
                                    int m_lo, int m_hi, int ball_radius,
                                    std::span<const CellWord> w_samples, int n = 1,
                                    const SolverOptions& sopt = {},
                                    const AscentOptions& aopt = {});

using SigmaEval = std::function<double(double)>;

struct DimArResult {
  double p_star = 0;
  double p_lo = 0, p_hi = 0;  // final bracket
  std::vector<std::pair<double, double>> evaluations;  // (p, sigma_hat)
  bool monotone = true;
};

// Bisection for the p where the fitted scaling base crosses 1. Requires
// sigma(p_lo) < 1 < sigma(p_hi); otherwise the crossing lies outside the
// range and an AnalyticError is thrown.
DimArResult estimate_dim_ar(double p_lo, double p_hi, double tol_p,
                            const SigmaEval& sigma);
DimArResult estimate_dim_ar(const SubdivisionScheme& s, double p_lo, double p_hi,
                            double tol_p, int m_lo, int m_hi,
                            std::span<const CellWord> w_samples,
                            int ball_radius = 1, const SolverOptions& opt = {});

// (m, sigma^m * E_p^m(P_m f)) for m = 1..f.level: the discrete scaled-energy
// sequence whose boundedness defines membership in the energy space.
std::vector<std::pair<int, double>> wp_scaled_energies(const SelfSimilarMeasure& mu,
                                                       const CellFunction& f,
                                                       double sigma, double p);

}  // namespace fractalp
