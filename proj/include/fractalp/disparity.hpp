#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fractalp/measure.hpp"
#include "fractalp/scheme.hpp"

namespace fractalp {

// Star patches {Gamma_1(w) ∩ A : w ∈ A} with the two covering numbers:
// n_t = max number of patches containing one cell, n_e = chaining bound
// (verified: adjacent u, v always share the patch of u, so n_e = 1).
struct Covering {
  int level = 0;
  std::vector<int64_t> centers;
  std::vector<std::vector<int64_t>> patches;  // sorted cell indices
  int n_t = 0;
  int n_e = 1;
};

Covering covering_of(const SubdivisionScheme& s, int level,
                     std::span<const int64_t> cells);

struct AscentOptions {
  int restarts = 32;
  int max_iters = 400;
  double tol = 1e-12;  // relative improvement considered progress
  uint64_t seed = 0;
};

struct DisparityEstimate {
  double value = 0.0;
  int level = 0;                    // coarse level of A
  int m = 0;                        // refinement depth
  std::vector<int64_t> fine_cells;  // S^m(A), sorted
  std::vector<double> maximizer;    // aligned with fine_cells
  int restarts = 0;
  bool certified_lower = true;  // every candidate ratio is feasible
};

// sigma_{p,m}(A): sup over g on S^m(A) of
//   (coarse p-energy of the mu-average of g on A) / (fine p-energy of g).
// Nonconvex for p != 2; seeded multi-restart ascent returns a certified
// lower bound. Throws AnalyticError when the value is infinite (S^m(A)
// disconnected with a non-constant coarse shadow).
DisparityEstimate neighbor_disparity(const SubdivisionScheme& s,
                                     const SelfSimilarMeasure& mu,
                                     std::span<const int64_t> a_cells, int level,
                                     int m, double p,
                                     const AscentOptions& opt = {});

// Closed p=2 route: largest generalized eigenvalue of the averaged coarse
// quadratic form against the fine one on the complement of per-component
// constants. Kept independent of the ascent so the two can cross-check.
double neighbor_disparity_p2_eigen(const SubdivisionScheme& s,
                                   const SelfSimilarMeasure& mu,
                                   std::span<const int64_t> a_cells, int level,
                                   int m);

struct LevelDisparity {
  double value = 0.0;
  int level = 0;
  int m = 0;
  int64_t argmax_center = -1;
  std::vector<int64_t> argmax_patch;
  int evaluated = 0;  // distinct patch shapes actually solved
  int64_t total = 0;  // stars considered
};

// sigma_{p,m,n}: max of neighbor_disparity over the star covering of T_n.
// Congruent (translated) stars are deduplicated when the measure is uniform.
LevelDisparity level_disparity(const SubdivisionScheme& s,
                               const SelfSimilarMeasure& mu, int n, int m,
                               double p, const AscentOptions& opt = {});

}  // namespace fractalp
