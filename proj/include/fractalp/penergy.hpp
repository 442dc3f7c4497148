#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fractalp/level_graph.hpp"
#include "fractalp/scheme.hpp"

namespace fractalp {

// Compensated accumulator; the exact-identity checks downstream depend on
// energy sums being reproducible to ~1 ulp per term.
struct KahanSum {
  double sum = 0.0, carry = 0.0;
  void add(double x) {
    double y = x - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

inline double pow_abs(double d, double p) {
  if (p == 2.0) return d * d;
  if (p == 1.0) return std::fabs(d);
  return std::pow(std::fabs(d), p);
}

// Discrete p-energy: sum of |f(u)-f(v)|^p over unordered adjacent pairs.
double p_energy(const LevelGraph& g, std::span<const double> values, double p);

// Same, restricted to the subgraph induced by a sorted cell subset; `values`
// is aligned with `cells`.
double p_energy_on(const LevelGraph& g, std::span<const int64_t> cells,
                   std::span<const double> values, double p);

// Function on T_n stored as sorted (index, value) pairs; absent cells hold 0.
// Multi-million-cell levels stay affordable because supports of interest are
// unions of descendant ranges.
struct SparseCellFunction {
  int level = 0;
  std::vector<int64_t> index;  // sorted ascending, unique
  std::vector<double> value;   // aligned with index

  int64_t find(int64_t i) const;        // position, or -1
  double at(int64_t i) const;           // 0 if absent
  double max_abs() const;
  void check_sorted() const;            // throws UsageError on violation
};

// Energy of a sparse function over the whole graph: edges between two absent
// cells contribute 0 and are skipped, everything else is summed exactly.
double p_energy(const LevelGraph& g, const SparseCellFunction& f, double p);

struct IndexRange {
  int64_t lo = 0, hi = 0;  // [lo, hi)
};

struct PinnedRange {
  int64_t lo = 0, hi = 0;
  double value = 0.0;
};

// Dirichlet data: disjoint index ranges pinned to constants. Descendant
// blocks are contiguous, so boundary sets at any depth stay O(#cells) ranges.
class FixedAssignment {
 public:
  void pin_range(int64_t lo, int64_t hi, double value);
  void pin_index(int64_t i, double value) { pin_range(i, i + 1, value); }
  // Pins every level-`at_level` descendant of `w`.
  void pin_descendants(const SubdivisionScheme& s, const CellWord& w,
                       int at_level, double value);

  // Sorts and merges; throws UsageError on overlapping ranges.
  void normalize();
  bool normalized() const { return normalized_; }

  const std::vector<PinnedRange>& ranges() const { return ranges_; }
  bool empty() const { return ranges_.empty(); }
  int64_t pinned_count() const;
  std::optional<double> value_of(int64_t i) const;  // requires normalized
  double min_value() const;
  double max_value() const;

 private:
  std::vector<PinnedRange> ranges_;
  bool normalized_ = false;
};

// The free part of a Dirichlet problem, extracted once: free vertices are
// ranked in index order, with CSR adjacency split into free-free slots and
// free-pinned values. Components with no pinned contact are ungrounded; any
// constant on them is optimal and the solver leaves them at 0.
struct ExtractedProblem {
  const LevelGraph* graph = nullptr;
  std::vector<IndexRange> free_ranges;  // complement of the pins, sorted
  std::vector<int64_t> free_prefix;     // running count before each range
  int64_t n_free = 0;

  std::vector<int64_t> ff_offset;  // size n_free + 1
  std::vector<int32_t> ff_slot;    // both orientations of each free-free edge
  std::vector<int64_t> fb_offset;  // size n_free + 1
  std::vector<double> fb_value;    // pinned neighbor values

  std::vector<int32_t> component;      // per free vertex
  std::vector<char> component_grounded;
  int32_t n_components = 0;

  int64_t free_index(int64_t rank) const;    // rank -> graph index
  int64_t rank_of(int64_t graph_index) const;  // -1 if pinned
};

ExtractedProblem extract_problem(const LevelGraph& g, const FixedAssignment& pins);

struct SolverOptions {
  // Final KKT target: max gradient entry of the smoothed functional at the
  // final smoothing level, scaled internally by (pin spread)^{p-1}. (The raw
  // gradient p|d|^{p-1} cannot certify optima for p < 2 in doubles: roundoff
  // on a zero-difference edge already contributes ~1e-8 at p = 1.5.)
  double tol_kkt = 1e-9;
  double eps_initial_factor = 1e-2;  // smoothing starts at spread * this
  double eps_final_factor = 1e-10;   // and is halved down to spread * this
  int max_irls_per_stage = 40;
  int newton_polish_iters = 6;
  int max_pcg = 4000;            // per linear solve
  int64_t ic0_threshold = 20000;  // incomplete-Cholesky preconditioner above
  bool relaxed = false;          // loosened profile for multi-million solves
  int verbosity = 0;
};

SolverOptions relaxed_solver_profile();

struct SolveStats {
  int stages = 0;
  int irls_iterations = 0;
  int64_t pcg_iterations = 0;
  double kkt_residual = 0.0;   // smoothed gradient max-norm, absolute
  double kkt_tolerance = 0.0;
  double eps_final = 0.0;      // smoothing level the residual refers to
  bool converged = false;
};

struct DirichletSolution {
  SparseCellFunction f;  // pinned nonzeros plus all free vertices
  double energy = 0.0;   // exact unsmoothed p-energy of f over the graph
  SolveStats stats;
};

// Minimizes the p-energy over the free vertices subject to the pins
// (p > 1). Smoothed IRLS with epsilon continuation, PCG inner solves, and a
// damped Newton polish; `warm` seeds the free values when given.
DirichletSolution solve_dirichlet(const LevelGraph& g, const FixedAssignment& pins,
                                  double p, const SolverOptions& opt = {},
                                  const SparseCellFunction* warm = nullptr);

struct ConductanceResult {
  double value = 0.0;
  SolveStats stats;
  SparseCellFunction potential;
};

// Effective p-conductance between two disjoint range unions (potential 1 on
// `ones`, 0 on `zeros`, free elsewhere). Throws SolveError if the solver
// misses its tolerance in a strict profile.
ConductanceResult effective_conductance(const LevelGraph& g,
                                        std::span<const IndexRange> ones,
                                        std::span<const IndexRange> zeros,
                                        double p, const SolverOptions& opt = {});

// Conductance across the annulus Gamma_ball_radius(w) \ {w}, refined m levels:
// potential 1 on the descendants of w, 0 outside the descendants of the ball.
ConductanceResult ring_conductance(const SubdivisionScheme& s, const CellWord& w,
                                   int m, double p, const SolverOptions& opt = {},
                                   int ball_radius = 1);

}  // namespace fractalp
