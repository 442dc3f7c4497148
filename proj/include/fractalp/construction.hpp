#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fractalp/measure.hpp"
#include "fractalp/penergy.hpp"
#include "fractalp/scheme.hpp"

namespace fractalp {

// sum_{j >= 1} j^-p for p > 1 (direct head plus Euler-Maclaurin tail,
// accurate to ~1e-13 for p >= 1.05).
double p_series(double p);

enum class CutoffMode { HarmonicMinimizer, MaxOfCellCutoffs };

// Recipe for the unbounded-candidate pipeline: follow the address omega
// (cycled) into the fractal, surround each target cell w_j with rings
// A_j = Gamma_{M*}(w_j), B_j = Gamma_{2M*}(w_j), build cutoffs that drop
// from 1 on S(A_j) to 0 outside S(B_j), and stack them with 1/j weights.
struct ConstructionConfig {
  double p = 1.3;
  double sigma = 1.0;
  std::string sigma_source = "user";  // "user", "analytic", or "fitted"
  int k_max = 4;
  std::vector<uint8_t> omega = {0};  // cycled to the needed length
  int m_star = -1;                   // -1: certify from the scheme
  CutoffMode cutoff_mode = CutoffMode::HarmonicMinimizer;
  // Cutoff solves target a 1e-7 first-order residual: the energy error is
  // quadratic in that residual, while p near 1 puts a size-dependent floor
  // under the smoothed gradient (a 1e5-cell solve stalls near 3e-8).
  SolverOptions solver = [] {
    SolverOptions o;
    o.tol_kkt = 1e-7;
    return o;
  }();
  int64_t relaxed_threshold = 150000;  // free count switching to the relaxed profile
};

struct RingSystem {
  int level = 0;
  int64_t center = -1;
  std::vector<int64_t> a, b, bstar;  // sorted cell indices
};

struct CutoffRecord {
  int j = 0;
  int m = 0;  // refinement depth below the ring's level
  double energy = 0;
  double scaled = 0;  // energy * sigma^m
  bool from_cache = false;
  bool relaxed = false;
};

struct LevelRecord {
  int n = 0;
  int k = 0;
  std::vector<CutoffRecord> cutoffs;
  double energy = 0;          // E_p^n(f_n)
  double scaled_energy = 0;   // sigma^n * energy
  double decomposition_gap = 0;  // |E - sum j^-p E_j| / E
  double plateau = 0;            // common value on the innermost refined ring
  double plateau_expected = 0;   // H_k
  bool plateau_exact = false;
  double max_value = 0;
  double lp_norm = 0;
  std::vector<std::pair<int, double>> projected;  // (m, sigma^m E_p^m(P_m f_n))
  double projected_max = 0;
};

struct ConstructionReport {
  double p = 0;
  double sigma = 0;
  std::string sigma_source;
  std::string cutoff_mode;
  int m_star = 0;
  int k_max = 0;
  int n_max = 0;
  int l_star = 0;   // certified degree bound
  int n_t = 0;      // star-covering multiplicity
  double gamma_max = 0;  // largest measure weight
  std::vector<LevelRecord> levels;
  double c1 = 0;            // empirical max of energy * sigma^{depth}
  double series = 0;        // sum_{j>=1} j^-p
  double energy_bound = 0;  // c1 * series
  double scaled_max = 0;
  bool scaled_bounded = false;
  double lp_bound = 0;  // ((L*+1)^{2M*})^{1/p} * q/(1-q), q = gamma^{(M*+1)/p}
  double lp_max = 0;
  bool lp_bounded = false;
  double c2_observed = 0;  // max_n projected_max / scaled_energy
  double c2_formula = 0;   // L* * N_T (chain count 1, its p-power 1)
  bool sigma_le_one = true;
  std::string boundedness_label;
};

// Stateful pipeline: the constructor certifies M* (unless given), builds the
// target words and ring systems, and checks the nesting chain
// pi^{M*+1}(B*_{j+1}) inside A_j exhaustively. Cutoff solves are cached by
// congruence class (relative ring shape + depth), with coarser solutions
// prolonged as warm starts for deeper ones.
class ConstructionRun {
 public:
  ConstructionRun(const SubdivisionScheme& s, const SelfSimilarMeasure& mu,
                  ConstructionConfig cfg);

  const ConstructionConfig& config() const { return cfg_; }
  int m_star() const { return m_star_; }
  int step() const { return m_star_ + 1; }
  int n_max() const { return n_max_; }
  int l_star() const { return l_star_; }
  int n_t() const { return n_t_; }
  const std::vector<CellWord>& targets() const { return targets_; }
  const RingSystem& rings(int j) const;

  // f_{n,j}: 1 on S(A_j), 0 off S(B_j), interior per mode; values in [0, 1].
  SparseCellFunction build_cutoff(int n, int j, CutoffMode mode,
                                  CutoffRecord* rec = nullptr);
  SparseCellFunction build_cutoff(int n, int j, CutoffRecord* rec = nullptr) {
    return build_cutoff(n, j, cfg_.cutoff_mode, rec);
  }

  // f_n = sum_j (1/j) f_{n,j}, ascending-j accumulation per cell; verifies
  // support separation of the innermost cutoff.
  SparseCellFunction assemble(int n,
                              const std::vector<SparseCellFunction>& cutoffs) const;

  // Builds all cutoffs for this n, assembles, and evaluates every identity
  // and scaled quantity for the report.
  LevelRecord analyze(int n);

  ConstructionReport run();  // analyze n = M*+1 .. k_max(M*+1)

 private:
  struct CacheEntry {
    std::vector<double> values;  // canonical ring order x tail
    double energy = 0;
    bool relaxed = false;
  };

  std::string shape_key(int j, int m, CutoffMode mode,
                        std::vector<size_t>& canon_rank) const;
  SparseCellFunction instantiate(int n, int j, const CacheEntry& entry,
                                 const std::vector<size_t>& canon_rank) const;
  CacheEntry solve_harmonic(int n, int j, const std::string& warm_key,
                            const std::vector<size_t>& canon_rank);
  CacheEntry solve_max_of_cells(int n, int j);
  SparseCellFunction project_one_level(const SparseCellFunction& f) const;

  const SubdivisionScheme& s_;
  const SelfSimilarMeasure& mu_;
  ConstructionConfig cfg_;
  int m_star_ = 1;
  int n_max_ = 0;
  int l_star_ = 0;
  int n_t_ = 0;
  std::vector<CellWord> targets_;
  std::vector<RingSystem> rings_;
  std::map<std::string, CacheEntry> cache_;
};

ConstructionReport run_construction(const SubdivisionScheme& s,
                                    const SelfSimilarMeasure& mu,
                                    const ConstructionConfig& cfg);

}  // namespace fractalp
