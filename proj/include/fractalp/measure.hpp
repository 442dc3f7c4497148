#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fractalp/scheme.hpp"

namespace fractalp {

// Self-similar measure on the limit set: each kept cell carries a fixed
// positive weight, weights sum to 1, and a cell's mass is the product of the
// weights along its word. Mass is exactly additive across children by
// construction.
class SelfSimilarMeasure {
 public:
  static SelfSimilarMeasure uniform(const SubdivisionScheme& s);
  // weights listed in kept-cell (symbol) order; must be positive and sum to
  // 1 within 1e-12
  static SelfSimilarMeasure from_weights(const SubdivisionScheme& s,
                                         std::vector<double> weights);
  // one real per line, kept-cell order
  static SelfSimilarMeasure from_file(const SubdivisionScheme& s,
                                      const std::filesystem::path& path);

  const SubdivisionScheme& scheme() const { return *scheme_; }
  double weight(int symbol) const { return weights_[static_cast<size_t>(symbol)]; }
  std::span<const double> weights() const { return weights_; }
  double max_weight() const { return max_weight_; }  // decay base per level
  bool is_uniform() const { return uniform_; }

  double cell_mass(const CellWord& w) const;

 private:
  SelfSimilarMeasure(const SubdivisionScheme& s, std::vector<double> w);
  const SubdivisionScheme* scheme_;
  std::vector<double> weights_;
  double max_weight_;
  bool uniform_;
};

// A function on the cells of one level, indexed like the LevelGraph.
struct CellFunction {
  int level = 0;
  std::vector<double> values;
};

// Conditional-expectation projection: averages f (given at f.level) down to
// to_level using child masses relative to the parent. Exact bottom-up pass;
// projecting to the same level is the identity.
CellFunction project_to_level(const SelfSimilarMeasure& mu, const CellFunction& f,
                              int to_level);

// (sum_w mu(K_w) |f(w)|^p)^(1/p)
double lp_norm(const SelfSimilarMeasure& mu, const CellFunction& f, double p);

}  // namespace fractalp
