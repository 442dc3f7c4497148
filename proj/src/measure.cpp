#include "fractalp/measure.hpp"

#include <cmath>
#include <fstream>

namespace fractalp {

SelfSimilarMeasure::SelfSimilarMeasure(const SubdivisionScheme& s,
                                       std::vector<double> w)
    : scheme_(&s), weights_(std::move(w)) {
  if (static_cast<int>(weights_.size()) != s.branching())
    throw UsageError("measure: expected " + std::to_string(s.branching()) +
                     " weights, got " + std::to_string(weights_.size()));
  double sum = 0.0;
  max_weight_ = 0.0;
  for (double x : weights_) {
    if (!(x > 0.0)) throw UsageError("measure: weights must be positive");
    sum += x;
    max_weight_ = std::max(max_weight_, x);
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw UsageError("measure: weights sum to " + std::to_string(sum) +
                     ", expected 1 within 1e-12");
  uniform_ = true;
  for (double x : weights_)
    if (x != weights_[0]) uniform_ = false;
}

SelfSimilarMeasure SelfSimilarMeasure::uniform(const SubdivisionScheme& s) {
  return SelfSimilarMeasure(
      s, std::vector<double>(static_cast<size_t>(s.branching()),
                             1.0 / s.branching()));
}

SelfSimilarMeasure SelfSimilarMeasure::from_weights(const SubdivisionScheme& s,
                                                    std::vector<double> weights) {
  return SelfSimilarMeasure(s, std::move(weights));
}

SelfSimilarMeasure SelfSimilarMeasure::from_file(const SubdivisionScheme& s,
                                                 const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open weights file '" + path.string() + "'");
  std::vector<double> w;
  double x;
  while (in >> x) w.push_back(x);
  return SelfSimilarMeasure(s, std::move(w));
}

double SelfSimilarMeasure::cell_mass(const CellWord& w) const {
  double m = 1.0;
  for (uint8_t s : w.symbols()) {
    if (s >= weights_.size()) throw UsageError("cell_mass: symbol out of range");
    m *= weights_[s];
  }
  return m;
}

CellFunction project_to_level(const SelfSimilarMeasure& mu, const CellFunction& f,
                              int to_level) {
  if (to_level < 0 || to_level > f.level)
    throw UsageError("project_to_level: target level " + std::to_string(to_level) +
                     " not in [0, " + std::to_string(f.level) + "]");
  const SubdivisionScheme& s = mu.scheme();
  if (static_cast<int64_t>(f.values.size()) != s.level_size(f.level))
    throw UsageError("project_to_level: value count does not match level");
  CellFunction cur = f;
  int K = s.branching();
  std::span<const double> w = mu.weights();
  while (cur.level > to_level) {
    // mu(K_child)/mu(K_parent) is exactly the child's own symbol weight
    std::vector<double> next(cur.values.size() / static_cast<size_t>(K));
    for (size_t i = 0; i < next.size(); ++i) {
      double acc = 0.0;
      for (int c = 0; c < K; ++c)
        acc += w[static_cast<size_t>(c)] * cur.values[i * static_cast<size_t>(K) +
                                                      static_cast<size_t>(c)];
      next[i] = acc;
    }
    cur.values = std::move(next);
    --cur.level;
  }
  return cur;
}

double lp_norm(const SelfSimilarMeasure& mu, const CellFunction& f, double p) {
  if (!(p >= 1.0)) throw UsageError("lp_norm: need p >= 1");
  const SubdivisionScheme& s = mu.scheme();
  int64_t n = s.level_size(f.level);
  if (static_cast<int64_t>(f.values.size()) != n)
    throw UsageError("lp_norm: value count does not match level");
  double acc = 0.0, comp = 0.0;  // Kahan
  if (mu.is_uniform()) {
    for (double v : f.values) {
      double t = std::pow(std::abs(v), p) - comp;
      double s2 = acc + t;
      comp = (s2 - acc) - t;
      acc = s2;
    }
    double mass = 1.0;
    for (int i = 0; i < f.level; ++i) mass /= s.branching();
    return std::pow(acc * mass, 1.0 / p);
  }
  // odometer over words, maintaining prefix mass products
  int K = s.branching();
  int lvl = f.level;
  std::vector<int> digits(static_cast<size_t>(lvl), 0);
  std::vector<double> prefix(static_cast<size_t>(lvl) + 1, 1.0);
  for (int d = 0; d < lvl; ++d)
    prefix[static_cast<size_t>(d) + 1] = prefix[static_cast<size_t>(d)] * mu.weight(0);
  for (int64_t i = 0; i < n; ++i) {
    if (i > 0) {
      int pos = lvl - 1;
      while (digits[static_cast<size_t>(pos)] == K - 1) {
        digits[static_cast<size_t>(pos)] = 0;
        --pos;
      }
      ++digits[static_cast<size_t>(pos)];
      for (int d = pos; d < lvl; ++d)
        prefix[static_cast<size_t>(d) + 1] =
            prefix[static_cast<size_t>(d)] * mu.weight(digits[static_cast<size_t>(d)]);
    }
    double term = prefix[static_cast<size_t>(lvl)] *
                  std::pow(std::abs(f.values[static_cast<size_t>(i)]), p);
    double t = term - comp;
    double s2 = acc + t;
    comp = (s2 - acc) - t;
    acc = s2;
  }
  return std::pow(acc, 1.0 / p);
}

}  // namespace fractalp
