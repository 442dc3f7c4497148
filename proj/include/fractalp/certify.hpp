#pragma once

#include <optional>
#include <vector>

#include "fractalp/scheme.hpp"

namespace fractalp {

// Finite-depth certificates for the structural constants the analysis rests
// on. All are exhaustive enumerations up to the stated depth; none of them
// extrapolate.

struct DegreeBoundCertificate {
  int n_max = 0;
  int l_star = 0;               // max vertex degree over levels 1..n_max
  std::vector<int> per_level;   // per_level[i] = max degree at level i+1
};
DegreeBoundCertificate certify_degree_bound(const SubdivisionScheme& s, int n_max);

struct ProjectionRadiusCertificate {
  int n_max = 0;
  int m_star = 0;  // minimal M with pi(Gamma_{M+1}(w)) inside Gamma_M(pi(w))
};
// Searches M = 0..m_hi for the smallest M such that for every w at levels
// 2..n_max, the parents of Gamma_{M+1}(w) lie in Gamma_M(pi(w)). Throws
// AnalyticError when no M <= m_hi works.
ProjectionRadiusCertificate certify_projection_radius(const SubdivisionScheme& s,
                                                      int n_max, int m_hi = 4);

struct ProjectionStabilityViolation {
  CellWord w;
  int k = 0;
};
struct ProjectionStabilityReport {
  bool ok = false;
  int m_star = 0;
  int k_max = 0;
  int n_max = 0;
  std::optional<ProjectionStabilityViolation> first_violation;
};
// Checks the iterated form: pi^k(Gamma_{m_star+k}(w)) inside
// Gamma_{m_star}(pi^k(w)) for all 1 <= k <= k_max and all w at levels
// k+1..n_max. This is the stability property that lets ring neighborhoods be
// projected down k levels at a time.
ProjectionStabilityReport verify_projection_stability(const SubdivisionScheme& s,
                                                      int m_star, int k_max,
                                                      int n_max);

}  // namespace fractalp
