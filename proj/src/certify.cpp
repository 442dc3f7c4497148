#include "fractalp/certify.hpp"

#include <algorithm>

#include "fractalp/level_graph.hpp"

namespace fractalp {

DegreeBoundCertificate certify_degree_bound(const SubdivisionScheme& s, int n_max) {
  if (n_max < 1) throw UsageError("certify_degree_bound: need n_max >= 1");
  DegreeBoundCertificate cert;
  cert.n_max = n_max;
  for (int n = 1; n <= n_max; ++n) {
    int d = s.level_graph(n).max_degree();
    cert.per_level.push_back(d);
    cert.l_star = std::max(cert.l_star, d);
  }
  return cert;
}

namespace {

// Is pi(Gamma_{M+1}(w)) inside Gamma_M(pi(w)) for every w at levels 2..n_max?
bool projection_radius_holds(const SubdivisionScheme& s, int M, int n_max) {
  for (int n = 2; n <= n_max; ++n) {
    const LevelGraph& g = s.level_graph(n);
    const LevelGraph& gp = s.level_graph(n - 1);
    int K = s.branching();
    for (int64_t i = 0; i < g.size(); ++i) {
      std::vector<int64_t> ball = g.gamma(M + 1, i);
      std::vector<int64_t> target = gp.gamma(M, i / K);
      for (int64_t v : ball)
        if (!std::binary_search(target.begin(), target.end(), v / K)) return false;
    }
  }
  return true;
}

}  // namespace

ProjectionRadiusCertificate certify_projection_radius(const SubdivisionScheme& s,
                                                      int n_max, int m_hi) {
  if (n_max < 2) throw UsageError("certify_projection_radius: need n_max >= 2");
  for (int M = 0; M <= m_hi; ++M) {
    if (projection_radius_holds(s, M, n_max))
      return ProjectionRadiusCertificate{n_max, M};
  }
  throw AnalyticError("no projection radius M <= " + std::to_string(m_hi) +
                      " certifies at depth " + std::to_string(n_max) +
                      " for scheme '" + s.name() + "'");
}

ProjectionStabilityReport verify_projection_stability(const SubdivisionScheme& s,
                                                      int m_star, int k_max,
                                                      int n_max) {
  if (m_star < 0 || k_max < 0) throw UsageError("verify_projection_stability: bad args");
  ProjectionStabilityReport rep;
  rep.m_star = m_star;
  rep.k_max = k_max;
  rep.n_max = n_max;
  rep.ok = true;
  for (int k = 1; k <= k_max; ++k) {
    for (int n = k + 1; n <= n_max; ++n) {
      const LevelGraph& g = s.level_graph(n);
      const LevelGraph& gk = s.level_graph(n - k);
      int64_t down = 1;
      for (int t = 0; t < k; ++t) down *= s.branching();
      for (int64_t i = 0; i < g.size(); ++i) {
        std::vector<int64_t> ball = g.gamma(m_star + k, i);
        std::vector<int64_t> target = gk.gamma(m_star, i / down);
        for (int64_t v : ball) {
          if (!std::binary_search(target.begin(), target.end(), v / down)) {
            rep.ok = false;
            rep.first_violation = ProjectionStabilityViolation{g.word(i), k};
            return rep;
          }
        }
      }
    }
  }
  return rep;
}

}  // namespace fractalp
