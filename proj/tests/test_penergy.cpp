#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "fractalp/penergy.hpp"
#include "fractalp/scheme.hpp"

using namespace fractalp;

namespace {

// Independent quadratic-minimization oracle: dense graph Laplacian from raw
// box adjacency, Dirichlet rows eliminated, solved with Eigen. No code shared
// with the IRLS path.
std::vector<double> dense_p2_solve(const SubdivisionScheme& s, int level,
                                   const std::vector<std::pair<int64_t, double>>& pins) {
  const LevelGraph& g = s.level_graph(level);
  int64_t n = g.size();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int64_t i = 0; i < n; ++i) {
    auto [xi, yi] = g.coords(i);
    for (int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto [xj, yj] = g.coords(j);
      bool adj = std::abs(xi - xj) <= 1 && std::abs(yi - yj) <= 1;
      if (s.mode() == AdjacencyMode::EdgeOnly)
        adj = std::abs(xi - xj) + std::abs(yi - yj) == 1;
      if (adj) {
        lap(i, j) -= 1.0;
        lap(i, i) += 1.0;
      }
    }
  }
  std::vector<char> fixed(n, 0);
  std::vector<double> val(n, 0.0);
  for (auto& [i, v] : pins) {
    fixed[i] = 1;
    val[i] = v;
  }
  std::vector<int64_t> free_ids;
  for (int64_t i = 0; i < n; ++i)
    if (!fixed[i]) free_ids.push_back(i);
  int64_t nf = static_cast<int64_t>(free_ids.size());
  Eigen::MatrixXd A(nf, nf);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nf);
  for (int64_t a = 0; a < nf; ++a) {
    for (int64_t c = 0; c < nf; ++c) A(a, c) = lap(free_ids[a], free_ids[c]);
    for (int64_t j = 0; j < n; ++j)
      if (fixed[j]) b(a) -= lap(free_ids[a], j) * val[j];
  }
  Eigen::VectorXd x = A.ldlt().solve(b);
  for (int64_t a = 0; a < nf; ++a) val[free_ids[a]] = x(a);
  return val;
}

double dense_energy(const SubdivisionScheme& s, int level,
                    const std::vector<double>& val, double p) {
  const LevelGraph& g = s.level_graph(level);
  double e = 0;
  for (int64_t i = 0; i < g.size(); ++i) {
    auto [xi, yi] = g.coords(i);
    for (int64_t j = i + 1; j < g.size(); ++j) {
      auto [xj, yj] = g.coords(j);
      bool adj = std::abs(xi - xj) <= 1 && std::abs(yi - yj) <= 1;
      if (s.mode() == AdjacencyMode::EdgeOnly)
        adj = std::abs(xi - xj) + std::abs(yi - yj) == 1;
      if (adj) e += std::pow(std::fabs(val[i] - val[j]), p);
    }
  }
  return e;
}

}  // namespace

TEST_CASE("p-energy of a ramp on the interval") {
  auto iv = SubdivisionScheme::builtin("interval2");
  const LevelGraph& g = iv.level_graph(3);
  std::vector<double> f(8);
  for (int i = 0; i < 8; ++i) f[i] = i / 7.0;
  for (double p : {1.5, 2.0, 3.0})
    CHECK(p_energy(g, f, p) ==
          doctest::Approx(7.0 * std::pow(1.0 / 7, p)).epsilon(1e-13));
  CHECK_THROWS_AS(p_energy(g, std::vector<double>(5, 0.0), 2.0), UsageError);
  CHECK_THROWS_AS(p_energy(g, f, 0.5), UsageError);
}

TEST_CASE("p-energy is translation invariant and p-homogeneous") {
  auto sc = SubdivisionScheme::builtin("sierpinski-carpet");
  const LevelGraph& g = sc.level_graph(2);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> f(g.size());
  for (double& v : f) v = u(rng);
  std::vector<double> shifted = f, scaled = f;
  for (double& v : shifted) v += 2.75;
  for (double& v : scaled) v *= -1.7;
  for (double p : {1.5, 2.0, 2.6}) {
    double base = p_energy(g, f, p);
    CHECK(p_energy(g, shifted, p) == doctest::Approx(base).epsilon(1e-11));
    CHECK(p_energy(g, scaled, p) ==
          doctest::Approx(std::pow(1.7, p) * base).epsilon(1e-12));
  }
}

TEST_CASE("subset energy counts only pairs inside the subset") {
  auto iv = SubdivisionScheme::builtin("interval2");
  const LevelGraph& g = iv.level_graph(3);
  std::vector<int64_t> evens = {0, 2, 4, 6};
  std::vector<double> vals = {5, -1, 2, 0};
  CHECK(p_energy_on(g, evens, vals, 2.0) == 0.0);  // no adjacent pairs
  std::vector<int64_t> block = {2, 3, 4};
  std::vector<double> bv = {1.0, 4.0, 9.0};
  CHECK(p_energy_on(g, block, bv, 2.0) == doctest::Approx(9.0 + 25.0));
  CHECK_THROWS_AS(p_energy_on(g, std::vector<int64_t>{3, 1},
                              std::vector<double>{0, 0}, 2.0),
                  UsageError);
}

TEST_CASE("sparse energy equals the dense energy on the same values") {
  auto sc = SubdivisionScheme::builtin("sierpinski-carpet");
  const LevelGraph& g = sc.level_graph(2);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  SparseCellFunction f;
  f.level = 2;
  std::vector<double> dense(g.size(), 0.0);
  for (int64_t i = 0; i < g.size(); i += 3) {  // sparse support
    double v = u(rng);
    f.index.push_back(i);
    f.value.push_back(v);
    dense[i] = v;
  }
  for (double p : {1.5, 2.0, 3.0})
    CHECK(p_energy(g, f, p) == doctest::Approx(p_energy(g, dense, p)).epsilon(1e-13));
}

TEST_CASE("pins validate, merge, and answer point queries") {
  FixedAssignment pins;
  pins.pin_range(0, 4, 1.0);
  pins.pin_range(4, 6, 1.0);  // merges with the previous range
  pins.pin_range(10, 12, 0.0);
  pins.normalize();
  CHECK(pins.ranges().size() == 2);
  CHECK(pins.pinned_count() == 8);
  CHECK(pins.value_of(3) == 1.0);
  CHECK(pins.value_of(5) == 1.0);
  CHECK(!pins.value_of(7).has_value());
  CHECK(pins.value_of(11) == 0.0);
  CHECK(pins.min_value() == 0.0);
  CHECK(pins.max_value() == 1.0);

  FixedAssignment bad;
  bad.pin_range(0, 5, 1.0);
  bad.pin_range(3, 8, 0.0);
  CHECK_THROWS_AS(bad.normalize(), UsageError);
  CHECK_THROWS_AS(bad.pin_range(5, 5, 1.0), UsageError);

  auto iv = SubdivisionScheme::builtin("interval2");
  FixedAssignment desc;
  desc.pin_descendants(iv, CellWord::parse("1"), 3, 2.0);
  desc.normalize();
  CHECK(desc.ranges().size() == 1);
  CHECK(desc.ranges()[0].lo == 4);
  CHECK(desc.ranges()[0].hi == 8);
}

TEST_CASE("problem extraction on a 4-cell path") {
  auto iv = SubdivisionScheme::builtin("interval2");
  const LevelGraph& g = iv.level_graph(2);
  FixedAssignment pins;
  pins.pin_index(0, 1.0);
  pins.pin_index(3, 0.0);
  pins.normalize();
  auto ex = extract_problem(g, pins);
  CHECK(ex.n_free == 2);
  CHECK(ex.free_index(0) == 1);
  CHECK(ex.free_index(1) == 2);
  CHECK(ex.rank_of(2) == 1);
  CHECK(ex.rank_of(3) == -1);
  CHECK(ex.ff_slot.size() == 2);  // the 1-2 edge, both orientations
  CHECK(ex.fb_value.size() == 2);
  CHECK(ex.n_components == 1);
  CHECK(ex.component_grounded[0] == 1);
}

TEST_CASE("path conductance matches the closed form E^{1-p}") {
  auto iv = SubdivisionScheme::builtin("interval2");
  for (int level : {3, 4}) {
    const LevelGraph& g = iv.level_graph(level);
    int64_t n = g.size();
    std::vector<IndexRange> ones = {{0, 1}}, zeros = {{n - 1, n}};
    for (double p : {1.5, 2.0, 3.0}) {
      auto res = effective_conductance(g, ones, zeros, p);
      CHECK(res.stats.converged);
      CHECK(res.value ==
            doctest::Approx(std::pow(double(n - 1), 1.0 - p)).epsilon(1e-9));
      // linear minimizer
      CHECK(res.potential.at(1) == doctest::Approx(1.0 - 1.0 / double(n - 1)).epsilon(1e-7));
    }
  }
}

TEST_CASE("p=2 solves agree with the dense quadratic oracle") {
  auto sc = SubdivisionScheme::builtin("sierpinski-carpet");
  const LevelGraph& g = sc.level_graph(2);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int64_t> pick(0, g.size() - 1);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<std::pair<int64_t, double>> pinlist;
    std::vector<char> used(g.size(), 0);
    for (int k = 0; k < 5; ++k) {
      int64_t i = pick(rng);
      if (used[i]) continue;
      used[i] = 1;
      pinlist.push_back({i, u(rng)});
    }
    FixedAssignment pins;
    for (auto& [i, v] : pinlist) pins.pin_index(i, v);
    pins.normalize();
    auto sol = solve_dirichlet(g, pins, 2.0);
    CHECK(sol.stats.converged);
    auto oracle = dense_p2_solve(sc, 2, pinlist);
    for (int64_t i = 0; i < g.size(); ++i)
      CHECK(sol.f.at(i) == doctest::Approx(oracle[i]).epsilon(5e-8));
    CHECK(sol.energy ==
          doctest::Approx(dense_energy(sc, 2, oracle, 2.0)).epsilon(1e-9));
  }
}

TEST_CASE("minimizers obey the maximum principle") {
  auto sq2 = SubdivisionScheme::builtin("square2");
  const LevelGraph& g = sq2.level_graph(3);
  FixedAssignment pins;
  pins.pin_index(0, 0.2);
  pins.pin_index(g.size() - 1, 0.9);
  pins.pin_index(g.size() / 2, 0.5);
  pins.normalize();
  for (double p : {1.5, 3.0}) {
    auto sol = solve_dirichlet(g, pins, p);
    CHECK(sol.stats.converged);
    for (double v : sol.f.value) {
      CHECK(v >= 0.2 - 1e-9);
      CHECK(v <= 0.9 + 1e-9);
    }
  }
}

TEST_CASE("energy scales like |c|^p in the boundary data") {
  auto iv = SubdivisionScheme::builtin("interval2");
  const LevelGraph& g = iv.level_graph(4);
  std::vector<IndexRange> ones = {{0, 2}}, zeros = {{12, 16}};
  double base = effective_conductance(g, ones, zeros, 1.5).value;
  FixedAssignment pins;
  pins.pin_range(0, 2, 3.0);
  pins.pin_range(12, 16, 0.0);
  pins.normalize();
  auto sol = solve_dirichlet(g, pins, 1.5);
  CHECK(sol.energy == doctest::Approx(std::pow(3.0, 1.5) * base).epsilon(1e-8));
}

TEST_CASE("ungrounded free cells sit at zero with zero energy") {
  // diagonal two-cell pattern in edge-only mode: no edges at all at level 1
  auto s = SubdivisionScheme::parse_pattern("L=2 mode=edge\n10\n01\n", "diag");
  const LevelGraph& g = s.level_graph(1);
  FixedAssignment pins;
  pins.pin_index(0, 1.0);
  pins.normalize();
  auto sol = solve_dirichlet(g, pins, 1.5);
  CHECK(sol.stats.converged);
  CHECK(sol.f.at(0) == 1.0);
  CHECK(sol.f.at(1) == 0.0);
  CHECK(sol.energy == 0.0);
}

TEST_CASE("degenerate inputs") {
  auto iv = SubdivisionScheme::builtin("interval2");
  const LevelGraph& g = iv.level_graph(2);
  // all pins equal: constant minimizer, zero energy
  FixedAssignment pins;
  pins.pin_index(0, 3.0);
  pins.pin_index(3, 3.0);
  pins.normalize();
  auto sol = solve_dirichlet(g, pins, 1.5);
  CHECK(sol.stats.converged);
  CHECK(sol.energy == 0.0);
  CHECK(sol.f.at(1) == 3.0);
  // no pins at all
  auto empty = solve_dirichlet(g, FixedAssignment{}, 2.0);
  CHECK(empty.energy == 0.0);
  // p must exceed 1
  CHECK_THROWS_AS(solve_dirichlet(g, pins, 1.0), UsageError);
}

TEST_CASE("ring conductance on the interval matches 2(2^m+1)^{1-p}") {
  auto iv = SubdivisionScheme::builtin("interval2");
  CellWord w = CellWord::parse("0,1,1");  // interior cell 3 of 8
  for (int m = 1; m <= 3; ++m)
    for (double p : {1.5, 2.0, 3.0}) {
      auto res = ring_conductance(iv, w, m, p);
      CHECK(res.stats.converged);
      double expect = 2.0 * std::pow(double((1 << m) + 1), 1.0 - p);
      CHECK(res.value == doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("ring conductance on the carpet matches a direct p=2 solve") {
  auto sc = SubdivisionScheme::builtin("sierpinski-carpet");
  const LevelGraph& g1 = sc.level_graph(1);
  CellWord w = g1.word(g1.index_of_coords(0, 1));
  auto res = ring_conductance(sc, w, 1, 2.0);
  CHECK(res.stats.converged);
  // oracle: level-2 dense solve with the same pins
  std::vector<std::pair<int64_t, double>> pinlist;
  const LevelGraph& g2 = sc.level_graph(2);
  int64_t wi = g1.index_of(w);
  auto ball = g1.gamma(1, wi);
  for (int64_t i = 0; i < g2.size(); ++i) {
    int64_t parent = i / 8;
    if (parent == wi)
      pinlist.push_back({i, 1.0});
    else if (!std::binary_search(ball.begin(), ball.end(), parent))
      pinlist.push_back({i, 0.0});
  }
  auto oracle = dense_p2_solve(sc, 2, pinlist);
  CHECK(res.value == doctest::Approx(dense_energy(sc, 2, oracle, 2.0)).epsilon(1e-8));
}

TEST_CASE("warm starts reproduce the cold solution") {
  auto sq2 = SubdivisionScheme::builtin("square2");
  const LevelGraph& g = sq2.level_graph(3);
  FixedAssignment pins;
  pins.pin_range(0, 4, 1.0);
  pins.pin_range(60, 64, 0.0);
  pins.normalize();
  auto cold = solve_dirichlet(g, pins, 1.5);
  auto warm = solve_dirichlet(g, pins, 1.5, SolverOptions{}, &cold.f);
  CHECK(warm.stats.converged);
  CHECK(warm.energy == doctest::Approx(cold.energy).epsilon(1e-10));
  CHECK(warm.stats.pcg_iterations <= cold.stats.pcg_iterations);
}
