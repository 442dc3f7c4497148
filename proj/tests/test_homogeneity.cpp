#include <cmath>
#include <vector>

#include "doctest.h"
#include "fractalp/homogeneity.hpp"
#include "fractalp/level_graph.hpp"

using namespace fractalp;

TEST_CASE("default sample cells cover the degree spectrum") {
  auto iv = SubdivisionScheme::builtin("interval2");
  auto ws_iv = default_w_samples(iv);
  CHECK(ws_iv.size() == 2);  // boundary (degree 1) and interior (degree 2)

  auto sq = SubdivisionScheme::builtin("square2");
  auto ws_sq = default_w_samples(sq);
  CHECK(ws_sq.size() == 3);  // corner, interior, and an edge cell
  for (auto& w : ws_sq) CHECK(w.level() == 2);
}

TEST_CASE("interval conductance fit recovers 2^(p-1) within 2%") {
  auto iv = SubdivisionScheme::builtin("interval2");
  auto ws = default_w_samples(iv);
  for (double p : {1.5, 2.0, 3.0}) {
    auto fit = fit_sigma_conductance(iv, p, 2, 6, ws);
    double expect = std::pow(2.0, p - 1.0);
    INFO("p = " << p << " sigma_hat = " << fit.sigma_hat);
    CHECK(std::abs(fit.sigma_hat - expect) <= 0.02 * expect);
    CHECK(fit.samples.size() == 5);
    CHECK(fit.ratio_estimates.size() == 4);
    CHECK(fit.method == "aitken");
    CHECK(fit.log_slope < 0.0);  // conductance decays with depth
    CHECK(fit.residual < 0.2);
  }
}

TEST_CASE("synthetic ring evaluators exercise the extrapolation guards") {
  auto iv = SubdivisionScheme::builtin("interval2");
  std::vector<CellWord> ws = {CellWord::parse("0,1")};

  auto exact = [](const CellWord&, int m, double) { return std::pow(2.0, -m); };
  auto f1 = fit_sigma_conductance(iv, 2.0, 1, 5, ws, 1, {}, exact);
  CHECK(f1.method == "ratio");  // consecutive ratios already constant
  CHECK(f1.sigma_hat == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f1.residual < 1e-12);

  auto corrected = [](const CellWord&, int m, double) {
    return std::pow(2.0, -m) * (1.0 + std::pow(0.5, m));
  };
  auto f2 = fit_sigma_conductance(iv, 2.0, 2, 6, ws, 1, {}, corrected);
  CHECK(f2.method == "aitken");
  CHECK(std::abs(f2.sigma_hat - 2.0) < 0.01);
  // extrapolation beats the raw last ratio
  CHECK(std::abs(f2.sigma_hat - 2.0) < std::abs(f2.ratio_estimates.back() - 2.0));

  auto vanishing = [](const CellWord&, int, double) { return 0.0; };
  CHECK_THROWS_AS(fit_sigma_conductance(iv, 2.0, 1, 3, ws, 1, {}, vanishing),
                  AnalyticError);
  CHECK_THROWS_AS(fit_sigma_conductance(iv, 2.0, 2, 2, ws), UsageError);
}

TEST_CASE("disparity fit on the interval also lands on 2 at p=2") {
  auto iv = SubdivisionScheme::builtin("interval2");
  auto mu = SelfSimilarMeasure::uniform(iv);
  auto fit = fit_sigma_disparity(iv, mu, 2.0, 1, 4);
  CHECK(fit.source == ScanSource::Disparity);
  CHECK(fit.samples[0].second == doctest::Approx(1.5).epsilon(1e-7));
  CHECK(fit.samples[3].second == doctest::Approx(10.6875).epsilon(1e-7));
  CHECK(std::abs(fit.sigma_hat - 2.0) < 0.005);
  CHECK(fit.log_slope > 0.0);  // disparity grows with depth
}

TEST_CASE("homogeneity products on the interval look bounded") {
  auto iv = SubdivisionScheme::builtin("interval2");
  auto mu = SelfSimilarMeasure::uniform(iv);
  auto ws = default_w_samples(iv);
  auto rep = check_homogeneity(iv, mu, 2.0, 1, 4, 1, ws);
  REQUIRE(rep.rows.size() == 4);
  // disparity side: frozen star maxima; conductance side: (2^m+1)^{1-p}
  const double v[] = {1.5, 2.75, 5.375, 10.6875};
  for (int i = 0; i < 4; ++i) {
    double c = 1.0 / ((1 << (i + 1)) + 1);
    CHECK(rep.rows[i].disparity == doctest::Approx(v[i]).epsilon(1e-7));
    CHECK(rep.rows[i].conductance == doctest::Approx(c).epsilon(1e-7));
    CHECK(rep.rows[i].product ==
          doctest::Approx(v[i] * c).epsilon(1e-6));
  }
  CHECK(rep.bounded_looking);
  CHECK(!rep.note.empty());
}

TEST_CASE("dimension crossing by bisection on a synthetic scaling base") {
  auto res = estimate_dim_ar(1.2, 3.0, 1e-4, [](double p) { return std::exp(p - 2.0); });
  CHECK(std::abs(res.p_star - 2.0) < 1e-4);
  CHECK(res.monotone);
  CHECK(res.evaluations.size() >= 10);
  CHECK(res.p_hi - res.p_lo <= 1e-4);

  CHECK_THROWS_AS(estimate_dim_ar(1.2, 1.5, 0.01, [](double) { return 0.5; }),
                  AnalyticError);
  CHECK_THROWS_AS(estimate_dim_ar(2.5, 3.0, 0.01, [](double) { return 1.5; }),
                  AnalyticError);
  CHECK_THROWS_AS(estimate_dim_ar(0.9, 2.0, 0.01, [](double) { return 1.0; }),
                  UsageError);
}

TEST_CASE("square lattice crossing sits near p = 2") {
  auto sq = SubdivisionScheme::builtin("square2");
  auto ws = default_w_samples(sq);
  auto fit = fit_sigma_conductance(sq, 2.0, 2, 4, ws);
  CHECK(std::abs(fit.sigma_hat - 1.0) < 0.08);
}

TEST_CASE("scaled energies: ramp stays bounded, step doubles") {
  auto iv = SubdivisionScheme::builtin("interval2");
  auto mu = SelfSimilarMeasure::uniform(iv);
  const int N = 5;
  const int64_t sz = iv.level_size(N);

  CellFunction ramp{N, {}};
  for (int64_t i = 0; i < sz; ++i)
    ramp.values.push_back(static_cast<double>(i) / static_cast<double>(sz - 1));
  auto seq = wp_scaled_energies(mu, ramp, 2.0, 2.0);
  REQUIRE(static_cast<int>(seq.size()) == N);
  for (int m = 1; m <= N; ++m) {
    // block averages of a linear ramp: (2^m - 1) gaps of 2^(N-m)/(2^N - 1)
    double gap = std::pow(2.0, N - m) / static_cast<double>(sz - 1);
    double expect = std::pow(2.0, m) * ((1 << m) - 1) * gap * gap;
    CHECK(seq[static_cast<size_t>(m - 1)].second ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(seq[static_cast<size_t>(m - 1)].second < 1.2);
  }

  CellFunction step{N, std::vector<double>(static_cast<size_t>(sz), 0.0)};
  for (int64_t i = sz / 2; i < sz; ++i) step.values[static_cast<size_t>(i)] = 1.0;
  auto sseq = wp_scaled_energies(mu, step, 2.0, 2.0);
  for (int m = 1; m <= N; ++m)
    CHECK(sseq[static_cast<size_t>(m - 1)].second ==
          doctest::Approx(std::pow(2.0, m)).epsilon(1e-12));

  CHECK_THROWS_AS(wp_scaled_energies(mu, ramp, 0.0, 2.0), UsageError);
  CHECK_THROWS_AS(wp_scaled_energies(mu, ramp, 2.0, 0.5), UsageError);
}
