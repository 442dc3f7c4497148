#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fractalp/cli.hpp"
#include "fractalp/penergy.hpp"
#include "json.hpp"

using namespace fractalp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fractalp_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("scheme and measure loading") {
  auto s = cli::load_scheme("interval2");
  CHECK(s.name() == "interval2");
  TempDir tmp;
  fs::path file = tmp.path / "two_cells.txt";
  {
    std::ofstream out(file);
    out << "L=3 mode=closure\n111\n000\n000\n";
  }
  auto sf = cli::load_scheme(file.string());
  CHECK(sf.branching() == 3);
  CHECK_THROWS_AS(cli::load_scheme("no-such-builtin"), UsageError);

  auto mu = cli::load_measure(s, {});
  CHECK(mu.is_uniform());
  auto mw = cli::load_measure(s, {0.25, 0.75});
  CHECK(mw.weight(1) == doctest::Approx(0.75));
}

TEST_CASE("result cache: store, last-wins lookup, compaction") {
  TempDir tmp;
  auto s = cli::load_scheme("interval2");
  cli::ResultCache cache((tmp.path / "cache").string());
  CHECK(cache.enabled());
  std::string h = cli::ResultCache::input_hash(s, "conductance", "m=2;p=2");
  CHECK_FALSE(cache.lookup(h).has_value());
  cache.store(h, "conductance", R"({"value":1.0})");
  cache.store(h, "conductance", R"({"value":2.0})");
  auto hit = cache.lookup(h);
  REQUIRE(hit.has_value());
  CHECK(json::parse(*hit)["value"] == 2.0);

  std::string h2 = cli::ResultCache::input_hash(s, "conductance", "m=3;p=2");
  cache.store(h2, "conductance", R"({"value":3.0})");
  auto [before, after] = cache.compact();
  CHECK(before == 3);
  CHECK(after == 2);
  CHECK(json::parse(*cache.lookup(h))["value"] == 2.0);
  CHECK(json::parse(*cache.lookup(h2))["value"] == 3.0);

  cli::ResultCache disabled("");
  CHECK_FALSE(disabled.enabled());
  CHECK_THROWS_AS(disabled.compact(), UsageError);
}

TEST_CASE("check command passes on the builtins") {
  for (const char* name :
       {"interval2", "square2", "square3", "sierpinski-carpet"}) {
    cli::GlobalOptions g;
    g.scheme = name;
    g.depth = 3;
    std::ostringstream out;
    CHECK(cli::cmd_check(g, {}, out) == 0);
    CHECK(out.str().find("all certificates pass") != std::string::npos);
  }
  cli::GlobalOptions bad;
  bad.scheme = "interval2";
  bad.depth = 0;
  std::ostringstream out;
  CHECK_THROWS_AS(cli::cmd_check(bad, {}, out), UsageError);
}

TEST_CASE("conductance command: fresh vs cached values agree") {
  TempDir tmp;
  cli::GlobalOptions g;
  g.scheme = "interval2";
  g.cache_dir = (tmp.path / "cache").string();
  cli::ConductanceOptions o;
  o.w = "0,0";
  o.m = 3;
  o.p = 2.0;

  std::ostringstream out1;
  CHECK(cli::cmd_conductance(g, o, out1) == 0);
  json j1 = json::parse(out1.str());
  CHECK(j1["cached"] == false);
  CHECK(j1["n"] == 2);
  CHECK(j1["value"].get<double>() ==
        doctest::Approx(1.0 / 9.0).epsilon(1e-9));  // (2^3 + 1)^{1-p}

  std::ostringstream out2;
  CHECK(cli::cmd_conductance(g, o, out2) == 0);
  json j2 = json::parse(out2.str());
  CHECK(j2["cached"] == true);
  // cache correctness: cached and fresh solves agree
  auto fresh = ring_conductance(cli::load_scheme("interval2"),
                                CellWord::parse("0,0"), 3, 2.0);
  CHECK(std::fabs(j2["value"].get<double>() - fresh.value) <= 1e-12);
  CHECK(j1["hash"] == j2["hash"]);
}

TEST_CASE("disparity command scan and explicit patch") {
  cli::GlobalOptions g;
  g.scheme = "interval2";
  cli::DisparityOptions o;
  o.level = 1;
  o.m = 1;
  o.p = 2.0;
  std::ostringstream out;
  CHECK(cli::cmd_disparity(g, o, out) == 0);
  json j = json::parse(out.str());
  CHECK(j["value"].get<double>() == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(j["evaluated"] == 2);

  o.cells = {0, 1};
  std::ostringstream out2;
  CHECK(cli::cmd_disparity(g, o, out2) == 0);
  json j2 = json::parse(out2.str());
  CHECK(j2["value"].get<double>() == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(j2["certified_lower"] == true);
}

TEST_CASE("sigma-scan: deterministic CSV, cache reuse, validation") {
  TempDir tmp;
  cli::GlobalOptions g;
  g.scheme = "interval2";
  g.seed = 7;
  g.cache_dir = (tmp.path / "cache").string();
  cli::SigmaScanOptions o;
  o.p_grid = {2.0};
  o.m_lo = 2;
  o.m_hi = 4;

  g.out_dir = (tmp.path / "s1").string();
  std::ostringstream sink1;
  CHECK(cli::cmd_sigma_scan(g, o, sink1) == 0);
  std::string csv1 = slurp(tmp.path / "s1" / "sigma_scan.csv");

  g.out_dir = (tmp.path / "s2").string();
  std::ostringstream sink2;
  CHECK(cli::cmd_sigma_scan(g, o, sink2) == 0);
  std::string csv2 = slurp(tmp.path / "s2" / "sigma_scan.csv");
  CHECK(csv1 == csv2);  // identical config + seed: byte-identical output
  CHECK(csv1.find("# scheme=interval2") == 0);
  CHECK(csv1.find("conductance") != std::string::npos);
  CHECK(csv1.find("disparity") != std::string::npos);

  json summary =
      json::parse(slurp(tmp.path / "s1" / "sigma_scan_summary.json"));
  REQUIRE(summary["entries"].size() == 1);
  auto& e = summary["entries"][0];
  CHECK(e["conductance"]["sigma_hat"].get<double>() ==
        doctest::Approx(2.0).epsilon(0.06));
  CHECK(e["disparity"]["sigma_hat"].get<double>() ==
        doctest::Approx(2.0).epsilon(0.06));
  CHECK(e["homogeneity_products"].size() == 3);

  cli::SigmaScanOptions bad = o;
  bad.p_grid = {};
  std::ostringstream sink3;
  CHECK_THROWS_AS(cli::cmd_sigma_scan(g, bad, sink3), UsageError);
  bad = o;
  bad.m_hi = bad.m_lo;
  CHECK_THROWS_AS(cli::cmd_sigma_scan(g, bad, sink3), UsageError);
  bad = o;
  bad.source = "nonsense";
  CHECK_THROWS_AS(cli::cmd_sigma_scan(g, bad, sink3), UsageError);
}

TEST_CASE("dimar command validation and crossing") {
  cli::GlobalOptions g;
  g.scheme = "square2";
  cli::DimArOptions o;
  o.p_lo = 1.5;
  o.p_hi = 3.0;
  o.tol_p = 0.25;
  o.m_lo = 2;
  o.m_hi = 4;
  std::ostringstream out;
  CHECK(cli::cmd_dimar(g, o, out) == 0);
  json j = json::parse(out.str());
  double p_star = j["p_star"].get<double>();
  CHECK(p_star > 1.7);
  CHECK(p_star < 2.3);
  CHECK(j["bracket_width"].get<double>() <= 0.25 + 1e-12);

  cli::DimArOptions bad = o;
  bad.tol_p = 0.0;
  CHECK_THROWS_AS(cli::cmd_dimar(g, bad, out), UsageError);
  bad = o;
  bad.p_lo = 0.9;
  CHECK_THROWS_AS(cli::cmd_dimar(g, bad, out), UsageError);

  // sigma > 1 on the whole range: crossing outside
  cli::GlobalOptions gi;
  gi.scheme = "interval2";
  cli::DimArOptions no_bracket = o;
  no_bracket.p_lo = 1.5;
  no_bracket.p_hi = 2.0;
  std::ostringstream out2;
  CHECK_THROWS_AS(cli::cmd_dimar(gi, no_bracket, out2), AnalyticError);
}

TEST_CASE("construct command emits report and plot data") {
  TempDir tmp;
  cli::GlobalOptions g;
  g.scheme = "interval2";
  g.out_dir = (tmp.path / "cons").string();
  cli::ConstructOptions o;
  o.p = 2.0;
  o.sigma = "1.0";
  o.k_max = 2;
  std::ostringstream out;
  CHECK(cli::cmd_construct(g, o, out) == 0);

  json rep = json::parse(slurp(tmp.path / "cons" / "construct_report.json"));
  CHECK(rep["scaled_bounded"] == true);
  CHECK(rep["boundedness_label"] == "holds at every depth");
  CHECK(rep["levels"].size() == 3);

  std::string plateau = slurp(tmp.path / "cons" / "construct_plateau.csv");
  CHECK(plateau.find("2,1,1,1,1\n") != std::string::npos);
  CHECK(plateau.find("4,2,1.5,1.5,1\n") != std::string::npos);
  std::string energy = slurp(tmp.path / "cons" / "construct_energy.csv");
  CHECK(energy.find("n,m,scaled_energy\n") != std::string::npos);
  std::string lp = slurp(tmp.path / "cons" / "construct_lpnorm.csv");
  CHECK(lp.find("lp_bound=") != std::string::npos);

  cli::ConstructOptions bad = o;
  bad.omega = "9";
  CHECK_THROWS_AS(cli::cmd_construct(g, bad, out), UsageError);
  bad = o;
  bad.cutoff = "median";
  CHECK_THROWS_AS(cli::cmd_construct(g, bad, out), UsageError);
  bad = o;
  bad.sigma = "zero";
  CHECK_THROWS_AS(cli::cmd_construct(g, bad, out), UsageError);
}

TEST_CASE("bench command reports timings") {
  cli::GlobalOptions g;
  g.scheme = "interval2";
  g.depth = 4;
  std::ostringstream out;
  CHECK(cli::cmd_bench(g, {}, out) == 0);
  json j = json::parse(out.str());
  CHECK(j["graph_vertices"] == 16);
  CHECK(j["solve_value"].get<double>() > 0.0);
}
