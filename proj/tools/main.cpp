#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fractalp/cli.hpp"
#include "fractalp/scheme.hpp"

namespace cli = fractalp::cli;

int main(int argc, char** argv) {
  CLI::App app{"discrete p-energy analysis on self-similar partitions"};
  app.require_subcommand(1);

  cli::GlobalOptions g;
  app.add_option("--scheme", g.scheme, "builtin scheme name or pattern file");
  app.add_option("--depth", g.depth, "certification / bench depth");
  app.add_option("--seed", g.seed, "seed for the multi-start ascents");
  app.add_option("--jobs", g.jobs, "worker pool size for independent solves");
  app.add_option("--cache-dir", g.cache_dir, "result cache directory");
  app.add_option("--out", g.out_dir, "output directory for data files");
  app.add_option("--weights", g.weights,
                 "self-similar measure weights (default uniform)")
      ->delimiter(',');

  cli::CheckOptions check;
  auto* c_check = app.add_subcommand("check", "structural certificates");
  c_check->fallthrough();
  c_check->add_option("--kmax", check.k_max, "stability iteration depth");

  cli::ConductanceOptions cond;
  auto* c_cond = app.add_subcommand("conductance", "ring p-conductance");
  c_cond->fallthrough();
  c_cond->add_option("--w", cond.w, "cell word, comma-separated digits");
  c_cond->add_option("--m", cond.m, "refinement depth");
  c_cond->add_option("--p", cond.p, "energy exponent");
  c_cond->add_option("--ball", cond.ball_radius, "ring radius");

  cli::DisparityOptions disp;
  auto* c_disp = app.add_subcommand("disparity", "neighbor disparity constants");
  c_disp->fallthrough();
  c_disp->add_option("--p", disp.p, "energy exponent");
  c_disp->add_option("--m", disp.m, "refinement depth");
  c_disp->add_option("--level", disp.level, "coarse level");
  c_disp->add_option("--cells", disp.cells, "explicit patch cell indices")
      ->delimiter(',');
  c_disp->add_option("--restarts", disp.restarts, "ascent restarts");

  cli::SigmaScanOptions scan;
  auto* c_scan = app.add_subcommand("sigma-scan", "scaling-exponent fits");
  c_scan->fallthrough();
  c_scan->add_option("--p-grid", scan.p_grid, "exponents to scan")
      ->delimiter(',');
  c_scan->add_option("--m-lo", scan.m_lo, "first depth");
  c_scan->add_option("--m-hi", scan.m_hi, "last depth");
  c_scan->add_option("--source", scan.source, "conductance|disparity|both");
  c_scan->add_option("--n", scan.n, "disparity scan level");
  c_scan->add_option("--ball", scan.ball_radius, "ring radius");

  cli::DimArOptions dimar;
  auto* c_dimar =
      app.add_subcommand("dimar", "conformal-dimension crossing estimate");
  c_dimar->fallthrough();
  c_dimar->add_option("--p-lo", dimar.p_lo, "lower bracket");
  c_dimar->add_option("--p-hi", dimar.p_hi, "upper bracket");
  c_dimar->add_option("--tol-p", dimar.tol_p, "bracket width target");
  c_dimar->add_option("--m-lo", dimar.m_lo, "first depth");
  c_dimar->add_option("--m-hi", dimar.m_hi, "last depth");
  c_dimar->add_option("--ball", dimar.ball_radius, "ring radius");

  cli::ConstructOptions cons;
  auto* c_cons =
      app.add_subcommand("construct", "unbounded-function cutoff hierarchy");
  c_cons->fallthrough();
  c_cons->add_option("--p", cons.p, "energy exponent");
  c_cons->add_option("--sigma", cons.sigma, "scaling base, or 'fit'");
  c_cons->add_option("--kmax", cons.k_max, "number of nested rings");
  c_cons->add_option("--omega", cons.omega, "target address digits");
  c_cons->add_option("--cutoff", cons.cutoff, "min|max cutoff construction");
  c_cons->add_option("--mstar", cons.m_star, "projection radius override");
  c_cons->add_option("--fit-m-lo", cons.fit_m_lo, "sigma fit first depth");
  c_cons->add_option("--fit-m-hi", cons.fit_m_hi, "sigma fit last depth");

  cli::BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "timing of representative solves");
  c_bench->fallthrough();
  c_bench->add_option("--p", bench.p, "energy exponent");

  auto* c_cache = app.add_subcommand("cache", "result cache maintenance");
  c_cache->fallthrough();
  auto* c_compact = c_cache->add_subcommand("compact", "drop stale records");
  c_cache->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_check->parsed()) return cli::cmd_check(g, check, std::cout);
    if (c_cond->parsed()) return cli::cmd_conductance(g, cond, std::cout);
    if (c_disp->parsed()) return cli::cmd_disparity(g, disp, std::cout);
    if (c_scan->parsed()) return cli::cmd_sigma_scan(g, scan, std::cout);
    if (c_dimar->parsed()) return cli::cmd_dimar(g, dimar, std::cout);
    if (c_cons->parsed()) return cli::cmd_construct(g, cons, std::cout);
    if (c_bench->parsed()) return cli::cmd_bench(g, bench, std::cout);
    if (c_cache->parsed() && c_compact->parsed())
      return cli::cmd_cache_compact(g, std::cout);
  } catch (const fractalp::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const fractalp::AnalyticError& e) {
    std::cerr << "analytic failure: " << e.what() << "\n";
    return 1;
  } catch (const fractalp::SolveError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  }
  std::cerr << "no subcommand\n";
  return 2;
}
