#include "fractalp/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "fractalp/certify.hpp"
#include "fractalp/construction.hpp"
#include "fractalp/disparity.hpp"
#include "fractalp/hashing.hpp"
#include "fractalp/homogeneity.hpp"
#include "fractalp/penergy.hpp"
#include "json.hpp"

namespace fractalp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SubdivisionScheme load_scheme(const std::string& name_or_path) {
  std::error_code ec;
  if (fs::is_regular_file(name_or_path, ec))
    return SubdivisionScheme::from_file(name_or_path);
  return SubdivisionScheme::builtin(name_or_path);
}

SelfSimilarMeasure load_measure(const SubdivisionScheme& s,
                                const std::vector<double>& weights) {
  if (weights.empty()) return SelfSimilarMeasure::uniform(s);
  return SelfSimilarMeasure::from_weights(s, weights);
}

namespace {

std::string iso_utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << content;
  if (!out.good()) throw UsageError("short write to " + path.string());
}

// First line of every emitted data file: scheme hash, depth, seed.
std::string provenance_line(const SubdivisionScheme& s, int depth,
                            uint64_t seed) {
  std::ostringstream os;
  os << "# scheme=" << s.name() << " fingerprint=" << s.fingerprint()
     << " depth=" << depth << " seed=" << seed;
  return os.str();
}

std::string weights_param(const SelfSimilarMeasure& mu) {
  if (mu.is_uniform()) return "uniform";
  std::string out;
  for (double w : mu.weights()) {
    out += g17(w);
    out += ',';
  }
  return out;
}

std::vector<uint8_t> parse_omega(const SubdivisionScheme& s,
                                 const std::string& text) {
  std::vector<uint8_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw UsageError("construct: bad omega digit '" + tok + "'");
    }
    if (used != tok.size() || v < 0 || v >= s.branching())
      throw UsageError("construct: bad omega digit '" + tok + "'");
    out.push_back(static_cast<uint8_t>(v));
  }
  if (out.empty()) throw UsageError("construct: empty omega");
  return out;
}

// Scaling fits tolerate a looser first-order residual: the conductance value
// error is quadratic in it, and p pushed toward 1 makes 1e-9 unreachable.
SolverOptions fit_solver_profile() {
  SolverOptions o;
  o.tol_kkt = 1e-6;
  return o;
}

void run_jobs(int jobs, int64_t count, const std::function<void(int64_t)>& body) {
  jobs = static_cast<int>(std::min<int64_t>(std::max(jobs, 1), count));
  if (jobs <= 1) {
    for (int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int64_t i; (i = next.fetch_add(1)) < count;) body(i);
    });
  for (auto& th : pool) th.join();
}

json fit_to_json(const ScalingFit& f) {
  json samples = json::array();
  for (auto [m, v] : f.samples) samples.push_back({{"m", m}, {"value", v}});
  return {{"sigma_hat", f.sigma_hat},     {"method", f.method},
          {"log_slope", f.log_slope},     {"residual", f.residual},
          {"ratio_estimates", f.ratio_estimates}, {"samples", samples}};
}

// Ring-conductance evaluator backed by the result cache; misses are solved
// and stored so identical inputs reuse solver outputs across runs. All cache
// traffic funnels through one mutex (single writer).
RingEval make_cached_ring_eval(const SubdivisionScheme& s, ResultCache* cache,
                               int ball_radius, const SolverOptions& opt,
                               std::mutex* io) {
  if (cache == nullptr || !cache->enabled()) return {};
  return [&s, cache, ball_radius, opt, io](const CellWord& w, int m, double p) {
    char params[192];
    std::snprintf(params, sizeof params, "w=%s;m=%d;p=%.17g;ball=%d",
                  w.str().c_str(), m, p, ball_radius);
    std::string hash = ResultCache::input_hash(s, "conductance", params);
    {
      std::lock_guard<std::mutex> lock(*io);
      if (auto hit = cache->lookup(hash))
        return json::parse(*hit).at("value").get<double>();
    }
    ConductanceResult r = ring_conductance(s, w, m, p, opt, ball_radius);
    json outputs = {{"scheme", s.name()},
                    {"p", p},
                    {"n", w.level()},
                    {"m", m},
                    {"sets_hash", fnv64_hex(w.str() + "|ball=" +
                                            std::to_string(ball_radius))},
                    {"value", r.value},
                    {"kkt", r.stats.kkt_residual},
                    {"iters", r.stats.irls_iterations}};
    {
      std::lock_guard<std::mutex> lock(*io);
      cache->store(hash, "conductance", outputs.dump());
    }
    return r.value;
  };
}

}  // namespace

// ---------------------------------------------------------------------------
// result cache

ResultCache::ResultCache(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty()) return;
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw UsageError("cache directory not writable: " + dir_);
}

std::string ResultCache::path() const {
  return (fs::path(dir_) / "results.jsonl").string();
}

std::string ResultCache::input_hash(const SubdivisionScheme& s,
                                    const std::string& subcommand,
                                    const std::string& params) {
  return fnv64_hex(s.pattern_text() + "\n" + subcommand + "\n" + params);
}

std::optional<std::string> ResultCache::lookup(const std::string& hash) const {
  if (!enabled()) return std::nullopt;
  std::ifstream in(path());
  if (!in) return std::nullopt;
  std::optional<std::string> found;  // last record for the hash wins
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded() || !rec.contains("hash")) continue;
    if (rec["hash"] == hash && rec.contains("outputs"))
      found = rec["outputs"].dump();
  }
  return found;
}

void ResultCache::store(const std::string& hash, const std::string& subcommand,
                        const std::string& outputs_json) {
  if (!enabled()) return;
  json rec = {{"hash", hash},
              {"subcommand", subcommand},
              {"outputs", json::parse(outputs_json)},
              {"timestamp", iso_utc_now()},
              {"version", kToolVersion}};
  std::ofstream out(path(), std::ios::app);
  if (!out) throw UsageError("cache not writable: " + path());
  out << rec.dump() << "\n";
}

std::pair<int64_t, int64_t> ResultCache::compact() {
  if (!enabled()) throw UsageError("cache compact requires a cache directory");
  std::ifstream in(path());
  int64_t before = 0;
  std::vector<std::string> order;           // hashes by last occurrence
  std::map<std::string, std::string> last;  // hash -> newest line
  std::string line;
  while (in && std::getline(in, line)) {
    if (line.empty()) continue;
    ++before;
    json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded() || !rec.contains("hash")) continue;
    std::string h = rec["hash"].get<std::string>();
    if (last.find(h) == last.end()) order.push_back(h);
    last[h] = line;
  }
  in.close();
  std::string content;
  for (const std::string& h : order) {
    content += last[h];
    content += '\n';
  }
  write_text_file(path(), content);
  return {before, static_cast<int64_t>(order.size())};
}

// ---------------------------------------------------------------------------
// check

int cmd_check(const GlobalOptions& g, const CheckOptions& o, std::ostream& out) {
  auto s = load_scheme(g.scheme);
  if (g.depth < 1 || g.depth > s.max_level())
    throw UsageError("check: depth out of range for this scheme");
  int failures = 0;
  char row[160];

  out << "certificate table for " << s.name() << " (fingerprint "
      << s.fingerprint() << ")\n";
  std::snprintf(row, sizeof row, "  %-38s %6s  %s\n", "certificate", "depth",
                "result");
  out << row;

  auto deg = certify_degree_bound(s, g.depth);
  std::snprintf(row, sizeof row, "  %-38s %6d  L* = %d\n", "degree bound",
                g.depth, deg.l_star);
  out << row;

  auto rad = certify_projection_radius(s, g.depth);
  std::snprintf(row, sizeof row, "  %-38s %6d  M* = %d\n", "projection radius",
                g.depth, rad.m_star);
  out << row;

  auto stab = verify_projection_stability(s, rad.m_star, o.k_max, g.depth);
  if (stab.ok) {
    std::snprintf(row, sizeof row, "  %-38s %6d  pass (k <= %d)\n",
                  "projection stability", g.depth, o.k_max);
  } else {
    ++failures;
    std::snprintf(row, sizeof row, "  %-38s %6d  FAIL (k <= %d)\n",
                  "projection stability", g.depth, o.k_max);
  }
  out << row;

  int cover_hi = std::min({3, g.depth, s.max_level() - 1});
  int n_t = 0;
  bool cover_ok = true;
  std::string cover_msg;
  try {
    for (int lvl = 1; lvl <= cover_hi; ++lvl) {
      std::vector<int64_t> cells(static_cast<size_t>(s.level_size(lvl)));
      std::iota(cells.begin(), cells.end(), 0);
      n_t = std::max(n_t, covering_of(s, lvl, cells).n_t);
    }
  } catch (const AnalyticError& e) {
    cover_ok = false;
    cover_msg = e.what();
  }
  if (cover_ok) {
    std::snprintf(row, sizeof row, "  %-38s %6d  N_T = %d, N_E = 1\n",
                  "star covering", cover_hi, n_t);
  } else {
    ++failures;
    std::snprintf(row, sizeof row, "  %-38s %6d  FAIL (%s)\n", "star covering",
                  cover_hi, cover_msg.c_str());
  }
  out << row;

  if (failures == 0) {
    out << "result: all certificates pass\n";
    return 0;
  }
  out << "result: " << failures << " certificate(s) failed\n";
  return 1;
}

// ---------------------------------------------------------------------------
// conductance

int cmd_conductance(const GlobalOptions& g, const ConductanceOptions& o,
                    std::ostream& out) {
  auto s = load_scheme(g.scheme);
  CellWord w = CellWord::parse(o.w);
  if (w.level() < 1) throw UsageError("conductance: need a non-root cell word");
  for (uint8_t sym : w.symbols())
    if (sym >= s.branching())
      throw UsageError("conductance: word symbol out of range");
  if (o.m < 1) throw UsageError("conductance: need m >= 1");
  if (w.level() + o.m > s.max_level())
    throw UsageError("conductance: level + m exceeds the scheme's depth limit");

  char params[192];
  std::snprintf(params, sizeof params, "w=%s;m=%d;p=%.17g;ball=%d",
                w.str().c_str(), o.m, o.p, o.ball_radius);
  std::string hash = ResultCache::input_hash(s, "conductance", params);
  ResultCache cache(g.cache_dir);

  json outputs;
  bool cached = false;
  if (auto hit = cache.lookup(hash)) {
    outputs = json::parse(*hit);
    cached = true;
  } else {
    ConductanceResult r = ring_conductance(s, w, o.m, o.p, {}, o.ball_radius);
    outputs = {{"scheme", s.name()},
               {"p", o.p},
               {"n", w.level()},
               {"m", o.m},
               {"sets_hash", fnv64_hex(w.str() + "|ball=" +
                                       std::to_string(o.ball_radius))},
               {"value", r.value},
               {"kkt", r.stats.kkt_residual},
               {"iters", r.stats.irls_iterations}};
    cache.store(hash, "conductance", outputs.dump());
  }
  outputs["fingerprint"] = s.fingerprint();
  outputs["cached"] = cached;
  outputs["hash"] = hash;
  out << outputs.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// disparity

int cmd_disparity(const GlobalOptions& g, const DisparityOptions& o,
                  std::ostream& out) {
  auto s = load_scheme(g.scheme);
  auto mu = load_measure(s, g.weights);
  AscentOptions aopt;
  aopt.restarts = o.restarts;
  aopt.seed = g.seed;

  std::string cells_param = "scan";
  if (!o.cells.empty()) {
    cells_param.clear();
    for (int64_t c : o.cells) cells_param += std::to_string(c) + ",";
  }
  char params[256];
  std::snprintf(params, sizeof params,
                "level=%d;m=%d;p=%.17g;cells=%s;restarts=%d;seed=%llu;mu=%s",
                o.level, o.m, o.p, cells_param.c_str(), o.restarts,
                static_cast<unsigned long long>(g.seed),
                weights_param(mu).c_str());
  std::string hash = ResultCache::input_hash(s, "disparity", params);
  ResultCache cache(g.cache_dir);

  json outputs;
  bool cached = false;
  if (auto hit = cache.lookup(hash)) {
    outputs = json::parse(*hit);
    cached = true;
  } else if (o.cells.empty()) {
    LevelDisparity ld = level_disparity(s, mu, o.level, o.m, o.p, aopt);
    outputs = {{"scheme", s.name()}, {"p", o.p},
               {"level", o.level},   {"m", o.m},
               {"value", ld.value},  {"argmax_center", ld.argmax_center},
               {"evaluated", ld.evaluated}, {"total", ld.total},
               {"restarts", o.restarts}};
    cache.store(hash, "disparity", outputs.dump());
  } else {
    DisparityEstimate est =
        neighbor_disparity(s, mu, o.cells, o.level, o.m, o.p, aopt);
    outputs = {{"scheme", s.name()}, {"p", o.p},
               {"level", o.level},   {"m", o.m},
               {"cells", o.cells},   {"value", est.value},
               {"restarts", est.restarts},
               {"certified_lower", est.certified_lower}};
    cache.store(hash, "disparity", outputs.dump());
  }
  outputs["fingerprint"] = s.fingerprint();
  outputs["cached"] = cached;
  outputs["seed"] = g.seed;
  out << outputs.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sigma-scan

int cmd_sigma_scan(const GlobalOptions& g, const SigmaScanOptions& o,
                   std::ostream& out) {
  auto s = load_scheme(g.scheme);
  auto mu = load_measure(s, g.weights);
  if (o.p_grid.empty()) throw UsageError("sigma-scan: empty p grid");
  for (double p : o.p_grid)
    if (!(p > 1.0)) throw UsageError("sigma-scan: p values must exceed 1");
  if (o.m_lo < 1 || o.m_hi < o.m_lo)
    throw UsageError("sigma-scan: empty m range");
  bool do_c = o.source == "both" || o.source == "conductance";
  bool do_d = o.source == "both" || o.source == "disparity";
  if (!do_c && !do_d)
    throw UsageError("sigma-scan: source must be conductance|disparity|both");
  if (o.m_hi < o.m_lo + 1)
    throw UsageError("sigma-scan: need at least two depths to fit");

  int sample_level = std::min(2, std::max(1, s.max_level() - o.m_hi));
  auto samples = default_w_samples(s, sample_level);
  if (sample_level + o.m_hi > s.max_level())
    throw UsageError("sigma-scan: m range exceeds the scheme's depth limit");

  ResultCache cache(g.cache_dir);
  std::mutex cache_mutex;
  RingEval eval = make_cached_ring_eval(s, &cache, o.ball_radius,
                                        fit_solver_profile(), &cache_mutex);

  struct Entry {
    double p = 0;
    std::optional<ScalingFit> cond, disp;
    std::string error;
  };
  std::vector<Entry> entries(o.p_grid.size());
  run_jobs(g.jobs, static_cast<int64_t>(o.p_grid.size()), [&](int64_t i) {
    Entry& e = entries[static_cast<size_t>(i)];
    e.p = o.p_grid[static_cast<size_t>(i)];
    try {
      if (do_c)
        e.cond = fit_sigma_conductance(s, e.p, o.m_lo, o.m_hi, samples,
                                       o.ball_radius, fit_solver_profile(), eval);
      if (do_d) {
        AscentOptions aopt;
        aopt.seed = g.seed;
        e.disp = fit_sigma_disparity(s, mu, e.p, o.m_lo, o.m_hi, o.n, aopt);
      }
    } catch (const AnalyticError& ex) {
      e.error = ex.what();
    } catch (const SolveError& ex) {
      e.error = ex.what();
    }
  });

  // CSV: one row per (p, source, m) sample, fit columns repeated per row.
  std::string csv = provenance_line(s, g.depth, g.seed) + "\n";
  csv += "scheme,p,m,source,value,sigma_hat,residual,seed\n";
  auto add_rows = [&](double p, const ScalingFit& f, const char* source) {
    for (auto [m, v] : f.samples) {
      csv += s.name();
      csv += ',' + g17(p) + ',' + std::to_string(m) + ',' + source;
      csv += ',' + g17(v) + ',' + g17(f.sigma_hat) + ',' + g17(f.residual);
      csv += ',' + std::to_string(g.seed) + '\n';
    }
  };
  json summary_entries = json::array();
  int errors = 0;
  for (const Entry& e : entries) {
    if (!e.error.empty()) {
      ++errors;
      summary_entries.push_back({{"p", e.p}, {"error", e.error}});
      continue;
    }
    json je = {{"p", e.p}};
    if (e.cond) {
      add_rows(e.p, *e.cond, "conductance");
      je["conductance"] = fit_to_json(*e.cond);
    }
    if (e.disp) {
      add_rows(e.p, *e.disp, "disparity");
      je["disparity"] = fit_to_json(*e.disp);
    }
    if (e.cond && e.disp) {
      // homogeneity products for the shared depth range; bounded products
      // are the two-sided scaling in one sequence
      json products = json::array();
      double runmax = 0, half_mark = 0;
      size_t count = e.cond->samples.size();
      for (size_t i = 0; i < count; ++i) {
        double prod = e.cond->samples[i].second * e.disp->samples[i].second;
        runmax = std::max(runmax, prod);
        if (i == count / 2) half_mark = runmax;
        products.push_back(
            {{"m", e.cond->samples[i].first}, {"product", prod}});
      }
      je["homogeneity_products"] = products;
      je["bounded_looking"] = runmax <= 1.10 * half_mark;
    }
    summary_entries.push_back(je);
  }

  json summary = {{"scheme", s.name()},
                  {"fingerprint", s.fingerprint()},
                  {"depth", g.depth},
                  {"seed", g.seed},
                  {"m_lo", o.m_lo},
                  {"m_hi", o.m_hi},
                  {"n", o.n},
                  {"ball_radius", o.ball_radius},
                  {"entries", summary_entries}};

  fs::path dir(g.out_dir);
  write_text_file(dir / "sigma_scan.csv", csv);
  write_text_file(dir / "sigma_scan_summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  out << "wrote " << (dir / "sigma_scan.csv").string() << " and "
      << (dir / "sigma_scan_summary.json").string() << "\n";
  return errors == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// dimar

int cmd_dimar(const GlobalOptions& g, const DimArOptions& o, std::ostream& out) {
  auto s = load_scheme(g.scheme);
  if (!(o.tol_p > 0)) throw UsageError("dimar: tol_p must be positive");
  if (!(o.p_lo > 1.0) || !(o.p_hi > o.p_lo))
    throw UsageError("dimar: need 1 < p_lo < p_hi");
  if (o.m_lo < 1 || o.m_hi < o.m_lo + 1)
    throw UsageError("dimar: need at least two depths to fit");

  int sample_level = std::min(2, std::max(1, s.max_level() - o.m_hi));
  auto samples = default_w_samples(s, sample_level);
  DimArResult res = estimate_dim_ar(s, o.p_lo, o.p_hi, o.tol_p, o.m_lo, o.m_hi,
                                    samples, o.ball_radius, fit_solver_profile());

  json evals = json::array();
  for (auto [p, sig] : res.evaluations)
    evals.push_back({{"p", p}, {"sigma_hat", sig}});
  char caveat[128];
  std::snprintf(caveat, sizeof caveat,
                "finite-depth estimate from m in [%d, %d]; the crossing can "
                "drift with deeper scans",
                o.m_lo, o.m_hi);
  json report = {{"scheme", s.name()},
                 {"fingerprint", s.fingerprint()},
                 {"seed", g.seed},
                 {"p_star", res.p_star},
                 {"bracket", {res.p_lo, res.p_hi}},
                 {"bracket_width", res.p_hi - res.p_lo},
                 {"tol_p", o.tol_p},
                 {"monotone", res.monotone},
                 {"evaluations", evals},
                 {"caveat", caveat}};
  out << report.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// construct

int cmd_construct(const GlobalOptions& g, const ConstructOptions& o,
                  std::ostream& out) {
  auto s = load_scheme(g.scheme);
  auto mu = load_measure(s, g.weights);

  ConstructionConfig cfg;
  cfg.p = o.p;
  cfg.k_max = o.k_max;
  cfg.omega = parse_omega(s, o.omega);
  cfg.m_star = o.m_star;
  if (o.cutoff == "min") {
    cfg.cutoff_mode = CutoffMode::HarmonicMinimizer;
  } else if (o.cutoff == "max") {
    cfg.cutoff_mode = CutoffMode::MaxOfCellCutoffs;
  } else {
    throw UsageError("construct: cutoff must be 'min' or 'max'");
  }
  if (o.sigma == "fit") {
    if (o.fit_m_lo < 1 || o.fit_m_hi < o.fit_m_lo + 1)
      throw UsageError("construct: bad sigma fit range");
    int sample_level = std::min(2, std::max(1, s.max_level() - o.fit_m_hi));
    auto samples = default_w_samples(s, sample_level);
    ScalingFit fit = fit_sigma_conductance(s, o.p, o.fit_m_lo, o.fit_m_hi,
                                           samples, 1, fit_solver_profile());
    cfg.sigma = fit.sigma_hat;
    char src[96];
    std::snprintf(src, sizeof src, "fitted from conductances, m in [%d, %d]",
                  o.fit_m_lo, o.fit_m_hi);
    cfg.sigma_source = src;
  } else {
    size_t used = 0;
    double v = 0;
    try {
      v = std::stod(o.sigma, &used);
    } catch (const std::exception&) {
      throw UsageError("construct: sigma must be a number or 'fit'");
    }
    if (used != o.sigma.size() || !(v > 0))
      throw UsageError("construct: sigma must be a number or 'fit'");
    cfg.sigma = v;
    cfg.sigma_source = "user";
  }

  ConstructionReport rep = run_construction(s, mu, cfg);

  json levels = json::array();
  for (const LevelRecord& lr : rep.levels) {
    json cutoffs = json::array();
    for (const CutoffRecord& cr : lr.cutoffs)
      cutoffs.push_back({{"j", cr.j},
                         {"m", cr.m},
                         {"energy", cr.energy},
                         {"scaled", cr.scaled},
                         {"from_cache", cr.from_cache},
                         {"relaxed", cr.relaxed}});
    json projected = json::array();
    for (auto [m, v] : lr.projected)
      projected.push_back({{"m", m}, {"scaled_energy", v}});
    levels.push_back({{"n", lr.n},
                      {"k", lr.k},
                      {"energy", lr.energy},
                      {"scaled_energy", lr.scaled_energy},
                      {"decomposition_gap", lr.decomposition_gap},
                      {"plateau", lr.plateau},
                      {"plateau_expected", lr.plateau_expected},
                      {"plateau_exact", lr.plateau_exact},
                      {"max_value", lr.max_value},
                      {"lp_norm", lr.lp_norm},
                      {"projected", projected},
                      {"projected_max", lr.projected_max},
                      {"cutoffs", cutoffs}});
  }
  json report = {{"scheme", s.name()},
                 {"fingerprint", s.fingerprint()},
                 {"seed", g.seed},
                 {"p", rep.p},
                 {"sigma", rep.sigma},
                 {"sigma_source", rep.sigma_source},
                 {"cutoff_mode", rep.cutoff_mode},
                 {"m_star", rep.m_star},
                 {"k_max", rep.k_max},
                 {"n_max", rep.n_max},
                 {"l_star", rep.l_star},
                 {"n_t", rep.n_t},
                 {"gamma_max", rep.gamma_max},
                 {"c1", rep.c1},
                 {"series", rep.series},
                 {"energy_bound", rep.energy_bound},
                 {"scaled_max", rep.scaled_max},
                 {"scaled_bounded", rep.scaled_bounded},
                 {"lp_bound", rep.lp_bound},
                 {"lp_max", rep.lp_max},
                 {"lp_bounded", rep.lp_bounded},
                 {"c2_observed", rep.c2_observed},
                 {"c2_formula", rep.c2_formula},
                 {"sigma_le_one", rep.sigma_le_one},
                 {"boundedness_label", rep.boundedness_label},
                 {"levels", levels}};

  std::string head = provenance_line(s, rep.n_max, g.seed);
  std::string energy_csv = head + "\nn,m,scaled_energy\n";
  std::string plateau_csv = head + "\nn,k,plateau,expected,exact\n";
  std::string lp_csv = head + " lp_bound=" + g17(rep.lp_bound) + "\nn,lp_norm\n";
  for (const LevelRecord& lr : rep.levels) {
    for (auto [m, v] : lr.projected)
      energy_csv += std::to_string(lr.n) + ',' + std::to_string(m) + ',' +
                    g17(v) + '\n';
    plateau_csv += std::to_string(lr.n) + ',' + std::to_string(lr.k) + ',' +
                   g17(lr.plateau) + ',' + g17(lr.plateau_expected) + ',' +
                   (lr.plateau_exact ? "1" : "0") + '\n';
    lp_csv += std::to_string(lr.n) + ',' + g17(lr.lp_norm) + '\n';
  }

  fs::path dir(g.out_dir);
  write_text_file(dir / "construct_report.json", report.dump(2) + "\n");
  write_text_file(dir / "construct_energy.csv", energy_csv);
  write_text_file(dir / "construct_plateau.csv", plateau_csv);
  write_text_file(dir / "construct_lpnorm.csv", lp_csv);

  out << report.dump(2) << "\n";
  out << "wrote construct_report.json, construct_energy.csv, "
         "construct_plateau.csv, construct_lpnorm.csv under "
      << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const GlobalOptions& g, const BenchOptions& o, std::ostream& out) {
  auto s = load_scheme(g.scheme);
  int depth = std::min(g.depth, s.max_level());
  if (depth < 3) throw UsageError("bench: need depth >= 3");
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  auto t0 = clock::now();
  const LevelGraph& graph = s.level_graph(depth);
  auto t1 = clock::now();

  std::vector<double> ramp(static_cast<size_t>(graph.size()));
  for (size_t i = 0; i < ramp.size(); ++i)
    ramp[i] = static_cast<double>(i) / static_cast<double>(ramp.size());
  double energy = p_energy(graph, ramp, o.p);
  auto t2 = clock::now();

  ConductanceResult r =
      ring_conductance(s, CellWord::parse("0,0"), depth - 2, o.p);
  auto t3 = clock::now();

  json report = {{"scheme", s.name()},
                 {"fingerprint", s.fingerprint()},
                 {"depth", depth},
                 {"p", o.p},
                 {"graph_vertices", graph.size()},
                 {"graph_build_ms", ms(t0, t1)},
                 {"energy_eval_ms", ms(t1, t2)},
                 {"ramp_energy", energy},
                 {"solve_ms", ms(t2, t3)},
                 {"solve_value", r.value},
                 {"solve_iters", r.stats.irls_iterations},
                 {"solve_pcg_iters", r.stats.pcg_iterations}};
  out << report.dump(2) << "\n";
  return 0;
}

int cmd_cache_compact(const GlobalOptions& g, std::ostream& out) {
  ResultCache cache(g.cache_dir);
  auto [before, after] = cache.compact();
  json report = {{"path", cache.path()},
                 {"records_before", before},
                 {"records_after", after}};
  out << report.dump(2) << "\n";
  return 0;
}

}  // namespace fractalp::cli
