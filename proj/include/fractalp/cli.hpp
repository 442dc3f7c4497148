#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fractalp/measure.hpp"
#include "fractalp/scheme.hpp"

// Command implementations behind the command-line tool. They take plain
// option structs and write to a caller-supplied stream, so the test suite can
// drive them without spawning processes; the binary only parses arguments and
// maps exceptions to exit codes (0 ok, 1 analytic failure, 2 usage, 3 solver).
namespace fractalp::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct GlobalOptions {
  std::string scheme = "interval2";  // builtin name or pattern file path
  int depth = 4;
  uint64_t seed = 0;
  int jobs = 1;
  std::string cache_dir;  // empty: result cache disabled
  std::string out_dir = ".";
  std::vector<double> weights;  // empty: uniform measure
};

// Resolves a builtin name or a pattern file path.
SubdivisionScheme load_scheme(const std::string& name_or_path);
SelfSimilarMeasure load_measure(const SubdivisionScheme& s,
                                const std::vector<double>& weights);

// Full round-trip decimal formatting; every numeric CSV/JSON cell goes
// through this so identical configurations produce byte-identical files.
std::string g17(double v);

// Append-only JSON-lines store of result records; one record per line, the
// newest record for a given input hash wins. A record carries the
// subcommand, the input hash, the outputs object, a timestamp, and the tool
// version. The input hash digests the scheme bytes together with every
// numeric parameter, so identical inputs reuse cached solver outputs.
class ResultCache {
 public:
  explicit ResultCache(std::string dir);  // empty dir: disabled
  bool enabled() const { return !dir_.empty(); }
  std::string path() const;

  static std::string input_hash(const SubdivisionScheme& s,
                                const std::string& subcommand,
                                const std::string& params);

  // Returns the stored outputs (serialized JSON object) for the hash.
  std::optional<std::string> lookup(const std::string& hash) const;
  void store(const std::string& hash, const std::string& subcommand,
             const std::string& outputs_json);
  // Drops superseded records; returns (records before, records after).
  std::pair<int64_t, int64_t> compact();

 private:
  std::string dir_;
};

struct CheckOptions {
  int k_max = 2;  // projection-stability iteration depth
};
int cmd_check(const GlobalOptions& g, const CheckOptions& o, std::ostream& out);

struct ConductanceOptions {
  std::string w = "0";  // cell word, comma-separated symbols
  int m = 2;
  double p = 2.0;
  int ball_radius = 1;
};
int cmd_conductance(const GlobalOptions& g, const ConductanceOptions& o,
                    std::ostream& out);

struct DisparityOptions {
  double p = 2.0;
  int m = 1;
  int level = 1;                // scan level, or the level of `cells`
  std::vector<int64_t> cells;   // explicit patch; empty: scan the whole level
  int restarts = 32;
};
int cmd_disparity(const GlobalOptions& g, const DisparityOptions& o,
                  std::ostream& out);

struct SigmaScanOptions {
  std::vector<double> p_grid = {1.5, 2.0, 3.0};
  int m_lo = 1;
  int m_hi = 3;
  std::string source = "both";  // conductance | disparity | both
  int n = 1;                    // disparity scan level
  int ball_radius = 1;
};
int cmd_sigma_scan(const GlobalOptions& g, const SigmaScanOptions& o,
                   std::ostream& out);

struct DimArOptions {
  double p_lo = 1.5;
  double p_hi = 3.0;
  double tol_p = 0.05;
  int m_lo = 2;
  int m_hi = 4;
  int ball_radius = 1;
};
int cmd_dimar(const GlobalOptions& g, const DimArOptions& o, std::ostream& out);

struct ConstructOptions {
  double p = 1.3;
  std::string sigma = "fit";  // numeric literal, or "fit" from conductances
  int k_max = 4;
  std::string omega = "0";    // target address digits, comma-separated
  std::string cutoff = "min";  // min: harmonic minimizer; max: cell-cutoff max
  int m_star = -1;            // -1: certify from the scheme
  int fit_m_lo = 2;
  int fit_m_hi = 4;
};
int cmd_construct(const GlobalOptions& g, const ConstructOptions& o,
                  std::ostream& out);

struct BenchOptions {
  double p = 2.0;
};
int cmd_bench(const GlobalOptions& g, const BenchOptions& o, std::ostream& out);

int cmd_cache_compact(const GlobalOptions& g, std::ostream& out);

}  // namespace fractalp::cli
