#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace fractalp {

// Errors surfaced to CLI exit codes: UsageError -> 2, SolveError -> 3,
// AnalyticError -> 1. Everything else is a plain logic bug.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AnalyticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AdjacencyMode { Closure, EdgeOnly };

// A cell address in the partition tree: the sequence of subdivision symbols
// leading from the root. The root is the empty word.
class CellWord {
 public:
  CellWord() = default;
  explicit CellWord(std::vector<uint8_t> syms) : syms_(std::move(syms)) {}

  // Parses "0,3,5"; an empty string is the root.
  static CellWord parse(const std::string& text);

  int level() const { return static_cast<int>(syms_.size()); }
  bool is_root() const { return syms_.empty(); }
  uint8_t symbol(int i) const { return syms_[static_cast<size_t>(i)]; }
  const std::vector<uint8_t>& symbols() const { return syms_; }

  CellWord child(uint8_t s) const {
    std::vector<uint8_t> v(syms_);
    v.push_back(s);
    return CellWord(std::move(v));
  }

  std::string str() const;

  friend bool operator==(const CellWord&, const CellWord&) = default;
  friend auto operator<=>(const CellWord& a, const CellWord& b) {
    return a.syms_ <=> b.syms_;
  }

 private:
  std::vector<uint8_t> syms_;
};

// Parent map: drops the last symbol. The root is its own parent.
CellWord pi(const CellWord& w);
CellWord pi_k(const CellWord& w, int k);

struct GridCell {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

class LevelGraph;

// An axis-aligned subdivision pattern: the unit box is split into an L x L
// grid (or L subintervals in dimension 1) and a fixed subset of sub-boxes is
// kept. Every kept cell subdivides by the same pattern, so the partition
// tree has uniform branching. Two cells of the same level are adjacent when
// their closed boxes intersect (Closure mode) or share a facet of positive
// measure (EdgeOnly mode; in dimension 1 both modes coincide).
class SubdivisionScheme {
 public:
  SubdivisionScheme(std::string name, int grid_side, int dimension,
                    std::vector<GridCell> kept, AdjacencyMode mode);
  ~SubdivisionScheme();
  SubdivisionScheme(const SubdivisionScheme&);
  SubdivisionScheme& operator=(const SubdivisionScheme&) = delete;
  SubdivisionScheme(SubdivisionScheme&&) noexcept;

  static SubdivisionScheme builtin(const std::string& name);
  static const std::vector<std::string>& builtin_names();
  // File format: first line "L=<int> mode=<closure|edge>", then the 0/1
  // pattern rows, row r giving the cells with y = r. A single row means
  // dimension 1.
  static SubdivisionScheme from_file(const std::filesystem::path& path);
  static SubdivisionScheme parse_pattern(const std::string& text,
                                         const std::string& name);

  const std::string& name() const { return name_; }
  int grid_side() const { return grid_side_; }
  int dimension() const { return dimension_; }
  int branching() const { return static_cast<int>(kept_.size()); }
  AdjacencyMode mode() const { return mode_; }
  // Kept cells in row-major order (y, then x): this order defines the
  // subdivision symbols, and lexicographic symbol order defines all cell
  // indexing.
  const std::vector<GridCell>& kept() const { return kept_; }
  int symbol_of(int x, int y) const;  // -1 if that sub-box was removed

  int64_t level_size(int level) const;  // branching^level
  int max_level() const { return max_level_; }

  // Serialization in the scheme-file format, and a stable content hash over
  // it. Two schemes with equal fingerprints index cells identically.
  std::string pattern_text() const;
  std::string fingerprint() const;

  // Shared per-level graph cache; thread-safe.
  const LevelGraph& level_graph(int level) const;

 private:
  std::string name_;
  int grid_side_;
  int dimension_;
  std::vector<GridCell> kept_;
  AdjacencyMode mode_;
  int max_level_ = 0;
  std::vector<int16_t> symbol_grid_;  // grid_side^2 entries, -1 for removed

  mutable std::mutex graphs_mutex_;
  mutable std::map<int, std::unique_ptr<LevelGraph>> graphs_;
};

// Tree operations. All of these validate levels and throw UsageError on a
// mismatch.
std::vector<CellWord> children(const SubdivisionScheme& s, const CellWord& w);
// S^m applied to a set of same-level words; results in lexicographic order.
std::vector<CellWord> refine(const SubdivisionScheme& s,
                             const std::vector<CellWord>& base, int m);
bool adjacent(const SubdivisionScheme& s, const CellWord& a, const CellWord& b);
// Gamma_M(w): all cells of the same level reachable in at most M adjacency
// steps. Sorted lexicographically.
std::vector<CellWord> gamma(const SubdivisionScheme& s, int M,
                            const CellWord& w);

}  // namespace fractalp
