#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fractalp/scheme.hpp"

namespace fractalp {

// The graph on T_n: one vertex per level-n cell, edges between cells whose
// boxes intersect (per the scheme's adjacency mode). Cells are indexed by
// the lexicographic order of their symbol sequences, which coincides with
// mixed-radix digit order, so index <-> word <-> grid coordinates are all
// O(level) arithmetic and descendant blocks are contiguous index ranges.
//
// Small levels cache an explicit adjacency array; above kAdjacencyCacheLimit
// cells neighbors are recomputed from coordinates on the fly, which keeps
// multi-million-cell levels usable in a few hundred MB.
class LevelGraph {
 public:
  static constexpr int kMaxNeighbors = 8;
  static constexpr int64_t kAdjacencyCacheLimit = 3'000'000;

  LevelGraph(const SubdivisionScheme& scheme, int level);

  const SubdivisionScheme& scheme() const { return *scheme_; }
  int level() const { return level_; }
  int64_t size() const { return size_; }
  bool has_cached_adjacency() const { return !adj_.empty() || size_ == 0; }

  CellWord word(int64_t index) const;
  int64_t index_of(const CellWord& w) const;
  // Grid coordinates of the cell's box: x in [0, L^n), y likewise (y = 0 in
  // dimension 1).
  std::pair<int64_t, int64_t> coords(int64_t index) const;
  int64_t index_of_coords(int64_t x, int64_t y) const;  // -1 if absent

  // Fills out[] with neighbor indices, returns the count (<= kMaxNeighbors).
  int neighbors(int64_t i, int64_t out[kMaxNeighbors]) const;
  int degree(int64_t i) const;
  int max_degree() const;  // lazily computed full scan
  bool adjacent_indices(int64_t a, int64_t b) const;

  template <class F>
  void for_each_neighbor(int64_t i, F&& f) const {
    int64_t buf[kMaxNeighbors];
    int k = neighbors(i, buf);
    for (int t = 0; t < k; ++t) f(buf[t]);
  }

  // Visits each unordered adjacent pair once, with u < v.
  template <class F>
  void for_each_edge(F&& f) const {
    int64_t buf[kMaxNeighbors];
    for (int64_t u = 0; u < size_; ++u) {
      int k = neighbors(u, buf);
      for (int t = 0; t < k; ++t)
        if (buf[t] > u) f(u, buf[t]);
    }
  }

  // Gamma_M(i) as sorted indices; gamma_set is the union over a base set
  // (used for ring halos).
  std::vector<int64_t> gamma(int M, int64_t i) const;
  std::vector<int64_t> gamma_set(int M, std::span<const int64_t> base) const;

 private:
  int neighbors_uncached(int64_t i, int64_t out[kMaxNeighbors]) const;

  const SubdivisionScheme* scheme_;
  int level_;
  int64_t size_;
  int64_t x_limit_, y_limit_;
  // digit place values
  std::vector<int64_t> k_pow_, l_pow_;
  // cached adjacency (small levels): offsets_[i]..offsets_[i+1] into adj_
  std::vector<int64_t> offsets_;
  std::vector<int64_t> adj_;
  mutable int max_degree_ = -1;
  mutable std::mutex degree_mutex_;
};

}  // namespace fractalp
