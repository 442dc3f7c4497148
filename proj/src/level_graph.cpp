#include "fractalp/level_graph.hpp"

#include <algorithm>
#include <unordered_set>

namespace fractalp {

LevelGraph::LevelGraph(const SubdivisionScheme& scheme, int level)
    : scheme_(&scheme), level_(level) {
  if (level < 0 || level > scheme.max_level())
    throw UsageError("LevelGraph: level " + std::to_string(level) + " out of range");
  size_ = scheme.level_size(level);
  k_pow_.resize(static_cast<size_t>(level) + 1);
  l_pow_.resize(static_cast<size_t>(level) + 1);
  k_pow_[0] = l_pow_[0] = 1;
  for (int i = 1; i <= level; ++i) {
    k_pow_[static_cast<size_t>(i)] = k_pow_[static_cast<size_t>(i - 1)] * scheme.branching();
    l_pow_[static_cast<size_t>(i)] = l_pow_[static_cast<size_t>(i - 1)] * scheme.grid_side();
  }
  x_limit_ = l_pow_[static_cast<size_t>(level)];
  y_limit_ = scheme.dimension() == 2 ? x_limit_ : 1;

  if (size_ <= kAdjacencyCacheLimit) {
    offsets_.assign(static_cast<size_t>(size_) + 1, 0);
    int64_t buf[kMaxNeighbors];
    for (int64_t i = 0; i < size_; ++i)
      offsets_[static_cast<size_t>(i) + 1] = neighbors_uncached(i, buf);
    for (int64_t i = 0; i < size_; ++i)
      offsets_[static_cast<size_t>(i) + 1] += offsets_[static_cast<size_t>(i)];
    adj_.resize(static_cast<size_t>(offsets_[static_cast<size_t>(size_)]));
    for (int64_t i = 0; i < size_; ++i) {
      int k = neighbors_uncached(i, buf);
      std::copy(buf, buf + k, adj_.begin() + offsets_[static_cast<size_t>(i)]);
    }
  }
}

CellWord LevelGraph::word(int64_t index) const {
  if (index < 0 || index >= size_) throw UsageError("LevelGraph::word: index out of range");
  std::vector<uint8_t> syms(static_cast<size_t>(level_));
  int K = scheme_->branching();
  for (int i = level_ - 1; i >= 0; --i) {
    syms[static_cast<size_t>(i)] = static_cast<uint8_t>(index % K);
    index /= K;
  }
  return CellWord(std::move(syms));
}

int64_t LevelGraph::index_of(const CellWord& w) const {
  if (w.level() != level_)
    throw UsageError("LevelGraph::index_of: word level " + std::to_string(w.level()) +
                     " != graph level " + std::to_string(level_));
  int64_t idx = 0;
  int K = scheme_->branching();
  for (int i = 0; i < level_; ++i) {
    if (w.symbol(i) >= K) throw UsageError("LevelGraph::index_of: symbol out of range");
    idx = idx * K + w.symbol(i);
  }
  return idx;
}

std::pair<int64_t, int64_t> LevelGraph::coords(int64_t index) const {
  int64_t x = 0, y = 0;
  int K = scheme_->branching();
  int L = scheme_->grid_side();
  const auto& kept = scheme_->kept();
  // symbols from most significant digit down
  for (int i = level_ - 1; i >= 0; --i) {
    int64_t place = k_pow_[static_cast<size_t>(i)];
    int sym = static_cast<int>(index / place);
    index -= static_cast<int64_t>(sym) * place;
    (void)K;
    const GridCell& c = kept[static_cast<size_t>(sym)];
    x = x * L + c.x;
    y = y * L + c.y;
  }
  return {x, y};
}

int64_t LevelGraph::index_of_coords(int64_t x, int64_t y) const {
  if (x < 0 || x >= x_limit_ || y < 0 || y >= y_limit_) return -1;
  int64_t idx = 0;
  for (int i = level_ - 1; i >= 0; --i) {
    int64_t lp = l_pow_[static_cast<size_t>(i)];
    int dx = static_cast<int>(x / lp);
    int dy = static_cast<int>(y / lp);
    x -= static_cast<int64_t>(dx) * lp;
    y -= static_cast<int64_t>(dy) * lp;
    int sym = scheme_->symbol_of(dx, dy);
    if (sym < 0) return -1;
    idx = idx * scheme_->branching() + sym;
  }
  return idx;
}

int LevelGraph::neighbors_uncached(int64_t i, int64_t out[kMaxNeighbors]) const {
  auto [x, y] = coords(i);
  int k = 0;
  if (scheme_->dimension() == 1) {
    for (int64_t dx : {int64_t(-1), int64_t(1)}) {
      int64_t j = index_of_coords(x + dx, y);
      if (j >= 0) out[k++] = j;
    }
    return k;
  }
  if (scheme_->mode() == AdjacencyMode::Closure) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        int64_t j = index_of_coords(x + dx, y + dy);
        if (j >= 0) out[k++] = j;
      }
  } else {
    static constexpr int off[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& d : off) {
      int64_t j = index_of_coords(x + d[0], y + d[1]);
      if (j >= 0) out[k++] = j;
    }
  }
  return k;
}

int LevelGraph::neighbors(int64_t i, int64_t out[kMaxNeighbors]) const {
  if (!adj_.empty()) {
    int64_t b = offsets_[static_cast<size_t>(i)], e = offsets_[static_cast<size_t>(i) + 1];
    std::copy(adj_.begin() + b, adj_.begin() + e, out);
    return static_cast<int>(e - b);
  }
  return neighbors_uncached(i, out);
}

int LevelGraph::degree(int64_t i) const {
  if (!adj_.empty())
    return static_cast<int>(offsets_[static_cast<size_t>(i) + 1] -
                            offsets_[static_cast<size_t>(i)]);
  int64_t buf[kMaxNeighbors];
  return neighbors(i, buf);
}

int LevelGraph::max_degree() const {
  std::lock_guard<std::mutex> lock(degree_mutex_);
  if (max_degree_ < 0) {
    int best = 0;
    for (int64_t i = 0; i < size_; ++i) best = std::max(best, degree(i));
    max_degree_ = best;
  }
  return max_degree_;
}

bool LevelGraph::adjacent_indices(int64_t a, int64_t b) const {
  int64_t buf[kMaxNeighbors];
  int k = neighbors(a, buf);
  for (int t = 0; t < k; ++t)
    if (buf[t] == b) return true;
  return false;
}

std::vector<int64_t> LevelGraph::gamma(int M, int64_t i) const {
  return gamma_set(M, std::span<const int64_t>(&i, 1));
}

std::vector<int64_t> LevelGraph::gamma_set(int M, std::span<const int64_t> base) const {
  if (M < 0) throw UsageError("gamma: negative radius");
  std::unordered_set<int64_t> seen(base.begin(), base.end());
  std::vector<int64_t> frontier(base.begin(), base.end());
  int64_t buf[kMaxNeighbors];
  for (int step = 0; step < M && !frontier.empty(); ++step) {
    std::vector<int64_t> next;
    for (int64_t u : frontier) {
      int k = neighbors(u, buf);
      for (int t = 0; t < k; ++t)
        if (seen.insert(buf[t]).second) next.push_back(buf[t]);
    }
    frontier = std::move(next);
  }
  std::vector<int64_t> out(seen.begin(), seen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fractalp
