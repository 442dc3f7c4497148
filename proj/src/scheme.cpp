#include "fractalp/scheme.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fractalp/hashing.hpp"
#include "fractalp/level_graph.hpp"

namespace fractalp {

CellWord CellWord::parse(const std::string& text) {
  std::vector<uint8_t> syms;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) throw UsageError("empty symbol in cell word '" + text + "'");
    int v = 0;
    try {
      v = std::stoi(tok);
    } catch (const std::exception&) {
      throw UsageError("bad cell word '" + text + "'");
    }
    if (v < 0 || v > 255) throw UsageError("symbol out of range in '" + text + "'");
    syms.push_back(static_cast<uint8_t>(v));
  }
  return CellWord(std::move(syms));
}

std::string CellWord::str() const {
  std::string out;
  for (size_t i = 0; i < syms_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(int(syms_[i]));
  }
  return out;
}

CellWord pi(const CellWord& w) {
  if (w.is_root()) return w;
  std::vector<uint8_t> v(w.symbols().begin(), w.symbols().end() - 1);
  return CellWord(std::move(v));
}

CellWord pi_k(const CellWord& w, int k) {
  if (k < 0) throw UsageError("pi_k: negative k");
  int keep = std::max(0, w.level() - k);
  std::vector<uint8_t> v(w.symbols().begin(), w.symbols().begin() + keep);
  return CellWord(std::move(v));
}

namespace {

// Kept cells must tile a connected region: box-intersection adjacency on the
// pattern itself must reach every kept cell from the first one.
void check_pattern_connected(int dim, const std::vector<GridCell>& kept,
                             const std::string& name) {
  if (kept.empty()) throw UsageError("scheme '" + name + "': no kept cells");
  auto at = [&](int x, int y) -> int {
    for (size_t i = 0; i < kept.size(); ++i)
      if (kept[i].x == x && kept[i].y == y) return static_cast<int>(i);
    return -1;
  };
  std::vector<char> seen(kept.size(), 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  size_t reached = 1;
  while (!stack.empty()) {
    GridCell c = kept[static_cast<size_t>(stack.back())];
    stack.pop_back();
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        if (dim == 1 && dy != 0) continue;
        int j = at(c.x + dx, c.y + dy);
        if (j >= 0 && !seen[static_cast<size_t>(j)]) {
          seen[static_cast<size_t>(j)] = 1;
          ++reached;
          stack.push_back(j);
        }
      }
  }
  if (reached != kept.size())
    throw UsageError("scheme '" + name + "': kept cells are not connected");
}

}  // namespace

SubdivisionScheme::SubdivisionScheme(std::string name, int grid_side,
                                     int dimension, std::vector<GridCell> kept,
                                     AdjacencyMode mode)
    : name_(std::move(name)),
      grid_side_(grid_side),
      dimension_(dimension),
      kept_(std::move(kept)),
      mode_(mode) {
  if (grid_side_ < 2) throw UsageError("scheme '" + name_ + "': need L >= 2");
  if (dimension_ != 1 && dimension_ != 2)
    throw UsageError("scheme '" + name_ + "': dimension must be 1 or 2");
  for (const GridCell& c : kept_) {
    if (c.x < 0 || c.x >= grid_side_ || c.y < 0 ||
        c.y >= (dimension_ == 2 ? grid_side_ : 1))
      throw UsageError("scheme '" + name_ + "': kept cell out of range");
  }
  // row-major (y, then x) order defines the symbols
  std::sort(kept_.begin(), kept_.end(), [](const GridCell& a, const GridCell& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  for (size_t i = 1; i < kept_.size(); ++i)
    if (kept_[i] == kept_[i - 1])
      throw UsageError("scheme '" + name_ + "': duplicate kept cell");
  check_pattern_connected(dimension_, kept_, name_);

  symbol_grid_.assign(static_cast<size_t>(grid_side_) *
                          (dimension_ == 2 ? grid_side_ : 1),
                      -1);
  for (size_t i = 0; i < kept_.size(); ++i)
    symbol_grid_[static_cast<size_t>(kept_[i].y) * grid_side_ + kept_[i].x] =
        static_cast<int16_t>(i);

  // deepest level with branching^level representable (and coordinates too)
  int64_t cells = 1;
  int64_t side = 1;
  int lvl = 0;
  while (cells <= (int64_t(1) << 61) / branching() &&
         side <= (int64_t(1) << 61) / grid_side_) {
    cells *= branching();
    side *= grid_side_;
    ++lvl;
  }
  max_level_ = lvl;
}

SubdivisionScheme::~SubdivisionScheme() = default;

SubdivisionScheme::SubdivisionScheme(const SubdivisionScheme& o)
    : name_(o.name_),
      grid_side_(o.grid_side_),
      dimension_(o.dimension_),
      kept_(o.kept_),
      mode_(o.mode_),
      max_level_(o.max_level_),
      symbol_grid_(o.symbol_grid_) {}

SubdivisionScheme::SubdivisionScheme(SubdivisionScheme&& o) noexcept
    : name_(std::move(o.name_)),
      grid_side_(o.grid_side_),
      dimension_(o.dimension_),
      kept_(std::move(o.kept_)),
      mode_(o.mode_),
      max_level_(o.max_level_),
      symbol_grid_(std::move(o.symbol_grid_)) {
  std::lock_guard<std::mutex> lock(o.graphs_mutex_);
  graphs_ = std::move(o.graphs_);
}

int SubdivisionScheme::symbol_of(int x, int y) const {
  if (x < 0 || x >= grid_side_ || y < 0 ||
      y >= (dimension_ == 2 ? grid_side_ : 1))
    return -1;
  return symbol_grid_[static_cast<size_t>(y) * grid_side_ + x];
}

int64_t SubdivisionScheme::level_size(int level) const {
  if (level < 0 || level > max_level_)
    throw UsageError("level " + std::to_string(level) + " out of range for scheme '" +
                     name_ + "'");
  int64_t n = 1;
  for (int i = 0; i < level; ++i) n *= branching();
  return n;
}

const std::vector<std::string>& SubdivisionScheme::builtin_names() {
  static const std::vector<std::string> names = {"interval2", "square2",
                                                 "square3", "sierpinski-carpet"};
  return names;
}

SubdivisionScheme SubdivisionScheme::builtin(const std::string& name) {
  if (name == "interval2")
    return SubdivisionScheme(name, 2, 1, {{0, 0}, {1, 0}}, AdjacencyMode::Closure);
  if (name == "square2" || name == "square3") {
    int L = name == "square2" ? 2 : 3;
    std::vector<GridCell> kept;
    for (int y = 0; y < L; ++y)
      for (int x = 0; x < L; ++x) kept.push_back({x, y});
    return SubdivisionScheme(name, L, 2, std::move(kept), AdjacencyMode::Closure);
  }
  if (name == "sierpinski-carpet") {
    std::vector<GridCell> kept;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        if (!(x == 1 && y == 1)) kept.push_back({x, y});
    return SubdivisionScheme(name, 3, 2, std::move(kept), AdjacencyMode::Closure);
  }
  throw UsageError("unknown builtin scheme '" + name + "'");
}

SubdivisionScheme SubdivisionScheme::parse_pattern(const std::string& text,
                                                   const std::string& name) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header))
    throw UsageError("scheme '" + name + "': empty file");
  int L = -1;
  AdjacencyMode mode = AdjacencyMode::Closure;
  bool saw_mode = false;
  std::istringstream hs(header);
  std::string tok;
  while (hs >> tok) {
    if (tok.rfind("L=", 0) == 0) {
      try {
        L = std::stoi(tok.substr(2));
      } catch (const std::exception&) {
        throw UsageError("scheme '" + name + "': bad header token '" + tok + "'");
      }
    } else if (tok.rfind("mode=", 0) == 0) {
      std::string m = tok.substr(5);
      if (m == "closure")
        mode = AdjacencyMode::Closure;
      else if (m == "edge")
        mode = AdjacencyMode::EdgeOnly;
      else
        throw UsageError("scheme '" + name + "': bad mode '" + m + "'");
      saw_mode = true;
    } else {
      throw UsageError("scheme '" + name + "': unexpected header token '" + tok +
                       "'");
    }
  }
  if (L < 0 || !saw_mode)
    throw UsageError("scheme '" + name +
                     "': header must be 'L=<int> mode=<closure|edge>'");

  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw UsageError("scheme '" + name + "': no pattern rows");
  int dim = rows.size() == 1 ? 1 : 2;
  if (dim == 2 && static_cast<int>(rows.size()) != L)
    throw UsageError("scheme '" + name + "': expected " + std::to_string(L) +
                     " rows, got " + std::to_string(rows.size()));
  std::vector<GridCell> kept;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != L)
      throw UsageError("scheme '" + name + "': row " + std::to_string(r) +
                       " has length " + std::to_string(rows[r].size()) +
                       ", expected " + std::to_string(L));
    for (int x = 0; x < L; ++x) {
      char c = rows[r][static_cast<size_t>(x)];
      if (c == '1')
        kept.push_back({x, static_cast<int>(r)});
      else if (c != '0')
        throw UsageError("scheme '" + name + "': pattern rows must be 0/1");
    }
  }
  return SubdivisionScheme(name, L, dim, std::move(kept), mode);
}

SubdivisionScheme SubdivisionScheme::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open scheme file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pattern(buf.str(), path.filename().string());
}

std::string SubdivisionScheme::pattern_text() const {
  std::ostringstream out;
  out << "L=" << grid_side_ << " mode="
      << (mode_ == AdjacencyMode::Closure ? "closure" : "edge") << "\n";
  int rows = dimension_ == 2 ? grid_side_ : 1;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < grid_side_; ++x) out << (symbol_of(x, y) >= 0 ? '1' : '0');
    out << "\n";
  }
  return out.str();
}

std::string SubdivisionScheme::fingerprint() const {
  return fnv64_hex(pattern_text());
}

const LevelGraph& SubdivisionScheme::level_graph(int level) const {
  std::lock_guard<std::mutex> lock(graphs_mutex_);
  auto it = graphs_.find(level);
  if (it == graphs_.end())
    it = graphs_.emplace(level, std::make_unique<LevelGraph>(*this, level)).first;
  return *it->second;
}

std::vector<CellWord> children(const SubdivisionScheme& s, const CellWord& w) {
  std::vector<CellWord> out;
  out.reserve(static_cast<size_t>(s.branching()));
  for (int c = 0; c < s.branching(); ++c)
    out.push_back(w.child(static_cast<uint8_t>(c)));
  return out;
}

std::vector<CellWord> refine(const SubdivisionScheme& s,
                             const std::vector<CellWord>& base, int m) {
  if (m < 0) throw UsageError("refine: negative m");
  if (base.empty()) return {};
  int level = base[0].level();
  for (const CellWord& w : base)
    if (w.level() != level) throw UsageError("refine: mixed levels in base set");
  std::vector<CellWord> cur(base);
  std::sort(cur.begin(), cur.end());
  cur.erase(std::unique(cur.begin(), cur.end()), cur.end());
  for (int step = 0; step < m; ++step) {
    std::vector<CellWord> next;
    next.reserve(cur.size() * static_cast<size_t>(s.branching()));
    for (const CellWord& w : cur)
      for (int c = 0; c < s.branching(); ++c)
        next.push_back(w.child(static_cast<uint8_t>(c)));
    cur = std::move(next);
  }
  return cur;
}

bool adjacent(const SubdivisionScheme& s, const CellWord& a, const CellWord& b) {
  if (a.level() != b.level())
    throw UsageError("adjacent: words of different levels");
  const LevelGraph& g = s.level_graph(a.level());
  int64_t ia = g.index_of(a), ib = g.index_of(b);
  if (ia == ib) return true;  // a cell's box meets itself
  return g.adjacent_indices(ia, ib);
}

std::vector<CellWord> gamma(const SubdivisionScheme& s, int M, const CellWord& w) {
  const LevelGraph& g = s.level_graph(w.level());
  std::vector<int64_t> idx = g.gamma(M, g.index_of(w));
  std::vector<CellWord> out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back(g.word(i));
  return out;  // index order == lexicographic order
}

}  // namespace fractalp
