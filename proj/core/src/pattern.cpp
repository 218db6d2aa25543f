#include "esgvi/pattern.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace esgvi {
namespace {

inline std::uint64_t key_of(int i, int j) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
         static_cast<std::uint32_t>(j);
}

}  // namespace

PrecisionPattern::PrecisionPattern(BlockLayout layout,
                                   const std::vector<std::pair<int, int>>& pairs)
    : layout_(std::move(layout)) {
  const int nb = layout_.num_blocks();
  std::vector<std::set<int>> rows_of_col(nb);  // strictly-lower rows per column
  for (const auto& [a, b] : pairs) {
    if (a < 0 || a >= nb || b < 0 || b >= nb)
      throw DimensionMismatch("PrecisionPattern: block pair (" + std::to_string(a) +
                              "," + std::to_string(b) + ") out of range");
    const int i = std::max(a, b), j = std::min(a, b);
    if (i != j) rows_of_col[j].insert(i);
  }
  col_entries_.resize(nb);
  for (int j = 0; j < nb; ++j) {
    // diagonal first, then strictly-lower rows ascending
    const int diag_id = static_cast<int>(rows_.size());
    rows_.push_back(j);
    cols_.push_back(j);
    index_.emplace(key_of(j, j), diag_id);
    col_entries_[j].push_back(diag_id);
    for (int i : rows_of_col[j]) {
      const int id = static_cast<int>(rows_.size());
      rows_.push_back(i);
      cols_.push_back(j);
      index_.emplace(key_of(i, j), id);
      col_entries_[j].push_back(id);
    }
  }
}

int PrecisionPattern::find(int i, int j) const {
  if (i < j) std::swap(i, j);
  auto it = index_.find(key_of(i, j));
  return it == index_.end() ? -1 : it->second;
}

std::int64_t PrecisionPattern::scalar_nnz_full() const {
  std::int64_t n = 0;
  for (int e = 0; e < num_entries(); ++e) {
    const std::int64_t s = static_cast<std::int64_t>(layout_.dim(rows_[e])) * layout_.dim(cols_[e]);
    n += (rows_[e] == cols_[e]) ? s : 2 * s;
  }
  return n;
}

std::int64_t PrecisionPattern::scalar_nnz_lower_strict() const {
  std::int64_t n = 0;
  for (int e = 0; e < num_entries(); ++e) {
    if (rows_[e] != cols_[e])
      n += static_cast<std::int64_t>(layout_.dim(rows_[e])) * layout_.dim(cols_[e]);
  }
  return n;
}

bool PrecisionPattern::includes(const PrecisionPattern& other) const {
  if (!(layout_ == other.layout_)) return false;
  for (int e = 0; e < other.num_entries(); ++e)
    if (!contains(other.rows_[e], other.cols_[e])) return false;
  return true;
}

bool PrecisionPattern::operator==(const PrecisionPattern& other) const {
  return layout_ == other.layout_ && rows_ == other.rows_ && cols_ == other.cols_;
}

PrecisionPattern symbolic_fill(const PrecisionPattern& p) {
  const int nb = p.layout().num_blocks();
  // Strictly-lower row sets per column, then the elimination-order merge:
  // for each column i, merge rows(i) \ {min} into column min(rows(i)).
  std::vector<std::set<int>> rows(nb);
  for (int e = 0; e < p.num_entries(); ++e)
    if (p.entry_row(e) != p.entry_col(e)) rows[p.entry_col(e)].insert(p.entry_row(e));
  for (int i = 0; i < nb; ++i) {
    if (rows[i].empty()) continue;
    auto it = rows[i].begin();
    const int parent = *it;
    for (++it; it != rows[i].end(); ++it) rows[parent].insert(*it);
  }
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < nb; ++j)
    for (int i : rows[j]) pairs.emplace_back(i, j);
  return PrecisionPattern(p.layout(), pairs);
}

}  // namespace esgvi
