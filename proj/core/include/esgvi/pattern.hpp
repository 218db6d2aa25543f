#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "esgvi/block_layout.hpp"

namespace esgvi {

// Symmetric block sparsity pattern over a BlockLayout.  Only the lower
// triangle (i >= j) is stored; diagonal blocks are always present.  Entries
// are kept in a canonical order: column-major, rows ascending within each
// column.  Entry ids index into that canonical order, so value arrays laid
// out per entry are deterministic.
class PrecisionPattern {
 public:
  PrecisionPattern() = default;
  // `pairs` lists block index pairs in either triangle; they are normalized
  // to the lower triangle, deduplicated, and all diagonal pairs are added.
  PrecisionPattern(BlockLayout layout, const std::vector<std::pair<int, int>>& pairs);

  const BlockLayout& layout() const { return layout_; }
  int num_entries() const { return static_cast<int>(rows_.size()); }
  int entry_row(int e) const { return rows_[e]; }
  int entry_col(int e) const { return cols_[e]; }
  // Entry ids of column j, rows ascending (the diagonal entry comes first).
  const std::vector<int>& column_entries(int j) const { return col_entries_[j]; }

  // Entry id of block (i, j) with i >= j, or -1 when absent.
  int find(int i, int j) const;
  bool contains(int i, int j) const { return find(i, j) >= 0; }

  // Scalar counts of the expanded matrix: full symmetric including the
  // diagonal, and strictly-lower-triangle only.
  std::int64_t scalar_nnz_full() const;
  std::int64_t scalar_nnz_lower_strict() const;

  // True when every entry of `other` is present here (layouts must match).
  bool includes(const PrecisionPattern& other) const;
  bool operator==(const PrecisionPattern& other) const;

 private:
  BlockLayout layout_;
  std::vector<int> rows_, cols_;                // per entry, canonical order
  std::vector<std::vector<int>> col_entries_;   // per column, entry ids
  std::unordered_map<std::uint64_t, int> index_;

  friend PrecisionPattern symbolic_fill(const PrecisionPattern&);
};

// Fill-in closure for an LDL^T factorization in the layout's block order:
// the minimal superset closed under the rule that if column i contains rows
// k and j (j > k > i), then column k contains row j.  Computed with the
// standard elimination-order column merge, so it equals the exact structure
// of L. Idempotent.
PrecisionPattern symbolic_fill(const PrecisionPattern& p);

}  // namespace esgvi
