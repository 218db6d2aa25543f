#include "esgvi/block_sparse.hpp"

#include <cstdio>
#include <ostream>
#include <string>

namespace esgvi {

BlockSparseSym::BlockSparseSym(std::shared_ptr<const PrecisionPattern> pattern)
    : pattern_(std::move(pattern)) {
  const auto& p = *pattern_;
  offsets_.resize(p.num_entries());
  int total = 0;
  for (int e = 0; e < p.num_entries(); ++e) {
    offsets_[e] = total;
    total += p.layout().dim(p.entry_row(e)) * p.layout().dim(p.entry_col(e));
  }
  values_.assign(total, 0.0);
}

BlockRef BlockSparseSym::block_at(int i, int j) {
  const int e = pattern_->find(i, j);
  if (e < 0)
    throw PatternViolation("block (" + std::to_string(i) + "," + std::to_string(j) +
                           ") not in pattern");
  return block(e);
}

ConstBlockRef BlockSparseSym::block_at(int i, int j) const {
  const int e = pattern_->find(i, j);
  if (e < 0)
    throw PatternViolation("block (" + std::to_string(i) + "," + std::to_string(j) +
                           ") not in pattern");
  return block(e);
}

void BlockSparseSym::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

void BlockSparseSym::add_scaled(const BlockSparseSym& x, double a) {
  if (!(pattern() == x.pattern()))
    throw PatternViolation("add_scaled: patterns differ");
  for (std::size_t v = 0; v < values_.size(); ++v) values_[v] += a * x.values_[v];
}

Mat BlockSparseSym::to_dense() const {
  const auto& p = *pattern_;
  const auto& lay = p.layout();
  Mat d = Mat::Zero(lay.total_dim(), lay.total_dim());
  for (int e = 0; e < p.num_entries(); ++e) {
    const int i = p.entry_row(e), j = p.entry_col(e);
    auto b = block(e);
    d.block(lay.offset(i), lay.offset(j), lay.dim(i), lay.dim(j)) = b;
    if (i != j)
      d.block(lay.offset(j), lay.offset(i), lay.dim(j), lay.dim(i)) = b.transpose();
  }
  return d;
}

void scatter_add(BlockSparseSym& a, const std::vector<int>& blocks, const Mat& local) {
  const auto& lay = a.pattern().layout();
  int total = 0;
  std::vector<int> local_off(blocks.size());
  for (std::size_t v = 0; v < blocks.size(); ++v) {
    if (blocks[v] < 0 || blocks[v] >= lay.num_blocks())
      throw DimensionMismatch("scatter_add: block index out of range");
    local_off[v] = total;
    total += lay.dim(blocks[v]);
  }
  if (local.rows() != total || local.cols() != total)
    throw DimensionMismatch("scatter_add: local matrix is " + std::to_string(local.rows()) +
                            "x" + std::to_string(local.cols()) + ", expected " +
                            std::to_string(total));
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    for (std::size_t c = 0; c < blocks.size(); ++c) {
      const int gi = blocks[r], gj = blocks[c];
      if (gi < gj) continue;  // handled by the symmetric counterpart
      if (gi == gj && r != c)
        throw DimensionMismatch("scatter_add: repeated block index in factor");
      a.block_at(gi, gj) += local.block(local_off[r], local_off[c], lay.dim(gi), lay.dim(gj));
    }
  }
}

double quadratic_form(const BlockSparseSym& a, const Vec& x) {
  const auto& p = a.pattern();
  const auto& lay = p.layout();
  if (x.size() != lay.total_dim())
    throw DimensionMismatch("quadratic_form: vector length does not match the layout");
  double s = 0.0;
  for (int e = 0; e < p.num_entries(); ++e) {
    const int i = p.entry_row(e), j = p.entry_col(e);
    const double c = x.segment(lay.offset(i), lay.dim(i)).transpose() * a.block(e) *
                     x.segment(lay.offset(j), lay.dim(j));
    s += (i == j) ? c : 2.0 * c;
  }
  return s;
}

void write_matrix_market(std::ostream& os, const BlockSparseSym& a) {
  const auto& p = a.pattern();
  const auto& lay = p.layout();
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  std::int64_t nnz = 0;
  for (int e = 0; e < p.num_entries(); ++e) {
    const int i = p.entry_row(e), j = p.entry_col(e);
    nnz += (i == j) ? static_cast<std::int64_t>(lay.dim(i)) * (lay.dim(i) + 1) / 2
                    : static_cast<std::int64_t>(lay.dim(i)) * lay.dim(j);
  }
  os << lay.total_dim() << " " << lay.total_dim() << " " << nnz << "\n";
  char buf[64];
  for (int e = 0; e < p.num_entries(); ++e) {
    const int i = p.entry_row(e), j = p.entry_col(e);
    auto b = a.block(e);
    for (int r = 0; r < lay.dim(i); ++r) {
      for (int c = 0; c < lay.dim(j); ++c) {
        const int gr = lay.offset(i) + r + 1, gc = lay.offset(j) + c + 1;
        if (gr < gc) continue;  // keep lower triangle of diagonal blocks
        std::snprintf(buf, sizeof(buf), "%.17g", b(r, c));
        os << gr << " " << gc << " " << buf << "\n";
      }
    }
  }
}

}  // namespace esgvi
