#pragma once

#include <vector>

#include "esgvi/errors.hpp"

namespace esgvi {

// Partition of the state vector into contiguous blocks.  Block ordering is
// the elimination ordering: it is fixed by the caller and never permuted
// internally.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<int> dims);

  int num_blocks() const { return static_cast<int>(dims_.size()); }
  int dim(int b) const { return dims_[b]; }
  int offset(int b) const { return offsets_[b]; }
  int total_dim() const { return total_; }
  const std::vector<int>& dims() const { return dims_; }
  bool all_scalar() const { return all_scalar_; }

  bool operator==(const BlockLayout& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int> dims_;
  std::vector<int> offsets_;
  int total_ = 0;
  bool all_scalar_ = true;
};

}  // namespace esgvi
