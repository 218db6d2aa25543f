#include "esgvi/block_layout.hpp"

#include <string>

namespace esgvi {

BlockLayout::BlockLayout(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw DimensionMismatch("BlockLayout: no blocks");
  offsets_.resize(dims_.size());
  total_ = 0;
  for (std::size_t b = 0; b < dims_.size(); ++b) {
    if (dims_[b] <= 0)
      throw DimensionMismatch("BlockLayout: block " + std::to_string(b) +
                              " has non-positive dim " + std::to_string(dims_[b]));
    offsets_[b] = total_;
    total_ += dims_[b];
    if (dims_[b] != 1) all_scalar_ = false;
  }
}

}  // namespace esgvi
