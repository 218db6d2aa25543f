#pragma once

#include <Eigen/Dense>

namespace esgvi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Blocks are stored row-major inside the flat value arrays; these maps give
// an Eigen view over one block without copying.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BlockRef = Eigen::Map<RowMat>;
using ConstBlockRef = Eigen::Map<const RowMat>;

}  // namespace esgvi
