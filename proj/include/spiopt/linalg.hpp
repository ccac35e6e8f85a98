#pragma once

#include <Eigen/Core>

namespace spiopt {

// Row-major so that row i of a batch is image (or measurement vector) i,
// matching the Tensor layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace spiopt
