#pragma once

#include <Eigen/Dense>

namespace dvton {

// Row-major dynamic matrix; rows are tokens / samples.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

}  // namespace dvton
