#pragma once

#include <algorithm>

#include <Eigen/Dense>

namespace test {

// Max-norm error relative to the reference, with an absolute floor of 1.
inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

}  // namespace test
