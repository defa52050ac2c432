#pragma once

#include <Eigen/Dense>

#include <vector>

namespace kfmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

}  // namespace kfmc
