#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace ceb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Tree-structured accumulation over a contiguous span of terms.
/// Keeps floating-point drift O(log n) instead of O(n) for the large
/// double sums that show up in pairwise Gaussian-difference totals.
double pairwise_sum(std::span<const double> terms);

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace ceb
