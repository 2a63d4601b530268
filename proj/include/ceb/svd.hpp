#pragma once

#include "ceb/common.hpp"

namespace ceb {

/// Thin SVD, K = U * diag(S) * V^T. Singular values are sorted descending
/// and a deterministic sign convention is applied: the largest-magnitude
/// entry of each left singular vector is positive.
struct SvdResult {
  Matrix U;
  Vector S;
  Matrix V;
};

SvdResult svd(const Matrix& K);

}  // namespace ceb
