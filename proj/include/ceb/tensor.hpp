#pragma once

#include "ceb/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace ceb {

class Tensor;

namespace detail {
struct TensorNode;
Tensor make_tensor(std::shared_ptr<TensorNode> node);
}  // namespace detail

/// Matrix-valued node in a reverse-mode differentiation graph. Scalars
/// are 1x1. Copying a Tensor copies a handle to the shared node.
///
/// Graphs are built by the free-function ops below and differentiated
/// with backward(). Leaves created with Tensor::parameter collect
/// gradients; constants do not.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double value) {
    return constant(Matrix::Constant(1, 1, value));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  double scalar_value() const;  // requires 1x1
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  bool requires_grad() const;
  /// Gradient accumulated by the latest backward(); zero if untouched.
  Matrix grad() const;
  // A Tensor is a shared handle; these mutate the pointed-to node.
  void zero_grad() const;
  /// Overwrite a parameter's value in place (optimizer update).
  void set_value(Matrix v) const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor detail::make_tensor(std::shared_ptr<detail::TensorNode> node);
};

/// Populates gradients of every parameter the scalar loss depends on.
/// A second call on the same loss node throws; rebuild the graph instead.
void backward(const Tensor& loss);

// Elementwise binary ops. Shapes must match, or one operand may be a
// 1x1 scalar, a 1xC row, or an Rx1 column broadcast against the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scalar_mul(double s, const Tensor& a);
Tensor scalar_add(double s, const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);       // 1x1
Tensor mean(const Tensor& a);      // 1x1
Tensor row_sum(const Tensor& a);   // Rx1

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_cols(const Tensor& a, const Tensor& b);

/// Multi-input op with a fused backward pass. The callback receives the
/// upstream gradient plus, per parent, its value and a gradient slot to
/// accumulate into (null when that parent takes no gradient). Fused ops
/// keep pairwise fan reductions at one graph node instead of thousands.
using FusedBackward =
    std::function<void(const Matrix& upstream,
                       const std::vector<const Matrix*>& parent_values,
                       const std::vector<Matrix*>& parent_grads)>;
Tensor fused_op(Matrix value, const std::vector<Tensor>& parents,
                FusedBackward backward);

/// Sum of singular values. The backward pass uses the U V^T subgradient;
/// a near-degenerate spectrum (gap < 1e-8 * sigma_1) emits a warning.
Tensor nuclear_norm(const Tensor& a);

/// Sum of singular values divided by the largest one; in [1, min(N, K)].
Tensor normalized_singular_sum(const Tensor& a);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
};

/// Compares the analytic gradient of f at x0 against central differences
/// with step h, coordinate by coordinate.
FiniteDiffReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Matrix& x0, double h);

}  // namespace ceb
