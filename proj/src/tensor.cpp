#include "ceb/tensor.hpp"

#include "ceb/svd.hpp"

#include <atomic>
#include <iostream>
#include <unordered_set>

namespace ceb {

namespace detail {

struct TensorNode {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool grad_touched = false;
  bool backward_done = false;  // set on the node backward() ran from
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (!grad_touched) {
      grad = Matrix::Zero(value.rows(), value.cols());
      grad_touched = true;
    }
  }
};

Tensor make_tensor(std::shared_ptr<TensorNode> node) {
  return Tensor(std::move(node));
}

}  // namespace detail

using detail::TensorNode;

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

const Matrix& Tensor::value() const {
  require(defined(), "Tensor: undefined");
  return node_->value;
}

double Tensor::scalar_value() const {
  require(rows() == 1 && cols() == 1, "Tensor: not a scalar");
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Matrix Tensor::grad() const {
  require(defined(), "Tensor: undefined");
  if (!node_->grad_touched) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() const {
  require(defined(), "Tensor: undefined");
  node_->grad_touched = false;
  node_->backward_done = false;
}

void Tensor::set_value(Matrix v) const {
  require(defined(), "Tensor: undefined");
  require(v.rows() == rows() && v.cols() == cols(),
          "Tensor::set_value: shape mismatch");
  node_->value = std::move(v);
}

void backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined loss");
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be scalar");
  auto root = loss.node();
  if (root->backward_done)
    throw std::runtime_error("backward: already run on this graph; rebuild it");
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Post-order DFS over parents; children appear before parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Fresh gradients for every interior node of this graph; leaves keep
  // whatever they have accumulated so optimizers can sum across graphs.
  for (TensorNode* n : order)
    if (n->backprop) n->grad_touched = false;

  root->ensure_grad();
  root->grad(0, 0) += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backprop) continue;
    if (!n->grad_touched) continue;
    if (!n->grad.allFinite())
      throw std::runtime_error("backward: non-finite gradient encountered");
    n->backprop(*n);
  }
}

namespace {

enum class Shape { Same, Scalar, Row, Col };

Shape classify(Eigen::Index r, Eigen::Index c, Eigen::Index R, Eigen::Index C) {
  if (r == R && c == C) return Shape::Same;
  if (r == 1 && c == 1) return Shape::Scalar;
  if (r == 1 && c == C) return Shape::Row;
  if (c == 1 && r == R) return Shape::Col;
  throw std::invalid_argument("Tensor op: incompatible shapes");
}

Matrix expand(const Matrix& m, Eigen::Index R, Eigen::Index C) {
  switch (classify(m.rows(), m.cols(), R, C)) {
    case Shape::Same: return m;
    case Shape::Scalar: return Matrix::Constant(R, C, m(0, 0));
    case Shape::Row: return m.replicate(R, 1);
    case Shape::Col: return m.replicate(1, C);
  }
  return m;  // unreachable
}

Matrix reduce_to(const Matrix& G, Eigen::Index r, Eigen::Index c) {
  switch (classify(r, c, G.rows(), G.cols())) {
    case Shape::Same: return G;
    case Shape::Scalar: return Matrix::Constant(1, 1, G.sum());
    case Shape::Row: return G.colwise().sum();
    case Shape::Col: return G.rowwise().sum();
  }
  return G;  // unreachable
}

std::pair<Eigen::Index, Eigen::Index> joint_shape(const Tensor& a,
                                                  const Tensor& b) {
  const Eigen::Index R = std::max(a.rows(), b.rows());
  const Eigen::Index C = std::max(a.cols(), b.cols());
  classify(a.rows(), a.cols(), R, C);
  classify(b.rows(), b.cols(), R, C);
  return {R, C};
}

using Parents = std::vector<std::shared_ptr<TensorNode>>;

Tensor node_op(Matrix value, Parents parents,
               std::function<void(TensorNode&)> backprop) {
  if (!value.allFinite())
    throw std::runtime_error("Tensor op produced a non-finite value");
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) node->requires_grad = true;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return detail::make_tensor(std::move(node));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto [R, C] = joint_shape(a, b);
  Matrix v = expand(a.value(), R, C) + expand(b.value(), R, C);
  return node_op(std::move(v), {a.node(), b.node()}, [](TensorNode& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad += reduce_to(self.grad, p->value.rows(), p->value.cols());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto [R, C] = joint_shape(a, b);
  Matrix v = expand(a.value(), R, C) - expand(b.value(), R, C);
  return node_op(std::move(v), {a.node(), b.node()}, [](TensorNode& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      Matrix g = reduce_to(self.grad, p->value.rows(), p->value.cols());
      p->grad += (k == 0) ? g : Matrix(-g);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto [R, C] = joint_shape(a, b);
  Matrix v = expand(a.value(), R, C).cwiseProduct(expand(b.value(), R, C));
  return node_op(std::move(v), {a.node(), b.node()}, [R = R, C = C](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      Matrix g = self.grad.cwiseProduct(expand(pb->value, R, C));
      pa->grad += reduce_to(g, pa->value.rows(), pa->value.cols());
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      Matrix g = self.grad.cwiseProduct(expand(pa->value, R, C));
      pb->grad += reduce_to(g, pb->value.rows(), pb->value.cols());
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto [R, C] = joint_shape(a, b);
  Matrix v = expand(a.value(), R, C).cwiseQuotient(expand(b.value(), R, C));
  return node_op(std::move(v), {a.node(), b.node()}, [R = R, C = C](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const Matrix be = expand(pb->value, R, C);
    if (pa->requires_grad) {
      pa->ensure_grad();
      Matrix g = self.grad.cwiseQuotient(be);
      pa->grad += reduce_to(g, pa->value.rows(), pa->value.cols());
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      Matrix g = -self.grad.cwiseProduct(self.value).cwiseQuotient(be);
      pb->grad += reduce_to(g, pb->value.rows(), pb->value.cols());
    }
  });
}

Tensor neg(const Tensor& a) { return scalar_mul(-1.0, a); }

Tensor scalar_mul(double s, const Tensor& a) {
  return node_op(Matrix(s * a.value()), {a.node()}, [s](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad += s * self.grad;
  });
}

Tensor scalar_add(double s, const Tensor& a) {
  return node_op(Matrix(a.value().array() + s), {a.node()},
                 [](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad;
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix v = a.value() * b.value();
  return node_op(std::move(v), {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad.noalias() += self.grad * pb->value.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad.noalias() += pa->value.transpose() * self.grad;
    }
  });
}

Tensor transpose(const Tensor& a) {
  return node_op(Matrix(a.value().transpose()), {a.node()},
                 [](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad.transpose();
                 });
}

namespace {

Tensor unary_op(const Tensor& a, Matrix value,
                std::function<Matrix(const TensorNode&)> local_grad) {
  return node_op(std::move(value), {a.node()},
                 [lg = std::move(local_grad)](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad.cwiseProduct(lg(self));
                 });
}

}  // namespace

Tensor exp(const Tensor& a) {
  return unary_op(a, a.value().array().exp(),
                  [](const TensorNode& self) { return self.value; });
}

Tensor log(const Tensor& a) {
  return unary_op(a, a.value().array().log(), [](const TensorNode& self) {
    return Matrix(self.parents[0]->value.cwiseInverse());
  });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, a.value().array().tanh(), [](const TensorNode& self) {
    return Matrix(1.0 - self.value.array().square());
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, a.value().cwiseMax(0.0), [](const TensorNode& self) {
    return Matrix(
        (self.parents[0]->value.array() > 0.0).cast<double>());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp()));
  return unary_op(a, std::move(v), [](const TensorNode& self) {
    return Matrix(self.value.array() * (1.0 - self.value.array()));
  });
}

Tensor square(const Tensor& a) {
  return unary_op(a, a.value().array().square(), [](const TensorNode& self) {
    return Matrix(2.0 * self.parents[0]->value);
  });
}

Tensor sum(const Tensor& a) {
  return node_op(Matrix::Constant(1, 1, a.value().sum()), {a.node()},
                 [](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad.array() += self.grad(0, 0);
                 });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  return node_op(Matrix::Constant(1, 1, a.value().sum() * inv), {a.node()},
                 [inv](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad.array() += self.grad(0, 0) * inv;
                 });
}

Tensor row_sum(const Tensor& a) {
  return node_op(Matrix(a.value().rowwise().sum()), {a.node()},
                 [](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad.replicate(1, p->value.cols());
                 });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 1 && start + count <= a.rows(),
          "slice_rows: out of range");
  return node_op(Matrix(a.value().middleRows(start, count)), {a.node()},
                 [start, count](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad.middleRows(start, count) += self.grad;
                 });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 1 && start + count <= a.cols(),
          "slice_cols: out of range");
  return node_op(Matrix(a.value().middleCols(start, count)), {a.node()},
                 [start, count](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad.middleCols(start, count) += self.grad;
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), "concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  return node_op(std::move(v), {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += self.grad.leftCols(pa->value.cols());
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad += self.grad.rightCols(pb->value.cols());
    }
  });
}

Tensor fused_op(Matrix value, const std::vector<Tensor>& parents,
                FusedBackward backward) {
  Parents nodes;
  nodes.reserve(parents.size());
  for (const auto& p : parents) nodes.push_back(p.node());
  return node_op(
      std::move(value), std::move(nodes),
      [bw = std::move(backward)](TensorNode& self) {
        std::vector<const Matrix*> values(self.parents.size());
        std::vector<Matrix*> grads(self.parents.size(), nullptr);
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
          values[i] = &self.parents[i]->value;
          if (self.parents[i]->requires_grad) {
            self.parents[i]->ensure_grad();
            grads[i] = &self.parents[i]->grad;
          }
        }
        bw(self.grad, values, grads);
      });
}

namespace {

void warn_degenerate_spectrum(const Vector& S) {
  if (S.size() < 2 || S(0) <= 0.0) return;
  double min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < S.size(); ++k)
    min_gap = std::min(min_gap, S(k) - S(k + 1));
  if (min_gap < 1e-8 * S(0)) {
    static std::atomic<int> warnings{0};
    if (warnings.fetch_add(1) < 5)
      std::cerr << "[ceb] nuclear_norm: near-degenerate singular values, "
                   "gradient is a subgradient\n";
  }
}

}  // namespace

Tensor nuclear_norm(const Tensor& a) {
  SvdResult dec = svd(a.value());
  warn_degenerate_spectrum(dec.S);
  Matrix uv = dec.U * dec.V.transpose();
  return node_op(Matrix::Constant(1, 1, dec.S.sum()), {a.node()},
                 [uv = std::move(uv)](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad(0, 0) * uv;
                 });
}

Tensor normalized_singular_sum(const Tensor& a) {
  SvdResult dec = svd(a.value());
  const double s1 = dec.S(0);
  if (s1 <= 0.0)
    throw std::invalid_argument("normalized_singular_sum: zero matrix");
  const double total = dec.S.sum();
  Matrix g = dec.U * dec.V.transpose() / s1 -
             (total / (s1 * s1)) * (dec.U.col(0) * dec.V.col(0).transpose());
  return node_op(Matrix::Constant(1, 1, total / s1), {a.node()},
                 [g = std::move(g)](TensorNode& self) {
                   auto& p = self.parents[0];
                   p->ensure_grad();
                   p->grad += self.grad(0, 0) * g;
                 });
}

FiniteDiffReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Matrix& x0,
    double h) {
  Tensor x = Tensor::parameter(x0);
  Tensor loss = f(x);
  backward(loss);
  const Matrix g = x.grad();

  FiniteDiffReport report;
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    for (Eigen::Index j = 0; j < x0.cols(); ++j) {
      Matrix xp = x0, xm = x0;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fp = f(Tensor::constant(xp)).scalar_value();
      const double fm = f(Tensor::constant(xm)).scalar_value();
      const double fd = (fp - fm) / (2.0 * h);
      const double denom =
          std::max({std::abs(g(i, j)), std::abs(fd), 1e-6});
      const double rel = std::abs(g(i, j) - fd) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_row = i;
        report.worst_col = j;
      }
    }
  }
  return report;
}

}  // namespace ceb
