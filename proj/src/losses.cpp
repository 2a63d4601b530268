#include "ceb/losses.hpp"

#include "ceb/gram.hpp"

#include <cmath>
#include <numbers>

namespace ceb {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double gauss_zero(double variance, Eigen::Index d, bool stabilized) {
  if (stabilized) return 1.0;
  return std::pow(kTwoPi * variance, -0.5 * static_cast<double>(d));
}

void check_positive(const Tensor& t, const char* what) {
  if (!(t.scalar_value() > 0.0))
    throw std::runtime_error(std::string(what) +
                             " underflowed to zero; variances too small for "
                             "the sample spread");
}

// Row-wise Gaussian differences between two equally shaped batches:
// entry n is N(a_n - b_n; v), as an N x 1 tensor.
Tensor ad_gauss_rowwise(const Tensor& a, const Tensor& b, double variance,
                        bool stabilized) {
  const Eigen::Index d = a.cols();
  Tensor sq = row_sum(square(sub(a, b)));
  Tensor msq = scalar_mul(1.0 / static_cast<double>(d), sq);
  return ad_gauss(msq, variance, d, stabilized);
}

// Row-wise Gaussians between two value matrices: N(a_n - b_n; v) per row.
Vector gauss_rows(const Matrix& a, const Matrix& b, double variance,
                  bool stabilized) {
  const double d = static_cast<double>(a.cols());
  const Vector sq = (a - b).array().square().rowwise().sum();
  if (stabilized) return (-sq.array() / (2.0 * variance * d)).exp();
  const double logc =
      -0.5 * d * std::log(kTwoPi * variance);
  return ((-sq.array() / (2.0 * variance)) + logc).exp();
}

// Fused reduction: sum over all fan pairs i < j and all rows of
// N(F_i[n] - F_j[n]; v). One graph node regardless of K.
Tensor fan_pair_gauss_sum(const std::vector<Tensor>& fans, double variance,
                          bool stabilized) {
  const int K = static_cast<int>(fans.size());
  const double d = static_cast<double>(fans.front().cols());
  const double expo_scale = stabilized ? 1.0 / (variance * d) : 1.0 / variance;
  double total = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      total += gauss_rows(fans[i].value(), fans[j].value(), variance,
                          stabilized)
                   .sum();
  return fused_op(
      Matrix::Constant(1, 1, total), fans,
      [variance, stabilized, expo_scale](
          const Matrix& upstream, const std::vector<const Matrix*>& values,
          const std::vector<Matrix*>& grads) {
        const double g = upstream(0, 0);
        const int K = static_cast<int>(values.size());
        for (int i = 0; i < K; ++i) {
          for (int j = i + 1; j < K; ++j) {
            if (!grads[i] && !grads[j]) continue;
            const Matrix delta = *values[i] - *values[j];
            const Vector e =
                gauss_rows(*values[i], *values[j], variance, stabilized);
            const Matrix contrib =
                (g * expo_scale) * (e.asDiagonal() * delta);
            if (grads[i]) *grads[i] -= contrib;
            if (grads[j]) *grads[j] += contrib;
          }
        }
      });
}

// Fused reduction: sum over fan members and rows of N(X_n - F_k[n]; v).
Tensor fan_cross_gauss_sum(const Matrix& X, const std::vector<Tensor>& fans,
                           double variance, bool stabilized) {
  const double d = static_cast<double>(X.cols());
  const double expo_scale = stabilized ? 1.0 / (variance * d) : 1.0 / variance;
  double total = 0.0;
  for (const auto& f : fans)
    total += gauss_rows(X, f.value(), variance, stabilized).sum();
  return fused_op(
      Matrix::Constant(1, 1, total), fans,
      [X, variance, stabilized, expo_scale](
          const Matrix& upstream, const std::vector<const Matrix*>& values,
          const std::vector<Matrix*>& grads) {
        const double g = upstream(0, 0);
        for (std::size_t k = 0; k < values.size(); ++k) {
          if (!grads[k]) continue;
          const Matrix delta = X - *values[k];
          const Vector e = gauss_rows(X, *values[k], variance, stabilized);
          *grads[k] += (g * expo_scale) * (e.asDiagonal() * delta);
        }
      });
}

}  // namespace

Tensor ad_sq_dists(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "ad_sq_dists: dimension mismatch");
  const double d = static_cast<double>(a.cols());
  Tensor ra = row_sum(square(a));                       // N x 1
  Tensor rb = transpose(row_sum(square(b)));            // 1 x K
  Tensor cross = matmul(a, transpose(b));               // N x K
  Tensor m = sub(add(ra, rb), scalar_mul(2.0, cross));
  return relu(scalar_mul(1.0 / d, m));
}

Tensor ad_gauss(const Tensor& msq, double variance, Eigen::Index d,
                bool stabilized) {
  require(variance > 0.0, "ad_gauss: variance must be > 0");
  if (stabilized) return exp(scalar_mul(-0.5 / variance, msq));
  const double dd = static_cast<double>(d);
  Tensor e = exp(scalar_mul(-0.5 * dd / variance, msq));
  return scalar_mul(gauss_zero(variance, d, false), e);
}

void LossConfig::validate() const {
  require(v_p > 0.0 && v_q > 0.0, "LossConfig: variances must be > 0");
  require(epsilon >= 0.0, "LossConfig: epsilon must be >= 0");
  if (!allow_unequal_variances)
    require(v_p == v_q,
            "LossConfig: v_p != v_q (set allow_unequal_variances to override)");
}

Tensor kl_mdn_cost(const Matrix& X, const Tensor& Xgen,
                   const LossConfig& cfg) {
  cfg.validate();
  require(X.rows() > 0 && Xgen.rows() > 0, "kl_mdn_cost: empty batch");
  require(X.cols() == Xgen.cols(), "kl_mdn_cost: dimension mismatch");
  const double K = static_cast<double>(Xgen.rows());
  Tensor G = ad_gauss(ad_sq_dists(Tensor::constant(X), Xgen), cfg.v_q,
                      X.cols(), cfg.stabilized);
  Tensor per_sample = scalar_mul(1.0 / K, row_sum(G));
  return mean(log(scalar_add(cfg.epsilon, per_sample)));
}

NipResult nip_cost(const Matrix& X, const Tensor& Xgen,
                   const LossConfig& cfg) {
  cfg.validate();
  require(X.rows() > 0 && Xgen.rows() > 0, "nip_cost: empty batch");
  require(X.cols() == Xgen.cols(), "nip_cost: dimension mismatch");
  const Eigen::Index d = X.cols();

  Tensor Xc = Tensor::constant(X);
  Tensor inner = mean(
      ad_gauss(ad_sq_dists(Xc, Xgen), cfg.v_p + cfg.v_q, d, cfg.stabilized));
  Tensor q_norm = mean(
      ad_gauss(ad_sq_dists(Xgen, Xgen), 2.0 * cfg.v_q, d, cfg.stabilized));
  check_positive(q_norm, "nip_cost: <q,q>");

  const double p_norm =
      gauss_diff_matrix(X, X, 2.0 * cfg.v_p, cfg.stabilized).mean();
  return NipResult{div(square(inner), q_norm), inner, q_norm, p_norm};
}

Tensor nuclear_cost(const Matrix& X, const Tensor& Xgen, double v) {
  require(X.rows() > 0 && Xgen.rows() > 0, "nuclear_cost: empty batch");
  require(X.cols() == Xgen.cols(), "nuclear_cost: dimension mismatch");
  Tensor G =
      ad_gauss(ad_sq_dists(Tensor::constant(X), Xgen), v, X.cols(), true);
  Tensor cost = nuclear_norm(G);
  const double cap = std::sqrt(static_cast<double>(X.rows()) *
                               static_cast<double>(Xgen.rows()));
  if (cost.scalar_value() > cap * (1.0 + 1e-8))
    throw std::runtime_error("nuclear_cost: value exceeds the Gram bound");
  return cost;
}

Tensor elbo_nuclear_cost(const Matrix& X, const Tensor& Xgen, const Matrix& Y,
                         const Tensor& Ygen, double vX, double vY) {
  require(vX > 0.0 && vY > 0.0, "elbo_nuclear_cost: variances must be > 0");
  require(X.rows() == Xgen.rows() && X.rows() == Y.rows() &&
              Y.rows() == Ygen.rows(),
          "elbo_nuclear_cost: batch sizes must match");
  require(X.cols() == Xgen.cols() && Y.cols() == Ygen.cols(),
          "elbo_nuclear_cost: dimension mismatch");
  Tensor MX = ad_sq_dists(Tensor::constant(X), Xgen);
  Tensor MY = ad_sq_dists(Tensor::constant(Y), Ygen);
  Tensor S = add(scalar_mul(-0.5 / vX, MX), scalar_mul(-0.5 / vY, MY));
  return nuclear_norm(exp(S));
}

CondNipResult conditional_nip_cost(const Matrix& X, const ReconFan& recon,
                                   const LossConfig& cfg) {
  cfg.validate();
  require(recon.k() >= 1, "conditional_nip_cost: K must be >= 1");
  require(recon.n() == X.rows() && recon.dim() == X.cols(),
          "conditional_nip_cost: fan shape mismatch");
  const Eigen::Index d = X.cols();
  const double N = static_cast<double>(X.rows());
  const double K = static_cast<double>(recon.k());

  Tensor inner = scalar_mul(
      1.0 / (N * K),
      fan_cross_gauss_sum(X, recon.recon, cfg.v_p + cfg.v_q, cfg.stabilized));

  // Within-fan pairwise terms only; the i == j diagonal is the constant
  // N(0; 2 v_q) per sample and carries no gradient.
  const double diag = K * N * gauss_zero(2.0 * cfg.v_q, d, cfg.stabilized);
  Tensor q_norm;
  if (recon.k() == 1) {
    q_norm = Tensor::scalar(diag / (N * K * K));
  } else {
    Tensor off = fan_pair_gauss_sum(recon.recon, 2.0 * cfg.v_q,
                                    cfg.stabilized);
    q_norm = scalar_mul(1.0 / (N * K * K),
                        scalar_add(diag, scalar_mul(2.0, off)));
  }
  check_positive(q_norm, "conditional_nip_cost: ||q(X|Y)||^2");
  return CondNipResult{div(square(inner), q_norm), inner, q_norm};
}

namespace {

// Plain per-dimension-variance Gaussian rows: N(delta_n; V_n) with the
// normalizing constants kept (they carry the variance gradients).
Vector plain_gauss_rows(const Matrix& delta, const Matrix& V) {
  const Vector e = (delta.array().square() / (2.0 * V.array()))
                       .rowwise()
                       .sum();
  const Vector logc =
      (0.5 * (kTwoPi * V.array()).log()).rowwise().sum();
  return (-e - logc).array().exp();
}

// Fused cross term of the parametric conditional cost:
// sum_{n,k} w_k[n] N(X_n - m_k[n]; v_p + v_k[n]).
// Parents are laid out means[0..K), variances[0..K), weights[0..K).
Tensor parametric_cross_sum(const Matrix& X, const ParametricFan& fan,
                            double v_p) {
  const int K = fan.k();
  std::vector<Tensor> parents;
  for (const auto& t : fan.means) parents.push_back(t);
  for (const auto& t : fan.variances) parents.push_back(t);
  for (const auto& t : fan.weights) parents.push_back(t);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const Matrix V =
        fan.variances[static_cast<std::size_t>(k)].value().array() + v_p;
    const Vector G =
        plain_gauss_rows(X - fan.means[static_cast<std::size_t>(k)].value(),
                         V);
    total +=
        fan.weights[static_cast<std::size_t>(k)].value().col(0).dot(G);
  }
  return fused_op(
      Matrix::Constant(1, 1, total), parents,
      [X, v_p, K](const Matrix& upstream,
                  const std::vector<const Matrix*>& values,
                  const std::vector<Matrix*>& grads) {
        const double g = upstream(0, 0);
        for (int k = 0; k < K; ++k) {
          const Matrix& m = *values[k];
          const Matrix V = values[K + k]->array() + v_p;
          const Vector w = values[2 * K + k]->col(0);
          const Matrix delta = X - m;
          const Vector G = plain_gauss_rows(delta, V);
          const Vector t = w.cwiseProduct(G);
          if (grads[k])
            *grads[k] +=
                (g * t).asDiagonal() * Matrix(delta.cwiseQuotient(V));
          if (grads[K + k]) {
            const Matrix dv =
                delta.array().square() / (2.0 * V.array().square()) -
                0.5 / V.array();
            *grads[K + k] += (g * t).asDiagonal() * dv;
          }
          if (grads[2 * K + k]) grads[2 * K + k]->col(0) += g * G;
        }
      });
}

// Fused q-side term: sum_{n} sum_{i,j} w_i w_j N(m_i - m_j; v_i + v_j),
// including the i == j diagonal whose variance gradient regularizes the
// trainable spreads.
Tensor parametric_pair_sum(const ParametricFan& fan) {
  const int K = fan.k();
  std::vector<Tensor> parents;
  for (const auto& t : fan.means) parents.push_back(t);
  for (const auto& t : fan.variances) parents.push_back(t);
  for (const auto& t : fan.weights) parents.push_back(t);
  auto term = [](const Matrix& mi, const Matrix& mj, const Matrix& vi,
                 const Matrix& vj, const Vector& wi, const Vector& wj) {
    return Vector(wi.cwiseProduct(wj).cwiseProduct(
        plain_gauss_rows(mi - mj, vi + vj)));
  };
  double total = 0.0;
  for (int i = 0; i < K; ++i) {
    for (int j = i; j < K; ++j) {
      const double f = i == j ? 1.0 : 2.0;
      total += f * term(fan.means[i].value(), fan.means[j].value(),
                        fan.variances[i].value(), fan.variances[j].value(),
                        fan.weights[i].value().col(0),
                        fan.weights[j].value().col(0))
                       .sum();
    }
  }
  return fused_op(
      Matrix::Constant(1, 1, total), parents,
      [K](const Matrix& upstream, const std::vector<const Matrix*>& values,
          const std::vector<Matrix*>& grads) {
        const double g = upstream(0, 0);
        for (int i = 0; i < K; ++i) {
          for (int j = i; j < K; ++j) {
            const double f = (i == j ? 1.0 : 2.0) * g;
            const Matrix& mi = *values[i];
            const Matrix& mj = *values[j];
            const Matrix V = *values[K + i] + *values[K + j];
            const Vector wi = values[2 * K + i]->col(0);
            const Vector wj = values[2 * K + j]->col(0);
            const Matrix delta = mi - mj;
            const Vector G = plain_gauss_rows(delta, V);
            const Vector t = wi.cwiseProduct(wj).cwiseProduct(G);
            if (grads[i] || grads[j]) {
              const Matrix dm =
                  (f * t).asDiagonal() * Matrix(delta.cwiseQuotient(V));
              if (grads[i]) *grads[i] -= dm;
              if (grads[j]) *grads[j] += dm;
            }
            const Matrix dv =
                delta.array().square() / (2.0 * V.array().square()) -
                0.5 / V.array();
            const Matrix dvg = (f * t).asDiagonal() * dv;
            if (grads[K + i]) *grads[K + i] += dvg;
            if (grads[K + j]) *grads[K + j] += dvg;
            if (grads[2 * K + i])
              grads[2 * K + i]->col(0) += f * wj.cwiseProduct(G);
            if (grads[2 * K + j])
              grads[2 * K + j]->col(0) += f * wi.cwiseProduct(G);
          }
        }
      });
}

}  // namespace

ParametricResult parametric_mixture_cost(const Matrix& X, const Tensor& means,
                                         const Tensor& weights,
                                         const Tensor& variances,
                                         const LossConfig& cfg) {
  require(!cfg.stabilized,
          "parametric_mixture_cost: trainable variances need plain densities");
  require(cfg.v_p > 0.0, "parametric_mixture_cost: v_p must be > 0");
  const Eigen::Index K = means.rows();
  const Eigen::Index d = means.cols();
  require(X.cols() == d, "parametric_mixture_cost: dimension mismatch");
  require(weights.rows() == K && weights.cols() == 1,
          "parametric_mixture_cost: weights must be K x 1");
  require(variances.rows() == K && variances.cols() == d,
          "parametric_mixture_cost: variances must be K x d");
  require((variances.value().array() > 0.0).all(),
          "parametric_mixture_cost: variances must be > 0");
  require((weights.value().array() >= 0.0).all(),
          "parametric_mixture_cost: negative weight");
  if (std::abs(weights.value().sum() - 1.0) > 1e-8)
    throw std::invalid_argument(
        "parametric_mixture_cost: weights must sum to 1");

  const double N = static_cast<double>(X.rows());

  // inner = (1/N) sum_n sum_k w_k N(X_n - m_k; v_p + v_k), built
  // dimension by dimension since the variances vary per (k, l).
  Tensor e_cross, logc_cross;
  for (Eigen::Index l = 0; l < d; ++l) {
    Tensor xl = Tensor::constant(X.col(l));                  // N x 1
    Tensor ml = transpose(slice_cols(means, l, 1));          // 1 x K
    Tensor vl = scalar_add(cfg.v_p,
                           transpose(slice_cols(variances, l, 1)));  // 1 x K
    Tensor term = div(square(sub(xl, ml)), scalar_mul(2.0, vl));     // N x K
    Tensor lc = scalar_mul(0.5, log(scalar_mul(kTwoPi, vl)));        // 1 x K
    e_cross = l == 0 ? term : add(e_cross, term);
    logc_cross = l == 0 ? lc : add(logc_cross, lc);
  }
  Tensor G_cross = exp(neg(add(e_cross, logc_cross)));
  Tensor inner =
      scalar_mul(1.0 / N, sum(mul(G_cross, transpose(weights))));

  // q_norm = sum_{i,j} w_i w_j N(m_i - m_j; v_i + v_j).
  Tensor e_qq, logc_qq;
  for (Eigen::Index l = 0; l < d; ++l) {
    Tensor ml = slice_cols(means, l, 1);                     // K x 1
    Tensor vl = slice_cols(variances, l, 1);                 // K x 1
    Tensor V = add(vl, transpose(vl));                       // K x K
    Tensor term = div(square(sub(ml, transpose(ml))), scalar_mul(2.0, V));
    Tensor lc = scalar_mul(0.5, log(scalar_mul(kTwoPi, V)));
    e_qq = l == 0 ? term : add(e_qq, term);
    logc_qq = l == 0 ? lc : add(logc_qq, lc);
  }
  Tensor G_qq = exp(neg(add(e_qq, logc_qq)));
  Tensor q_norm = sum(mul(matmul(weights, transpose(weights)), G_qq));
  check_positive(q_norm, "parametric_mixture_cost: <q,q>");

  return ParametricResult{div(square(inner), q_norm), inner, q_norm};
}

ParametricResult parametric_conditional_cost(const Matrix& X,
                                             const ParametricFan& fan,
                                             const LossConfig& cfg) {
  require(!cfg.stabilized,
          "parametric_conditional_cost: trainable variances need plain "
          "densities");
  require(cfg.v_p > 0.0, "parametric_conditional_cost: v_p must be > 0");
  const int K = fan.k();
  require(K >= 1, "parametric_conditional_cost: K must be >= 1");
  require(fan.variances.size() == fan.means.size() &&
              fan.weights.size() == fan.means.size(),
          "parametric_conditional_cost: fan parts disagree");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double N = static_cast<double>(n);

  Matrix wsum = Matrix::Zero(n, 1);
  for (int k = 0; k < K; ++k) {
    require(fan.means[k].rows() == n && fan.means[k].cols() == d,
            "parametric_conditional_cost: mean shape mismatch");
    require(fan.variances[k].rows() == n && fan.variances[k].cols() == d,
            "parametric_conditional_cost: variance shape mismatch");
    require(fan.weights[k].rows() == n && fan.weights[k].cols() == 1,
            "parametric_conditional_cost: weight shape mismatch");
    require((fan.variances[k].value().array() > 0.0).all(),
            "parametric_conditional_cost: variances must be > 0");
    require((fan.weights[k].value().array() >= 0.0).all(),
            "parametric_conditional_cost: negative weight");
    wsum += fan.weights[k].value();
  }
  if ((wsum.array() - 1.0).abs().maxCoeff() > 1e-8)
    throw std::invalid_argument(
        "parametric_conditional_cost: per-sample weights must sum to 1");

  Tensor inner = scalar_mul(1.0 / N, parametric_cross_sum(X, fan, cfg.v_p));
  Tensor q_norm = scalar_mul(1.0 / N, parametric_pair_sum(fan));
  check_positive(q_norm, "parametric_conditional_cost: ||q(X|Y)||^2");

  return ParametricResult{div(square(inner), q_norm), inner, q_norm};
}

}  // namespace ceb
