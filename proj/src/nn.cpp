#include "ceb/nn.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace ceb {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::SigmoidShift: return "sigmoid_shift";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "sigmoid_shift") return Activation::SigmoidShift;
  throw std::invalid_argument("unknown activation: " + name);
}

namespace {

Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::Linear: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::SigmoidShift: return scalar_add(0.1, sigmoid(x));
  }
  return x;
}

Matrix apply_activation_values(Matrix x, Activation a) {
  switch (a) {
    case Activation::Linear: return x;
    case Activation::Tanh: return x.array().tanh();
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Sigmoid: return 1.0 / (1.0 + (-x.array()).exp());
    case Activation::SigmoidShift:
      return 0.1 + 1.0 / (1.0 + (-x.array()).exp());
  }
  return x;
}

}  // namespace

MlpNetwork::MlpNetwork(std::vector<int> widths, Rng& rng, Activation hidden,
                       Activation output)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  require(widths_.size() >= 2, "MlpNetwork: need at least input and output");
  for (int w : widths_) require(w > 0, "MlpNetwork: widths must be positive");
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    const int fan_in = widths_[i], fan_out = widths_[i + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    weights_.push_back(Tensor::parameter(std::move(w)));
    biases_.push_back(Tensor::parameter(Matrix::Zero(1, fan_out)));
  }
}

MlpNetwork::MlpNetwork(std::vector<int> widths, Activation hidden,
                       Activation output, std::vector<Matrix> weights,
                       std::vector<Matrix> biases)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  require(weights.size() + 1 == widths_.size() &&
              biases.size() == weights.size(),
          "MlpNetwork: parameter count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require(weights[i].rows() == widths_[i] &&
                weights[i].cols() == widths_[i + 1] &&
                biases[i].rows() == 1 && biases[i].cols() == widths_[i + 1],
            "MlpNetwork: parameter shape mismatch");
    require(weights[i].allFinite() && biases[i].allFinite(),
            "MlpNetwork: non-finite parameters");
    weights_.push_back(Tensor::parameter(std::move(weights[i])));
    biases_.push_back(Tensor::parameter(std::move(biases[i])));
  }
}

Tensor MlpNetwork::forward(const Tensor& x) const {
  require(x.cols() == input_width(), "MlpNetwork: input width mismatch");
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = add(matmul(h, weights_[i]), biases_[i]);
    h = apply_activation(h, i + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

Matrix MlpNetwork::forward_values(const Matrix& x) const {
  require(x.cols() == input_width(), "MlpNetwork: input width mismatch");
  Matrix h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Matrix z = h * weights_[i].value();
    z.rowwise() += biases_[i].value().row(0);
    h = apply_activation_values(
        std::move(z), i + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

std::vector<Tensor> MlpNetwork::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

void to_json(nlohmann::json& j, const MlpNetwork& net) {
  j = nlohmann::json{{"widths", net.widths()},
                     {"hidden", activation_name(net.hidden_activation())},
                     {"output", activation_name(net.output_activation())}};
  auto flat = [](const Matrix& m) {
    std::vector<double> v(m.data(), m.data() + m.size());
    return v;
  };
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& w : net.weights()) weights.push_back(flat(w.value()));
  for (const auto& b : net.biases()) biases.push_back(flat(b.value()));
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
}

MlpNetwork network_from_json(const nlohmann::json& j) {
  const auto widths = j.at("widths").get<std::vector<int>>();
  const auto hidden = activation_from_name(j.at("hidden").get<std::string>());
  const auto output = activation_from_name(j.at("output").get<std::string>());
  std::vector<Matrix> weights, biases;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto wv = j.at("weights").at(i).get<std::vector<double>>();
    const auto bv = j.at("biases").at(i).get<std::vector<double>>();
    const Eigen::Index r = widths[i], c = widths[i + 1];
    if (static_cast<Eigen::Index>(wv.size()) != r * c ||
        static_cast<Eigen::Index>(bv.size()) != c)
      throw std::runtime_error("checkpoint: parameter size mismatch");
    weights.push_back(Eigen::Map<const Matrix>(wv.data(), r, c));
    biases.push_back(Eigen::Map<const Matrix>(bv.data(), 1, c));
  }
  return MlpNetwork(widths, hidden, output, std::move(weights),
                    std::move(biases));
}

int PriorSpec::width() const {
  switch (kind) {
    case PriorKind::Uniform: return uniform_dim;
    case PriorKind::Categorical: return categories;
    case PriorKind::Hybrid: return uniform_dim + categories;
  }
  return 0;
}

void PriorSpec::validate() const {
  require(uniform_dim >= 0, "PriorSpec: negative uniform dimension");
  require(categories == 0 || categories >= 2,
          "PriorSpec: categorical prior needs at least 2 states");
  if (kind == PriorKind::Categorical)
    require(categories >= 2, "PriorSpec: categorical prior needs states");
  if (kind == PriorKind::Hybrid)
    require(uniform_dim > 0 && categories >= 2,
            "PriorSpec: hybrid prior needs both parts");
}

Matrix sample_prior(const PriorSpec& prior, int count, Rng& rng) {
  prior.validate();
  require(count >= 1, "sample_prior: count must be >= 1");
  Matrix out = Matrix::Zero(count, prior.width());
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int u = (prior.kind == PriorKind::Categorical) ? 0 : prior.uniform_dim;
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < u; ++j) out(i, j) = unif(rng);
  if (prior.kind != PriorKind::Uniform) {
    std::uniform_int_distribution<int> cat(0, prior.categories - 1);
    for (int i = 0; i < count; ++i) out(i, u + cat(rng)) = 1.0;
  }
  return out;
}

namespace {

Matrix one_hot_noise(const PriorSpec& prior, int count, int state) {
  Matrix out = Matrix::Zero(count, prior.width());
  out.col(state).setOnes();
  return out;
}

// Draw (or enumerate) the K noise batches shared by both decode paths.
std::vector<Matrix> decode_noises(const PriorSpec& prior, Eigen::Index n,
                                  int K, Rng& rng, bool enumerate) {
  std::vector<Matrix> noises;
  if (prior.width() == 0) return noises;
  prior.validate();
  if (enumerate) {
    require(prior.kind == PriorKind::Categorical,
            "mixture_decode: enumeration needs a pure categorical prior");
    require(K == prior.categories,
            "mixture_decode: enumeration requires K == category count");
    for (int k = 0; k < K; ++k)
      noises.push_back(one_hot_noise(prior, static_cast<int>(n), k));
  } else {
    for (int k = 0; k < K; ++k)
      noises.push_back(sample_prior(prior, static_cast<int>(n), rng));
  }
  return noises;
}

}  // namespace

ReconFan mixture_decode(const MlpNetwork& dec, const Tensor& Y,
                        const PriorSpec& prior, int K, Rng& rng,
                        DecodeMode mode, bool enumerate_categories) {
  require(K >= 1, "mixture_decode: K must be >= 1");
  ReconFan fan;
  if (mode == DecodeMode::OutputHeads) {
    require(dec.input_width() == Y.cols(),
            "mixture_decode: decoder input width mismatch");
    require(dec.output_width() % K == 0,
            "mixture_decode: output width not divisible by K");
    const Eigen::Index d = dec.output_width() / K;
    Tensor all = dec.forward(Y);
    for (int k = 0; k < K; ++k)
      fan.recon.push_back(slice_cols(all, k * d, d));
    return fan;
  }
  require(dec.input_width() == Y.cols() + prior.width(),
          "mixture_decode: decoder input width mismatch");
  auto noises = decode_noises(prior, Y.rows(), K, rng, enumerate_categories);
  for (int k = 0; k < K; ++k) {
    Tensor in = noises.empty()
                    ? Y
                    : concat_cols(Y, Tensor::constant(noises[k]));
    fan.recon.push_back(dec.forward(in));
  }
  return fan;
}

std::vector<Matrix> mixture_decode_values(const MlpNetwork& dec,
                                          const Matrix& Y,
                                          const PriorSpec& prior, int K,
                                          Rng& rng, DecodeMode mode,
                                          bool enumerate_categories) {
  require(K >= 1, "mixture_decode: K must be >= 1");
  std::vector<Matrix> fan;
  if (mode == DecodeMode::OutputHeads) {
    require(dec.output_width() % K == 0,
            "mixture_decode: output width not divisible by K");
    const Eigen::Index d = dec.output_width() / K;
    Matrix all = dec.forward_values(Y);
    for (int k = 0; k < K; ++k) fan.push_back(all.middleCols(k * d, d));
    return fan;
  }
  require(dec.input_width() == Y.cols() + prior.width(),
          "mixture_decode: decoder input width mismatch");
  auto noises = decode_noises(prior, Y.rows(), K, rng, enumerate_categories);
  for (int k = 0; k < K; ++k) {
    if (noises.empty()) {
      fan.push_back(dec.forward_values(Y));
    } else {
      Matrix in(Y.rows(), Y.cols() + noises[k].cols());
      in << Y, noises[k];
      fan.push_back(dec.forward_values(in));
    }
  }
  return fan;
}

std::vector<Matrix> ReconFan::values() const {
  std::vector<Matrix> out;
  out.reserve(recon.size());
  for (const auto& t : recon) out.push_back(t.value());
  return out;
}

RolloutResult recursive_rollout(const MlpNetwork& dec, const Vector& x0,
                                int steps, int K, const PriorSpec& prior,
                                Rng& rng, bool keep_fans, DecodeMode mode,
                                bool enumerate_categories) {
  require(steps >= 1, "recursive_rollout: steps must be >= 1");
  const Eigen::Index d = x0.size();
  RolloutResult out;
  out.path.resize(steps + 1, d);
  out.path.row(0) = x0.transpose();
  std::uniform_int_distribution<int> pick(0, K - 1);
  Matrix cur = x0.transpose();
  for (int t = 0; t < steps; ++t) {
    auto fan = mixture_decode_values(dec, cur, prior, K, rng, mode,
                                     enumerate_categories);
    Matrix candidates(K, d);
    for (int k = 0; k < K; ++k) candidates.row(k) = fan[k].row(0);
    require(candidates.cols() == d, "recursive_rollout: decoder must map back "
                                    "into the sample space");
    cur = candidates.row(pick(rng));
    out.path.row(t + 1) = cur;
    if (keep_fans) out.fans.push_back(std::move(candidates));
  }
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr,
                             bool maximize, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      sign_(maximize ? 1.0 : -1.0) {
  require(!params_.empty(), "AdamOptimizer: no parameters");
  for (const auto& p : params_) {
    require(p.requires_grad(), "AdamOptimizer: parameter without gradient");
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i].grad();
    if (!g.allFinite())
      throw std::runtime_error(
          "optimizer_step: non-finite gradient in parameter " +
          std::to_string(i));
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    Matrix update =
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    params_[i].set_value(params_[i].value() + sign_ * update);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ceb
