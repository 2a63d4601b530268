#pragma once

#include "ceb/tensor.hpp"

#include <nlohmann/json_fwd.hpp>
#include <vector>

namespace ceb {

enum class Activation { Linear, Tanh, Relu, Sigmoid, SigmoidShift };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Fully connected network. Hidden layers share one activation (tanh by
/// default); the output layer has its own. SigmoidShift is sigmoid(x)+0.1,
/// used by the Renyi-variant critic.
class MlpNetwork {
 public:
  MlpNetwork(std::vector<int> widths, Rng& rng,
             Activation hidden = Activation::Tanh,
             Activation output = Activation::Linear);
  /// Rebuild from stored parameters (checkpoint restore).
  MlpNetwork(std::vector<int> widths, Activation hidden, Activation output,
             std::vector<Matrix> weights, std::vector<Matrix> biases);

  Tensor forward(const Tensor& x) const;
  Matrix forward_values(const Matrix& x) const;

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  std::vector<Tensor> parameters() const;
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

 private:
  std::vector<int> widths_;
  Activation hidden_;
  Activation output_;
  std::vector<Tensor> weights_;  // layer i: widths[i] x widths[i+1]
  std::vector<Tensor> biases_;   // layer i: 1 x widths[i+1]
};

void to_json(nlohmann::json& j, const MlpNetwork& net);
MlpNetwork network_from_json(const nlohmann::json& j);

enum class PriorKind { Uniform, Categorical, Hybrid };

/// Noise prior for mixture decoders and MDN inputs. Uniform parts are
/// per-coordinate U[-1, 1]; categorical parts are uniform one-hot. Hybrid
/// concatenates uniform columns first, then the one-hot block. A width-0
/// prior is the degenerate case of a plain decoder.
struct PriorSpec {
  PriorKind kind = PriorKind::Uniform;
  int uniform_dim = 0;
  int categories = 0;

  int width() const;
  void validate() const;
};

Matrix sample_prior(const PriorSpec& prior, int count, Rng& rng);

enum class DecodeMode { InputConcat, OutputHeads };

/// Per-sample reconstruction fans: recon[k].row(n) is the k-th decoder
/// output for sample n. Keeping the k slices separate means losses can
/// only pair reconstructions within one sample's fan.
struct ReconFan {
  std::vector<Tensor> recon;

  int k() const { return static_cast<int>(recon.size()); }
  Eigen::Index n() const { return recon.front().rows(); }
  Eigen::Index dim() const { return recon.front().cols(); }
  std::vector<Matrix> values() const;
};

/// K decoder outputs per sample. InputConcat feeds Y concatenated with K
/// independently drawn noises; OutputHeads expects the decoder to emit
/// K * d_X columns and slices them. With enumerate_categories, a pure
/// categorical prior is swept through all K one-hots instead of sampled.
ReconFan mixture_decode(const MlpNetwork& dec, const Tensor& Y,
                        const PriorSpec& prior, int K, Rng& rng,
                        DecodeMode mode = DecodeMode::InputConcat,
                        bool enumerate_categories = false);

std::vector<Matrix> mixture_decode_values(
    const MlpNetwork& dec, const Matrix& Y, const PriorSpec& prior, int K,
    Rng& rng, DecodeMode mode = DecodeMode::InputConcat,
    bool enumerate_categories = false);

struct RolloutResult {
  Matrix path;                // (steps + 1) x d, row 0 = start
  std::vector<Matrix> fans;   // optional, steps entries of K x d
};

/// Iterated mixture decode: at each step draw the K-candidate fan from
/// the current point and pick one candidate uniformly at random.
RolloutResult recursive_rollout(const MlpNetwork& dec, const Vector& x0,
                                int steps, int K, const PriorSpec& prior,
                                Rng& rng, bool keep_fans = false,
                                DecodeMode mode = DecodeMode::InputConcat,
                                bool enumerate_categories = false);

/// Adam with gradient ascent by default (every cost here is maximized).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, double lr = 1e-3,
                         bool maximize = true, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  long step_count() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double lr_, beta1_, beta2_, eps_;
  double sign_;
  long t_ = 0;
};

}  // namespace ceb
