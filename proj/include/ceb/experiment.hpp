#pragma once

#include "ceb/bounds.hpp"
#include "ceb/data.hpp"
#include "ceb/nn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <string>

namespace ceb {

enum class LossKind {
  Kl,
  Nip,
  Nuclear,
  ElboNuclear,
  CondNip,
  MaxBound,
  ShannonMi,
  RenyiMi,
  MineS,
  MineR,
  AeMse
};

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

/// One training run, fully specified. `dataset` is a toy kind name,
/// "walk", "surrogate784", or "file:<path>" (IDX or CSV, reads `subset`
/// images). The seed is mandatory; every random draw derives from it.
struct ExperimentConfig {
  // data
  std::string dataset = "mix1";
  int n_samples = 0;  // 0 = per-kind default
  int subset = 800;   // file / surrogate sample count
  int walk_trials = 300;
  int walk_length = 100;

  // model
  std::vector<int> hidden = {128, 128, 128};
  int feature_dim = 1;
  int centers = 1;  // K decoder outputs per sample
  PriorSpec prior{PriorKind::Uniform, 2, 0};
  std::string decode_mode = "input_concat";  // or "output_heads"
  bool enumerate_categories = false;
  bool identity_encoder = false;  // walk-style runs condition on X directly
  std::string out_activation = "linear";

  // loss
  std::string loss = "cond_nip";
  double v_p = 0.01;
  double v_q = 0.01;
  double v_x = 0.01;  // quantitative-analysis data variance
  double v_y = 0.01;  // quantitative-analysis feature variance
  bool stabilized = true;
  double epsilon = 1e-12;
  bool trainable_params = false;
  std::string elbo_prior = "square";  // square | disk | ring | blobs

  // optimization
  double learning_rate = 1e-3;
  double final_learning_rate = 0.0;  // > 0 enables geometric decay
  long iterations = 20000;
  int batch_size = 256;
  int gen_batch = 0;  // generated-sample count for MDN losses; 0 = batch_size
  long log_interval = 100;
  int eval_subset = 2000;       // rows used for the tracked columns
  long max_bound_cap = 10000;   // sample cap for the direct bound estimator

  std::uint64_t seed = 0;
  std::string out_dir = "runs";

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct RunSummary {
  long iterations = 0;
  double final_cost = 0.0;
  double final_bound = 0.0;
  double tail_cost = 0.0;   // mean of the last few logged rows
  double tail_bound = 0.0;
  double best_cost = 0.0;
  int cost_bound_violations = 0;  // logged cost > bound * 1.02
  std::vector<BoundReport> history;
};

struct RunArtifacts {
  std::string metrics_csv;
  std::string checkpoint_path;
  std::string config_echo_path;
  ExperimentConfig config;
  RunSummary summary;
};

/// Executes the configured training loop, logging a BoundReport every
/// log_interval iterations and persisting metrics, checkpoint and config
/// echo under out_dir.
RunArtifacts run(const ExperimentConfig& cfg);

/// Encoder outputs over a resolution x resolution grid on the unit box,
/// written as CSV rows x,y,feature. Requires a 2-D input, 1-D feature
/// encoder.
void feature_heatmap(const MlpNetwork& encoder, int resolution,
                     const std::string& path);

struct GridDensityResult {
  Vector p_x;               // grid-cell masses, sums to 1
  Matrix feature_grid;      // resolution x resolution encoder features
  Matrix decoder_points;    // y_points x 2 decoder outputs
  double final_objective = 0.0;
};

/// Appendix-style density solver: parameterizes p(Y|X) on a discretized
/// grid through one-hot-input networks and Gaussian differences against
/// interpolated feature points, and minimizes the masked reconstruction
/// objective directly over the densities.
GridDensityResult grid_density_solver(const Dataset& data, int grid_res = 50,
                                      int y_points = 3000, double v = 2.5e-4,
                                      long iterations = 2000,
                                      double learning_rate = 1e-2,
                                      std::uint64_t seed = 1);

void write_grid_density_csv(const GridDensityResult& result,
                            const std::string& path);

/// Versioned multi-network checkpoint (JSON). Restored networks
/// reproduce forward outputs bitwise.
void save_checkpoint(
    const std::map<std::string, const MlpNetwork*>& networks,
    const std::string& path);
std::map<std::string, MlpNetwork> load_checkpoint(const std::string& path);

/// Synthetic image-like dataset: smooth class-prototype blobs plus pixel
/// noise, values in [0, 1]. Stands in for an image subset when no IDX
/// file is available.
Dataset gen_image_surrogate(int n, int side, std::uint64_t seed);

/// Prior noise for the ELBO-variation runs; `shape` picks the region the
/// uniform noise fills (square, disk, ring, blobs).
Matrix sample_elbo_prior(const std::string& shape, int n, int dim, Rng& rng);

}  // namespace ceb
