#include "ceb/experiment.hpp"

#include "ceb/baselines.hpp"
#include "ceb/losses.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace ceb {

namespace fs = std::filesystem;

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Kl: return "kl";
    case LossKind::Nip: return "nip";
    case LossKind::Nuclear: return "nuclear";
    case LossKind::ElboNuclear: return "elbo_nuclear";
    case LossKind::CondNip: return "cond_nip";
    case LossKind::MaxBound: return "max_bound";
    case LossKind::ShannonMi: return "s_mi";
    case LossKind::RenyiMi: return "r_mi";
    case LossKind::MineS: return "mine_s";
    case LossKind::MineR: return "mine_r";
    case LossKind::AeMse: return "ae_mse";
  }
  return "cond_nip";
}

LossKind loss_kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(LossKind::AeMse); ++k)
    if (loss_kind_name(static_cast<LossKind>(k)) == name)
      return static_cast<LossKind>(k);
  throw std::invalid_argument("unknown loss selector: " + name);
}

namespace {

std::string prior_kind_name(PriorKind kind) {
  switch (kind) {
    case PriorKind::Uniform: return "uniform";
    case PriorKind::Categorical: return "categorical";
    case PriorKind::Hybrid: return "hybrid";
  }
  return "uniform";
}

PriorKind prior_kind_from_name(const std::string& name) {
  if (name == "uniform") return PriorKind::Uniform;
  if (name == "categorical") return PriorKind::Categorical;
  if (name == "hybrid") return PriorKind::Hybrid;
  throw std::invalid_argument("unknown prior kind: " + name);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (!j.contains("seed"))
    throw std::invalid_argument("config: seed is mandatory");
  cfg.seed = j.at("seed").get<std::uint64_t>();

  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dataset", cfg.dataset);
  get("n_samples", cfg.n_samples);
  get("subset", cfg.subset);
  get("walk_trials", cfg.walk_trials);
  get("walk_length", cfg.walk_length);
  get("hidden", cfg.hidden);
  get("feature_dim", cfg.feature_dim);
  get("centers", cfg.centers);
  get("decode_mode", cfg.decode_mode);
  get("enumerate_categories", cfg.enumerate_categories);
  get("identity_encoder", cfg.identity_encoder);
  get("out_activation", cfg.out_activation);
  get("loss", cfg.loss);
  get("v_p", cfg.v_p);
  get("v_q", cfg.v_q);
  get("v_x", cfg.v_x);
  get("v_y", cfg.v_y);
  get("stabilized", cfg.stabilized);
  get("epsilon", cfg.epsilon);
  get("trainable_params", cfg.trainable_params);
  get("elbo_prior", cfg.elbo_prior);
  get("learning_rate", cfg.learning_rate);
  get("final_learning_rate", cfg.final_learning_rate);
  get("iterations", cfg.iterations);
  get("batch_size", cfg.batch_size);
  get("gen_batch", cfg.gen_batch);
  get("log_interval", cfg.log_interval);
  get("eval_subset", cfg.eval_subset);
  get("max_bound_cap", cfg.max_bound_cap);
  get("out_dir", cfg.out_dir);
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    cfg.prior.kind = prior_kind_from_name(p.value("kind", "uniform"));
    cfg.prior.uniform_dim = p.value("uniform_dim", 0);
    cfg.prior.categories = p.value("categories", 0);
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  return nlohmann::json{
      {"dataset", dataset},
      {"n_samples", n_samples},
      {"subset", subset},
      {"walk_trials", walk_trials},
      {"walk_length", walk_length},
      {"hidden", hidden},
      {"feature_dim", feature_dim},
      {"centers", centers},
      {"prior",
       {{"kind", prior_kind_name(prior.kind)},
        {"uniform_dim", prior.uniform_dim},
        {"categories", prior.categories}}},
      {"decode_mode", decode_mode},
      {"enumerate_categories", enumerate_categories},
      {"identity_encoder", identity_encoder},
      {"out_activation", out_activation},
      {"loss", loss},
      {"v_p", v_p},
      {"v_q", v_q},
      {"v_x", v_x},
      {"v_y", v_y},
      {"stabilized", stabilized},
      {"epsilon", epsilon},
      {"trainable_params", trainable_params},
      {"elbo_prior", elbo_prior},
      {"learning_rate", learning_rate},
      {"final_learning_rate", final_learning_rate},
      {"iterations", iterations},
      {"batch_size", batch_size},
      {"gen_batch", gen_batch},
      {"log_interval", log_interval},
      {"eval_subset", eval_subset},
      {"max_bound_cap", max_bound_cap},
      {"seed", seed},
      {"out_dir", out_dir}};
}

void ExperimentConfig::validate() const {
  loss_kind_from_name(loss);
  require(iterations >= 1, "config: iterations must be >= 1");
  require(batch_size >= 2, "config: batch_size must be >= 2");
  require(log_interval >= 1, "config: log_interval must be >= 1");
  require(learning_rate > 0.0, "config: learning_rate must be > 0");
  require(centers >= 1, "config: centers must be >= 1");
  require(feature_dim >= 1, "config: feature_dim must be >= 1");
  require(v_p > 0.0 && v_q > 0.0, "config: v_p, v_q must be > 0");
  require(v_x > 0.0 && v_y >= 0.0, "config: v_x must be > 0, v_y >= 0");
  require(decode_mode == "input_concat" || decode_mode == "output_heads",
          "config: decode_mode must be input_concat or output_heads");
  if (trainable_params)
    require(decode_mode == "input_concat",
            "config: trainable_params requires input_concat decoding");
  activation_from_name(out_activation);
}

namespace {

constexpr int kHighDimThreshold = 50;
constexpr std::uint64_t kEvalSalt = 0xE7A1BA5Eull;

struct TrainingData {
  Matrix inputs;   // conditioning side (equals targets except for walks)
  Matrix targets;  // sample-space side
};

TrainingData resolve_dataset(const ExperimentConfig& cfg) {
  TrainingData out;
  if (cfg.dataset == "walk") {
    const WalkEnsemble walks =
        simulate_random_walk(cfg.walk_trials, cfg.walk_length, cfg.seed);
    const Matrix pairs = walk_transition_pairs(walks);
    out.inputs = pairs.col(0);
    out.targets = pairs.col(1);
    return out;
  }
  if (cfg.dataset == "surrogate784") {
    out.targets = gen_image_surrogate(cfg.subset, 28, cfg.seed).samples;
  } else if (cfg.dataset.rfind("file:", 0) == 0) {
    out.targets = load_idx_subset(cfg.dataset.substr(5), cfg.subset).samples;
  } else {
    out.targets =
        gen_toy(toy_kind_from_name(cfg.dataset), cfg.n_samples, cfg.seed)
            .samples;
  }
  out.inputs = out.targets;
  return out;
}

std::vector<Eigen::Index> batch_indices(Eigen::Index n, int batch, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal(rng);
  return z;
}

Matrix permutation_matrix(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix P = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) P(i, perm[i]) = 1.0;
  return P;
}

// Trainable per-output heads: the decoder emits means, bounded
// log-variance offsets and a weight logit per output.
struct TrainableFan {
  ParametricFan fan;
};

TrainableFan split_trainable_fan(const ReconFan& raw, Eigen::Index d,
                                 double v_q) {
  TrainableFan out;
  const int K = raw.k();
  std::vector<Tensor> exps;
  for (int k = 0; k < K; ++k) {
    const Tensor& block = raw.recon[k];
    require(block.cols() == 2 * d + 1,
            "trainable decode: head width must be 2 d + 1");
    out.fan.means.push_back(slice_cols(block, 0, d));
    Tensor s = slice_cols(block, d, d);
    out.fan.variances.push_back(
        scalar_mul(v_q, exp(scalar_mul(2.0, tanh(s)))));
    Tensor logit = scalar_mul(3.0, tanh(slice_cols(block, 2 * d, 1)));
    exps.push_back(exp(logit));
  }
  Tensor total = exps[0];
  for (int k = 1; k < K; ++k) total = add(total, exps[k]);
  for (int k = 0; k < K; ++k) out.fan.weights.push_back(div(exps[k], total));
  return out;
}

struct Loggers {
  std::vector<BoundReport>* history;
  int* violations;
};

void push_report(Loggers log, BoundReport row) {
  if (row.cost > row.bound * 1.02 && std::isfinite(row.bound))
    ++(*log.violations);
  log.history->push_back(std::move(row));
}

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Geometric learning-rate schedule; flat when no final rate is set.
void apply_lr_schedule(AdamOptimizer& opt, const ExperimentConfig& cfg,
                       long it) {
  if (cfg.final_learning_rate <= 0.0 || cfg.iterations <= 1) return;
  const double frac = static_cast<double>(it) /
                      static_cast<double>(cfg.iterations - 1);
  opt.set_learning_rate(cfg.learning_rate *
                        std::pow(cfg.final_learning_rate / cfg.learning_rate,
                                 frac));
}

}  // namespace

Matrix sample_elbo_prior(const std::string& shape, int n, int dim, Rng& rng) {
  require(n >= 1, "sample_elbo_prior: n must be >= 1");
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, dim);
  if (shape == "square") {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) out(i, j) = unif(rng);
    return out;
  }
  require(dim == 2, "sample_elbo_prior: shaped priors are 2-D");
  if (shape == "disk" || shape == "ring") {
    const double r_min = shape == "ring" ? 0.6 : 0.0;
    for (int i = 0; i < n; ++i) {
      double x, y, r;
      do {
        x = unif(rng);
        y = unif(rng);
        r = std::sqrt(x * x + y * y);
      } while (r > 1.0 || r < r_min);
      out(i, 0) = x;
      out(i, 1) = y;
    }
    return out;
  }
  if (shape == "blobs") {
    std::uniform_int_distribution<int> corner(0, 3);
    for (int i = 0; i < n; ++i) {
      const int c = corner(rng);
      out(i, 0) = (c & 1 ? 0.6 : -0.6) + 0.15 * normal(rng);
      out(i, 1) = (c & 2 ? 0.6 : -0.6) + 0.15 * normal(rng);
    }
    return out;
  }
  throw std::invalid_argument("sample_elbo_prior: unknown shape " + shape);
}

Dataset gen_image_surrogate(int n, int side, std::uint64_t seed) {
  require(n >= 2 && side >= 8, "gen_image_surrogate: bad shape");
  Rng rng(seed);
  std::uniform_real_distribution<double> upos(4.0, side - 4.0);
  std::uniform_real_distribution<double> usig(2.0, 5.0);
  std::uniform_real_distribution<double> uamp(0.5, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int classes = 10;
  const Eigen::Index d = static_cast<Eigen::Index>(side) * side;
  Matrix prototypes(classes, d);
  for (int c = 0; c < classes; ++c) {
    Vector img = Vector::Zero(d);
    for (int blob = 0; blob < 3; ++blob) {
      const double cx = upos(rng), cy = upos(rng);
      const double sg = usig(rng), amp = uamp(rng);
      for (int x = 0; x < side; ++x)
        for (int y = 0; y < side; ++y) {
          const double dist2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          img(x * side + y) += amp * std::exp(-dist2 / (2.0 * sg * sg));
        }
    }
    prototypes.row(c) = img.cwiseMin(1.0).transpose();
  }

  Dataset data;
  data.name = "surrogate" + std::to_string(d);
  data.seed = seed;
  data.samples.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = prototypes(c, j) + 0.05 * normal(rng);
      data.samples(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  data.scale = Vector::Ones(d);
  data.offset = Vector::Zero(d);
  return data;
}

void save_checkpoint(const std::map<std::string, const MlpNetwork*>& networks,
                     const std::string& path) {
  nlohmann::json j;
  j["format"] = "cebounds-checkpoint";
  j["version"] = 1;
  nlohmann::json nets = nlohmann::json::object();
  for (const auto& [role, net] : networks) {
    nlohmann::json nj;
    to_json(nj, *net);
    nets[role] = std::move(nj);
  }
  j["networks"] = std::move(nets);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump();
}

std::map<std::string, MlpNetwork> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: corrupt file: ") +
                             e.what());
  }
  if (j.value("format", "") != "cebounds-checkpoint")
    throw std::runtime_error("checkpoint: corrupt file: missing format tag");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  std::map<std::string, MlpNetwork> out;
  for (const auto& [role, nj] : j.at("networks").items())
    out.emplace(role, network_from_json(nj));
  return out;
}

void feature_heatmap(const MlpNetwork& encoder, int resolution,
                     const std::string& path) {
  require(encoder.input_width() == 2,
          "feature_heatmap: encoder input must be 2-D");
  require(encoder.output_width() == 1,
          "feature_heatmap: encoder feature must be 1-D");
  require(resolution >= 2, "feature_heatmap: resolution must be >= 2");
  Matrix grid(static_cast<Eigen::Index>(resolution) * resolution, 2);
  for (int ix = 0; ix < resolution; ++ix)
    for (int iy = 0; iy < resolution; ++iy) {
      const Eigen::Index r = static_cast<Eigen::Index>(ix) * resolution + iy;
      grid(r, 0) = (ix + 0.5) / resolution;
      grid(r, 1) = (iy + 0.5) / resolution;
    }
  const Matrix f = encoder.forward_values(grid);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "x,y,feature\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    out << fmt(grid(r, 0)) << ',' << fmt(grid(r, 1)) << ',' << fmt(f(r, 0))
        << '\n';
}

GridDensityResult grid_density_solver(const Dataset& data, int grid_res,
                                      int y_points, double v, long iterations,
                                      double learning_rate,
                                      std::uint64_t seed) {
  require(data.samples.cols() == 2, "grid_density_solver: data must be 2-D");
  require(grid_res >= 4 && y_points >= 8, "grid_density_solver: grid too small");
  require(v > 0.0, "grid_density_solver: variance must be > 0");
  const Eigen::Index cells = static_cast<Eigen::Index>(grid_res) * grid_res;

  // Empirical grid density.
  Vector p_x = Vector::Zero(cells);
  for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
    const int ix = std::clamp<int>(
        static_cast<int>(data.samples(i, 0) * grid_res), 0, grid_res - 1);
    const int iy = std::clamp<int>(
        static_cast<int>(data.samples(i, 1) * grid_res), 0, grid_res - 1);
    p_x(static_cast<Eigen::Index>(ix) * grid_res + iy) += 1.0;
  }
  p_x /= p_x.sum();

  Matrix grid_coords(cells, 2);
  for (int ix = 0; ix < grid_res; ++ix)
    for (int iy = 0; iy < grid_res; ++iy) {
      const Eigen::Index r = static_cast<Eigen::Index>(ix) * grid_res + iy;
      grid_coords(r, 0) = (ix + 0.5) / grid_res;
      grid_coords(r, 1) = (iy + 0.5) / grid_res;
    }

  // Interpolated feature axis.
  Matrix t_points(1, y_points);
  for (int j = 0; j < y_points; ++j)
    t_points(0, j) = -1.1 + 2.2 * j / (y_points - 1.0);

  // One-hot-input single-layer networks: the identity batch makes each
  // grid cell's feature (and each feature point's reconstruction) a free
  // parameter of its network.
  Rng rng(seed);
  MlpNetwork encoder({static_cast<int>(cells), 1}, rng, Activation::Tanh,
                     Activation::Tanh);
  MlpNetwork decoder({y_points, 2}, rng, Activation::Tanh,
                     Activation::Linear);
  Tensor eye_enc = Tensor::constant(Matrix::Identity(cells, cells));
  Tensor eye_dec = Tensor::constant(Matrix::Identity(y_points, y_points));
  Tensor t_const = Tensor::constant(t_points);
  Tensor p_col = Tensor::constant(p_x);
  Tensor grid_const = Tensor::constant(grid_coords);

  std::vector<Tensor> params = encoder.parameters();
  for (auto& p : decoder.parameters()) params.push_back(p);
  AdamOptimizer opt(params, learning_rate, /*maximize=*/false);

  double objective = 0.0;
  for (long it = 0; it < iterations; ++it) {
    Tensor y = encoder.forward(eye_enc);                      // cells x 1
    Tensor G = exp(scalar_mul(-0.5 / v, square(sub(y, t_const))));
    Tensor dec_out = decoder.forward(eye_dec);                // y_points x 2
    Tensor M = ad_sq_dists(grid_const, dec_out);              // cells x y_points
    Tensor L = mean(mul(mul(G, p_col), M));
    backward(L);
    opt.step();
    opt.zero_grad();
    objective = L.scalar_value();
  }

  GridDensityResult out;
  out.p_x = p_x;
  out.final_objective = objective;
  const Matrix y_final = encoder.forward_values(Matrix::Identity(cells, cells));
  out.feature_grid.resize(grid_res, grid_res);
  for (int ix = 0; ix < grid_res; ++ix)
    for (int iy = 0; iy < grid_res; ++iy)
      out.feature_grid(ix, iy) =
          y_final(static_cast<Eigen::Index>(ix) * grid_res + iy, 0);
  out.decoder_points =
      decoder.forward_values(Matrix::Identity(y_points, y_points));
  return out;
}

void write_grid_density_csv(const GridDensityResult& result,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "x,y,p_x,feature\n";
  const int res = static_cast<int>(result.feature_grid.rows());
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int ix = 0; ix < res; ++ix)
    for (int iy = 0; iy < res; ++iy)
      out << fmt((ix + 0.5) / res) << ',' << fmt((iy + 0.5) / res) << ','
          << fmt(result.p_x(static_cast<Eigen::Index>(ix) * res + iy)) << ','
          << fmt(result.feature_grid(ix, iy)) << '\n';
}

namespace {

// Shared state of a cond_nip-style run (Algorithm 3 shape).
struct CondNetworks {
  std::unique_ptr<MlpNetwork> encoder;  // null for identity-encoder runs
  std::unique_ptr<MlpNetwork> decoder;
};

CondNetworks build_cond_networks(const ExperimentConfig& cfg, Eigen::Index d_in,
                                 Eigen::Index d_out, Rng& rng) {
  CondNetworks nets;
  const int d_y = cfg.identity_encoder ? static_cast<int>(d_in)
                                       : cfg.feature_dim;
  if (!cfg.identity_encoder) {
    std::vector<int> enc_w;
    enc_w.push_back(static_cast<int>(d_in));
    enc_w.insert(enc_w.end(), cfg.hidden.begin(), cfg.hidden.end());
    enc_w.push_back(cfg.feature_dim);
    nets.encoder = std::make_unique<MlpNetwork>(enc_w, rng, Activation::Tanh,
                                                Activation::Tanh);
  }
  std::vector<int> dec_w;
  const int head = cfg.trainable_params ? 2 * static_cast<int>(d_out) + 1
                                        : static_cast<int>(d_out);
  if (cfg.decode_mode == "output_heads") {
    dec_w.push_back(d_y);
    dec_w.insert(dec_w.end(), cfg.hidden.begin(), cfg.hidden.end());
    dec_w.push_back(cfg.centers * head);
  } else {
    dec_w.push_back(d_y + cfg.prior.width());
    dec_w.insert(dec_w.end(), cfg.hidden.begin(), cfg.hidden.end());
    dec_w.push_back(head);
  }
  const Activation out_act = cfg.trainable_params
                                 ? Activation::Linear
                                 : activation_from_name(cfg.out_activation);
  nets.decoder = std::make_unique<MlpNetwork>(dec_w, rng, Activation::Tanh,
                                              out_act);
  return nets;
}

DecodeMode decode_mode_of(const ExperimentConfig& cfg) {
  return cfg.decode_mode == "output_heads" ? DecodeMode::OutputHeads
                                           : DecodeMode::InputConcat;
}

// Tracked cost/bound columns for a cond_nip run, evaluated on a fixed
// subset with seeded fresh noise.
BoundReport evaluate_cond_run(const ExperimentConfig& cfg,
                              const CondNetworks& nets,
                              const TrainingData& eval, long iteration,
                              std::uint64_t eval_salt) {
  Rng eval_rng(cfg.seed ^ kEvalSalt ^
               (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(iteration + 1)) ^
               eval_salt);
  const Matrix Y = nets.encoder
                       ? nets.encoder->forward_values(eval.inputs)
                       : eval.inputs;
  const NoisySamplePair pairs =
      make_noisy_pairs(eval.targets, Y, cfg.v_x, cfg.v_y, eval_rng);
  const double bound = estimate_p_cond_norm(pairs);

  BoundReport row;
  row.iteration = iteration;
  row.bound = bound;

  const auto mode = decode_mode_of(cfg);
  if (!cfg.trainable_params) {
    const auto recon =
        mixture_decode_values(*nets.decoder, pairs.Y_hat, cfg.prior,
                              cfg.centers, eval_rng, mode,
                              cfg.enumerate_categories);
    if (eval.targets.cols() >= kHighDimThreshold) {
      const HighDimTerms terms =
          highdim_cost_bound(eval.targets, recon, Y, pairs.Y_hat, cfg.v_x,
                             cfg.v_y, cfg.v_q);
      row.cost = terms.cost_new;
      row.bound = terms.bound_new;
      row.inner = nan_value();
      row.q_norm = nan_value();
    } else {
      const CostTerms terms = estimate_cost_terms(pairs, recon, cfg.v_q);
      row.cost = terms.cost;
      row.inner = terms.inner;
      row.q_norm = terms.q_norm;
    }
    return row;
  }

  // Trainable heads: rebuild the parametric cost on constants, with the
  // quantitative-analysis data variance on the p side.
  Rng decode_rng(eval_rng());
  ReconFan raw;
  for (const auto& m : mixture_decode_values(*nets.decoder, pairs.Y_hat,
                                             cfg.prior, cfg.centers,
                                             decode_rng, mode,
                                             cfg.enumerate_categories))
    raw.recon.push_back(Tensor::constant(m));
  TrainableFan fan =
      split_trainable_fan(raw, eval.targets.cols(), cfg.v_q);
  LossConfig track_cfg;
  track_cfg.v_p = cfg.v_x;
  track_cfg.v_q = cfg.v_q;
  track_cfg.stabilized = false;
  track_cfg.allow_unequal_variances = true;
  const ParametricResult res =
      parametric_conditional_cost(eval.targets, fan.fan, track_cfg);
  row.cost = res.cost.scalar_value();
  row.inner = res.inner.scalar_value();
  row.q_norm = res.q_norm.scalar_value();
  return row;
}

RunSummary train_cond_nip(const ExperimentConfig& cfg,
                          const TrainingData& data, const TrainingData& eval,
                          CondNetworks& nets, Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};
  const Eigen::Index d_out = data.targets.cols();

  LossConfig loss_cfg;
  loss_cfg.v_p = cfg.v_p;
  loss_cfg.v_q = cfg.v_q;
  loss_cfg.stabilized = cfg.stabilized && !cfg.trainable_params;
  loss_cfg.epsilon = cfg.epsilon;
  loss_cfg.allow_unequal_variances = cfg.v_p != cfg.v_q;

  std::vector<Tensor> params = nets.decoder->parameters();
  if (nets.encoder)
    for (auto& p : nets.encoder->parameters()) params.push_back(p);
  AdamOptimizer opt(params, cfg.learning_rate);
  const auto mode = decode_mode_of(cfg);

  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), cfg.batch_size, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    const Matrix Xin = take_rows(data.inputs, idx);

    Tensor Y = nets.encoder ? nets.encoder->forward(Tensor::constant(Xin))
                            : Tensor::constant(Xin);
    Tensor Y_hat =
        cfg.v_y > 0.0
            ? add(Y, Tensor::constant(std::sqrt(cfg.v_y) *
                                      standard_normal(Xb.rows(), Y.cols(),
                                                      rng)))
            : Y;
    ReconFan fan = mixture_decode(*nets.decoder, Y_hat, cfg.prior,
                                  cfg.centers, rng, mode,
                                  cfg.enumerate_categories);
    Tensor cost;
    if (cfg.trainable_params) {
      TrainableFan tf = split_trainable_fan(fan, d_out, cfg.v_q);
      LossConfig pc = loss_cfg;
      pc.stabilized = false;
      cost = parametric_conditional_cost(Xb, tf.fan, pc).cost;
    } else {
      cost = conditional_nip_cost(Xb, fan, loss_cfg).cost;
    }
    backward(cost);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();

    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations)
      push_report(log, evaluate_cond_run(cfg, nets, eval, it + 1, 0));
  }
  return summary;
}

RunSummary train_mdn(const ExperimentConfig& cfg, LossKind kind,
                     const TrainingData& data, MlpNetwork& dec, Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};
  const int gen_n = cfg.gen_batch > 0 ? cfg.gen_batch : cfg.batch_size;

  LossConfig loss_cfg;
  loss_cfg.v_p = cfg.v_p;
  loss_cfg.v_q = cfg.v_q;
  loss_cfg.stabilized = cfg.stabilized;
  loss_cfg.epsilon = cfg.epsilon;
  loss_cfg.allow_unequal_variances = cfg.v_p != cfg.v_q;

  AdamOptimizer opt(dec.parameters(), cfg.learning_rate);
  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), cfg.batch_size, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    const Matrix noise = sample_prior(cfg.prior, gen_n, rng);
    Tensor Xgen = dec.forward(Tensor::constant(noise));

    BoundReport row;
    row.iteration = it + 1;
    Tensor cost;
    if (kind == LossKind::Kl) {
      cost = kl_mdn_cost(Xb, Xgen, loss_cfg);
      row.bound = nan_value();
      row.inner = nan_value();
      row.q_norm = nan_value();
    } else if (kind == LossKind::Nip) {
      NipResult res = nip_cost(Xb, Xgen, loss_cfg);
      cost = res.cost;
      row.bound = res.p_norm;
      row.inner = res.inner.scalar_value();
      row.q_norm = res.q_norm.scalar_value();
    } else {
      cost = nuclear_cost(Xb, Xgen, cfg.v_q);
      row.bound = std::sqrt(static_cast<double>(Xb.rows()) *
                            static_cast<double>(gen_n));
      row.inner = nan_value();
      row.q_norm = nan_value();
    }
    row.cost = cost.scalar_value();
    backward(cost);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();
    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations)
      push_report(log, row);
  }
  return summary;
}

RunSummary train_elbo_nuclear(const ExperimentConfig& cfg,
                              const TrainingData& data, MlpNetwork& enc,
                              MlpNetwork& dec, Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};

  std::vector<Tensor> params = enc.parameters();
  for (auto& p : dec.parameters()) params.push_back(p);
  AdamOptimizer opt(params, cfg.learning_rate);

  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), cfg.batch_size, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    const Matrix Yb =
        sample_elbo_prior(cfg.elbo_prior, cfg.batch_size, cfg.feature_dim, rng);
    Tensor Ygen = enc.forward(Tensor::constant(Xb));
    Tensor Xgen = dec.forward(Tensor::constant(Yb));
    Tensor cost = elbo_nuclear_cost(Xb, Xgen, Yb, Ygen, cfg.v_x, cfg.v_y);
    BoundReport row;
    row.iteration = it + 1;
    row.cost = cost.scalar_value();
    row.bound = static_cast<double>(Xb.rows());
    row.inner = nan_value();
    row.q_norm = nan_value();
    backward(cost);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();
    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations)
      push_report(log, row);
  }
  return summary;
}

RunSummary train_direct_objective(const ExperimentConfig& cfg, LossKind kind,
                                  const TrainingData& data,
                                  const TrainingData& eval, MlpNetwork& enc,
                                  Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};
  int batch = cfg.batch_size;
  if (kind == LossKind::MaxBound) {
    require(data.targets.rows() <= cfg.max_bound_cap,
            "max_bound: dataset larger than max_bound_cap; the direct "
            "estimator only applies to small datasets");
    batch = static_cast<int>(
        std::min<long>(cfg.batch_size, cfg.max_bound_cap));
  }

  AdamOptimizer opt(enc.parameters(), cfg.learning_rate);
  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), batch, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    Tensor Y = enc.forward(Tensor::constant(Xb));
    Tensor objective;
    if (kind == LossKind::MaxBound) {
      const Matrix X_hat =
          Xb +
          std::sqrt(cfg.v_x) * standard_normal(Xb.rows(), Xb.cols(), rng);
      const Matrix zy = standard_normal(Xb.rows(), cfg.feature_dim, rng);
      objective = p_cond_norm_objective(Xb, X_hat, Y, zy, cfg.v_x, cfg.v_y);
    } else if (kind == LossKind::ShannonMi) {
      objective = shannon_mi_objective(Xb, Y, cfg.v_x, cfg.v_y);
    } else {
      objective = renyi_mi_objective(Xb, Y, cfg.v_x, cfg.v_y);
    }
    backward(objective);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();

    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations) {
      Rng eval_rng(cfg.seed ^ kEvalSalt ^
                   (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(it + 1)));
      const Matrix Ye = enc.forward_values(eval.targets);
      const NoisySamplePair pairs =
          make_noisy_pairs(eval.targets, Ye, cfg.v_x, cfg.v_y, eval_rng);
      BoundReport row;
      row.iteration = it + 1;
      row.bound = estimate_p_cond_norm(pairs);
      row.shannon_mi = estimate_shannon_mi(pairs);
      row.renyi_mi = estimate_renyi_mi(pairs);
      row.inner = nan_value();
      row.q_norm = nan_value();
      if (kind == LossKind::MaxBound)
        row.cost = row.bound;
      else if (kind == LossKind::ShannonMi)
        row.cost = *row.shannon_mi;
      else
        row.cost = *row.renyi_mi;
      push_report(log, row);
    }
  }
  return summary;
}

RunSummary train_mine(const ExperimentConfig& cfg, LossKind kind,
                      const TrainingData& data, const TrainingData& eval,
                      MlpNetwork& enc, MineEstimator& critic, Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};

  std::vector<Tensor> params = enc.parameters();
  for (auto& p : critic.net.parameters()) params.push_back(p);
  AdamOptimizer opt(params, cfg.learning_rate);

  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), cfg.batch_size, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    const Matrix X_hat =
        Xb + std::sqrt(cfg.v_x) * standard_normal(Xb.rows(), Xb.cols(), rng);
    const Matrix zy = standard_normal(Xb.rows(), cfg.feature_dim, rng);
    Tensor Y = enc.forward(Tensor::constant(Xb));
    Tensor Y_hat = add(Y, Tensor::constant(std::sqrt(cfg.v_y) * zy));
    Tensor joint = concat_cols(Tensor::constant(X_hat), Y_hat);
    Tensor shuffled =
        matmul(Tensor::constant(permutation_matrix(Xb.rows(), rng)), Y_hat);
    Tensor marginal = concat_cols(Tensor::constant(X_hat), shuffled);
    Tensor objective = mine_objective(critic, joint, marginal);
    backward(objective);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();

    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations) {
      Rng eval_rng(cfg.seed ^ kEvalSalt ^
                   (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(it + 1)));
      const Matrix Ye = enc.forward_values(eval.targets);
      const NoisySamplePair pairs =
          make_noisy_pairs(eval.targets, Ye, cfg.v_x, cfg.v_y, eval_rng);
      BoundReport row;
      row.iteration = it + 1;
      row.cost = objective.scalar_value();
      row.bound = nan_value();
      row.inner = nan_value();
      row.q_norm = nan_value();
      row.shannon_mi = estimate_shannon_mi(pairs);
      row.renyi_mi = estimate_renyi_mi(pairs);
      push_report(log, row);
    }
  }
  (void)kind;
  return summary;
}

RunSummary train_ae_mse(const ExperimentConfig& cfg, const TrainingData& data,
                        MlpNetwork& enc, MlpNetwork& dec, Rng& rng) {
  RunSummary summary;
  Loggers log{&summary.history, &summary.cost_bound_violations};
  std::vector<Tensor> params = enc.parameters();
  for (auto& p : dec.parameters()) params.push_back(p);
  AdamOptimizer opt(params, cfg.learning_rate);

  for (long it = 0; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(data.targets.rows(), cfg.batch_size, rng);
    const Matrix Xb = take_rows(data.targets, idx);
    Tensor recon = dec.forward(enc.forward(Tensor::constant(Xb)));
    Tensor cost = neg(mean(square(sub(Tensor::constant(Xb), recon))));
    BoundReport row;
    row.iteration = it + 1;
    row.cost = cost.scalar_value();
    row.bound = nan_value();
    row.inner = nan_value();
    row.q_norm = nan_value();
    backward(cost);
    apply_lr_schedule(opt, cfg, it);
    opt.step();
    opt.zero_grad();
    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.iterations)
      push_report(log, row);
  }
  return summary;
}

void finalize_summary(RunSummary& summary, const ExperimentConfig& cfg) {
  summary.iterations = cfg.iterations;
  if (summary.history.empty()) return;
  summary.final_cost = summary.history.back().cost;
  summary.final_bound = summary.history.back().bound;
  const std::size_t tail =
      std::min<std::size_t>(5, summary.history.size());
  double tc = 0.0, tb = 0.0;
  for (std::size_t i = summary.history.size() - tail;
       i < summary.history.size(); ++i) {
    tc += summary.history[i].cost;
    tb += summary.history[i].bound;
  }
  summary.tail_cost = tc / static_cast<double>(tail);
  summary.tail_bound = tb / static_cast<double>(tail);
  summary.best_cost = summary.history.front().cost;
  for (const auto& r : summary.history)
    summary.best_cost = std::max(summary.best_cost, r.cost);
}

}  // namespace

RunArtifacts run(const ExperimentConfig& cfg) {
  cfg.validate();
  try {
    const LossKind kind = loss_kind_from_name(cfg.loss);
    TrainingData data = resolve_dataset(cfg);
    const Eigen::Index n = data.targets.rows();
    require(n >= 2, "run: dataset too small");

    TrainingData eval;
    const Eigen::Index n_eval =
        std::min<Eigen::Index>(n, std::max(cfg.eval_subset, 2));
    eval.targets = data.targets.topRows(n_eval);
    eval.inputs = data.inputs.topRows(n_eval);

    Rng rng(cfg.seed);
    RunSummary summary;
    std::map<std::string, const MlpNetwork*> checkpoint_nets;
    CondNetworks cond;
    std::unique_ptr<MlpNetwork> enc, dec;
    std::unique_ptr<MineEstimator> critic;

    const int d_x = static_cast<int>(data.targets.cols());
    switch (kind) {
      case LossKind::Kl:
      case LossKind::Nip:
      case LossKind::Nuclear: {
        require(cfg.prior.width() >= 1, "run: MDN losses need a prior");
        std::vector<int> w{cfg.prior.width()};
        w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
        w.push_back(d_x);
        dec = std::make_unique<MlpNetwork>(
            w, rng, Activation::Tanh, activation_from_name(cfg.out_activation));
        summary = train_mdn(cfg, kind, data, *dec, rng);
        checkpoint_nets["decoder"] = dec.get();
        break;
      }
      case LossKind::ElboNuclear: {
        std::vector<int> ew{d_x};
        ew.insert(ew.end(), cfg.hidden.begin(), cfg.hidden.end());
        ew.push_back(cfg.feature_dim);
        enc = std::make_unique<MlpNetwork>(ew, rng, Activation::Tanh,
                                           Activation::Tanh);
        std::vector<int> dw{cfg.feature_dim};
        dw.insert(dw.end(), cfg.hidden.begin(), cfg.hidden.end());
        dw.push_back(d_x);
        dec = std::make_unique<MlpNetwork>(
            dw, rng, Activation::Tanh,
            activation_from_name(cfg.out_activation));
        summary = train_elbo_nuclear(cfg, data, *enc, *dec, rng);
        checkpoint_nets["encoder"] = enc.get();
        checkpoint_nets["decoder"] = dec.get();
        break;
      }
      case LossKind::CondNip: {
        if (d_x >= kHighDimThreshold)
          require(cfg.v_q == cfg.v_x,
                  "run: high-dimensional tracking assumes v_q == v_x");
        cond = build_cond_networks(cfg, data.inputs.cols(), d_x, rng);
        summary = train_cond_nip(cfg, data, eval, cond, rng);
        if (cond.encoder) checkpoint_nets["encoder"] = cond.encoder.get();
        checkpoint_nets["decoder"] = cond.decoder.get();
        break;
      }
      case LossKind::MaxBound:
      case LossKind::ShannonMi:
      case LossKind::RenyiMi: {
        std::vector<int> ew{d_x};
        ew.insert(ew.end(), cfg.hidden.begin(), cfg.hidden.end());
        ew.push_back(cfg.feature_dim);
        enc = std::make_unique<MlpNetwork>(ew, rng, Activation::Tanh,
                                           Activation::Tanh);
        summary = train_direct_objective(cfg, kind, data, eval, *enc, rng);
        checkpoint_nets["encoder"] = enc.get();
        break;
      }
      case LossKind::MineS:
      case LossKind::MineR: {
        std::vector<int> ew{d_x};
        ew.insert(ew.end(), cfg.hidden.begin(), cfg.hidden.end());
        ew.push_back(cfg.feature_dim);
        enc = std::make_unique<MlpNetwork>(ew, rng, Activation::Tanh,
                                           Activation::Tanh);
        critic = std::make_unique<MineEstimator>(MineEstimator::make(
            d_x, cfg.feature_dim, cfg.hidden,
            kind == LossKind::MineS ? MineEstimator::Variant::Shannon
                                    : MineEstimator::Variant::Renyi,
            rng));
        summary = train_mine(cfg, kind, data, eval, *enc, *critic, rng);
        checkpoint_nets["encoder"] = enc.get();
        checkpoint_nets["critic"] = &critic->net;
        break;
      }
      case LossKind::AeMse: {
        std::vector<int> ew{d_x};
        ew.insert(ew.end(), cfg.hidden.begin(), cfg.hidden.end());
        ew.push_back(cfg.feature_dim);
        enc = std::make_unique<MlpNetwork>(ew, rng, Activation::Tanh,
                                           Activation::Tanh);
        std::vector<int> dw{cfg.feature_dim};
        dw.insert(dw.end(), cfg.hidden.begin(), cfg.hidden.end());
        dw.push_back(d_x);
        dec = std::make_unique<MlpNetwork>(
            dw, rng, Activation::Tanh,
            activation_from_name(cfg.out_activation));
        summary = train_ae_mse(cfg, data, *enc, *dec, rng);
        checkpoint_nets["encoder"] = enc.get();
        checkpoint_nets["decoder"] = dec.get();
        break;
      }
    }

    finalize_summary(summary, cfg);

    fs::create_directories(cfg.out_dir);
    RunArtifacts artifacts;
    artifacts.config = cfg;
    artifacts.summary = std::move(summary);
    artifacts.metrics_csv = (fs::path(cfg.out_dir) / "metrics.csv").string();
    artifacts.checkpoint_path =
        (fs::path(cfg.out_dir) / "checkpoint.json").string();
    artifacts.config_echo_path =
        (fs::path(cfg.out_dir) / "config.json").string();
    write_bound_reports_csv(artifacts.summary.history, artifacts.metrics_csv);
    save_checkpoint(checkpoint_nets, artifacts.checkpoint_path);
    std::ofstream cf(artifacts.config_echo_path);
    cf << cfg.to_json().dump(2);
    return artifacts;
  } catch (const std::exception& e) {
    throw std::runtime_error("run[" + cfg.loss + " on " + cfg.dataset +
                             ", seed " + std::to_string(cfg.seed) +
                             "]: " + e.what());
  }
}

}  // namespace ceb
