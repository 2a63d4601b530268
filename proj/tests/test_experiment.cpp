#include "ceb/experiment.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace ceb;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const auto path = fs::temp_directory_path() / ("ceb_test_" + tag);
  fs::remove_all(path);
  fs::create_directories(path);
  return path.string();
}

ExperimentConfig tiny_config(const std::string& loss, const std::string& tag) {
  ExperimentConfig cfg;
  cfg.dataset = "gauss";
  cfg.n_samples = 300;
  cfg.hidden = {16, 16};
  cfg.feature_dim = 1;
  cfg.centers = 3;
  cfg.prior = PriorSpec{PriorKind::Uniform, 2, 0};
  cfg.loss = loss;
  cfg.v_p = 0.01;
  cfg.v_q = 0.01;
  cfg.v_x = 0.01;
  cfg.v_y = 0.01;
  cfg.iterations = 30;
  cfg.batch_size = 32;
  cfg.log_interval = 10;
  cfg.eval_subset = 100;
  cfg.seed = 5;
  cfg.out_dir = temp_dir(tag);
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  ExperimentConfig cfg = tiny_config("cond_nip", "cfg");
  const nlohmann::json j = cfg.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.loss == cfg.loss);
  CHECK(back.seed == cfg.seed);
  CHECK(back.prior.uniform_dim == 2);

  nlohmann::json missing = j;
  missing.erase("seed");
  CHECK_THROWS(ExperimentConfig::from_json(missing));

  nlohmann::json bad = j;
  bad["loss"] = "nonsense";
  CHECK_THROWS(ExperimentConfig::from_json(bad));
}

TEST_CASE("every loss selector runs end to end") {
  for (const std::string loss :
       {"kl", "nip", "nuclear", "cond_nip", "max_bound", "s_mi", "r_mi",
        "mine_s", "mine_r", "ae_mse"}) {
    ExperimentConfig cfg = tiny_config(loss, "smoke_" + loss);
    const RunArtifacts art = run(cfg);
    CHECK(!art.summary.history.empty());
    CHECK(std::isfinite(art.summary.final_cost));
    CHECK(fs::exists(art.metrics_csv));
    CHECK(fs::exists(art.checkpoint_path));
    CHECK(fs::exists(art.config_echo_path));
  }
}

TEST_CASE("elbo_nuclear runs with every prior shape") {
  for (const std::string shape : {"square", "disk", "ring", "blobs"}) {
    ExperimentConfig cfg = tiny_config("elbo_nuclear", "elbo_" + shape);
    cfg.feature_dim = 2;
    cfg.elbo_prior = shape;
    const RunArtifacts art = run(cfg);
    CHECK(std::isfinite(art.summary.final_cost));
  }
}

TEST_CASE("trainable cond_nip runs and tracks the bound") {
  ExperimentConfig cfg = tiny_config("cond_nip", "trainable");
  cfg.trainable_params = true;
  cfg.stabilized = false;
  cfg.iterations = 40;
  const RunArtifacts art = run(cfg);
  for (const auto& row : art.summary.history) {
    CHECK(std::isfinite(row.cost));
    CHECK(std::isfinite(row.bound));
  }
}

TEST_CASE("walk dataset with output heads") {
  ExperimentConfig cfg = tiny_config("cond_nip", "walk");
  cfg.dataset = "walk";
  cfg.walk_trials = 40;
  cfg.walk_length = 30;
  cfg.identity_encoder = true;
  cfg.decode_mode = "output_heads";
  cfg.centers = 10;
  cfg.prior = PriorSpec{PriorKind::Categorical, 0, 10};
  cfg.out_activation = "tanh";
  cfg.v_p = 1e-3;
  cfg.v_q = 1e-3;
  cfg.v_x = 1e-3;
  cfg.v_y = 1e-4;
  const RunArtifacts art = run(cfg);
  CHECK(std::isfinite(art.summary.final_cost));
}

TEST_CASE("runs are byte identical under a fixed seed") {
  ExperimentConfig a = tiny_config("cond_nip", "det_a");
  ExperimentConfig b = tiny_config("cond_nip", "det_b");
  const RunArtifacts ra = run(a);
  const RunArtifacts rb = run(b);
  CHECK(slurp(ra.metrics_csv) == slurp(rb.metrics_csv));
  CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));

  ExperimentConfig c = tiny_config("cond_nip", "det_c");
  c.seed = 6;
  const RunArtifacts rc = run(c);
  CHECK(slurp(ra.metrics_csv) != slurp(rc.metrics_csv));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(211);
  MlpNetwork net({3, 8, 2}, rng, Activation::Tanh, Activation::Linear);
  const std::string dir = temp_dir("ckpt");
  const std::string path = dir + "/net.json";
  save_checkpoint({{"encoder", &net}}, path);
  auto restored = load_checkpoint(path);
  REQUIRE(restored.count("encoder") == 1);

  const Matrix probe = Matrix::Random(10, 3);
  const Matrix a = net.forward_values(probe);
  const Matrix b = restored.at("encoder").forward_values(probe);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bitwise

  // Truncated file is reported as corrupt.
  {
    std::ofstream out(path, std::ios::trunc);
    out << slurp(path).substr(0, 20);
  }
  std::ofstream(path, std::ios::trunc) << "{\"format\":\"cebounds";
  CHECK_THROWS(load_checkpoint(path));

  // Version mismatch is reported.
  nlohmann::json j;
  j["format"] = "cebounds-checkpoint";
  j["version"] = 99;
  j["networks"] = nlohmann::json::object();
  std::ofstream(path, std::ios::trunc) << j.dump();
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       "checkpoint: unsupported version", std::runtime_error);
}

TEST_CASE("checkpoint restore continues training deterministically") {
  auto train_steps = [](MlpNetwork& net, std::uint64_t seed, int steps) {
    Rng rng(seed);
    AdamOptimizer opt(net.parameters(), 1e-3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int it = 0; it < steps; ++it) {
      Matrix batch(4, 3);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) batch(i, j) = normal(rng);
      Tensor loss = neg(mean(square(net.forward(Tensor::constant(batch)))));
      backward(loss);
      opt.step();
      opt.zero_grad();
    }
  };
  Rng rng(223);
  MlpNetwork net({3, 6, 1}, rng, Activation::Tanh, Activation::Linear);
  const std::string dir = temp_dir("ckpt2");
  save_checkpoint({{"net", &net}}, dir + "/net.json");

  train_steps(net, 77, 10);
  const Matrix after_direct = net.weights()[0].value();

  auto restored = load_checkpoint(dir + "/net.json");
  train_steps(restored.at("net"), 77, 10);
  CHECK((restored.at("net").weights()[0].value() - after_direct)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("feature heatmap") {
  Rng rng(227);
  MlpNetwork enc({2, 8, 1}, rng, Activation::Tanh, Activation::Tanh);
  const std::string dir = temp_dir("heat");
  const std::string path = dir + "/heatmap.csv";
  feature_heatmap(enc, 50, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,y,feature");
  int rows = 0;
  double fmin = 1e9, fmax = -1e9;
  while (std::getline(in, line)) {
    ++rows;
    const auto pos = line.rfind(',');
    const double f = std::stod(line.substr(pos + 1));
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
  }
  CHECK(rows == 2500);
  CHECK(fmin >= -1.0);
  CHECK(fmax <= 1.0);

  // A constant encoder produces a constant grid.
  for (auto& p : enc.parameters())
    p.set_value(Matrix::Zero(p.rows(), p.cols()));
  feature_heatmap(enc, 10, path);
  std::ifstream in2(path);
  std::getline(in2, line);
  while (std::getline(in2, line)) {
    const auto pos = line.rfind(',');
    CHECK(std::stod(line.substr(pos + 1)) == 0.0);
  }

  MlpNetwork bad({3, 4, 1}, rng);
  CHECK_THROWS(feature_heatmap(bad, 10, path));
}

TEST_CASE("grid density solver on a point mass") {
  // All samples inside one grid cell.
  Dataset data;
  data.samples = Matrix::Zero(50, 2);
  data.samples.col(0).setConstant(0.52);
  data.samples.col(1).setConstant(0.48);
  data.name = "pointmass";
  data.scale = Vector::Ones(2);
  data.offset = Vector::Zero(2);

  const GridDensityResult res =
      grid_density_solver(data, 10, 60, 2.5e-4, 400, 3e-2, 3);
  CHECK(res.p_x.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // The occupied cell holds all the mass.
  Eigen::Index argmax = 0;
  res.p_x.maxCoeff(&argmax);
  CHECK(res.p_x(argmax) == doctest::Approx(1.0));

  // Decoder points near the occupied cell's feature reconstruct it.
  const int ix = static_cast<int>(argmax) / 10;
  const int iy = static_cast<int>(argmax) % 10;
  const double cx = (ix + 0.5) / 10.0, cy = (iy + 0.5) / 10.0;
  const double y_star = res.feature_grid(ix, iy);
  double best = 1e9;
  for (Eigen::Index j = 0; j < res.decoder_points.rows(); ++j) {
    // Only feature points that the cell's Gaussian actually weights.
    const double t = -1.1 + 2.2 * j / (res.decoder_points.rows() - 1.0);
    if (std::abs(t - y_star) > 0.05) continue;
    const double dx = res.decoder_points(j, 0) - cx;
    const double dy = res.decoder_points(j, 1) - cy;
    best = std::min(best, dx * dx + dy * dy);
  }
  CHECK(best < 0.01);
}

TEST_CASE("environment and error context") {
  ExperimentConfig cfg = tiny_config("cond_nip", "err");
  cfg.dataset = "file:/nonexistent/path.idx";
  try {
    run(cfg);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cond_nip") != std::string::npos);
    CHECK(msg.find("seed 5") != std::string::npos);
  }
}
