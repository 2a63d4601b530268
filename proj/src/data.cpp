#include "ceb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ceb {

std::string toy_kind_name(ToyKind kind) {
  switch (kind) {
    case ToyKind::Mog5: return "mog5";
    case ToyKind::TwoMoons: return "two_moons";
    case ToyKind::Gauss: return "gauss";
    case ToyKind::Mix1: return "mix1";
    case ToyKind::Mix2: return "mix2";
    case ToyKind::Mix3: return "mix3";
    case ToyKind::Uniform5d: return "uniform5d";
  }
  return "gauss";
}

ToyKind toy_kind_from_name(const std::string& name) {
  if (name == "mog5") return ToyKind::Mog5;
  if (name == "two_moons") return ToyKind::TwoMoons;
  if (name == "gauss") return ToyKind::Gauss;
  if (name == "mix1") return ToyKind::Mix1;
  if (name == "mix2") return ToyKind::Mix2;
  if (name == "mix3") return ToyKind::Mix3;
  if (name == "uniform5d") return ToyKind::Uniform5d;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

namespace {

Matrix sample_mixture(const GaussianMixture& gm, int n, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, gm.dim());
  for (int i = 0; i < n; ++i) {
    double u = unif(rng);
    Eigen::Index k = 0;
    double acc = 0.0;
    for (; k < gm.size(); ++k) {
      acc += gm.weights(k);
      if (u <= acc) break;
    }
    k = std::min(k, gm.size() - 1);
    const Gaussian& g = gm.components[static_cast<std::size_t>(k)];
    for (Eigen::Index l = 0; l < gm.dim(); ++l)
      out(i, l) = g.mean(l) + std::sqrt(g.var(l)) * normal(rng);
  }
  return out;
}

// Min-max map into the unit box, recording the inverse affine.
void normalize_unit_box(Dataset& data) {
  const Eigen::Index d = data.samples.cols();
  data.scale.resize(d);
  data.offset.resize(d);
  for (Eigen::Index l = 0; l < d; ++l) {
    const double lo = data.samples.col(l).minCoeff();
    const double hi = data.samples.col(l).maxCoeff();
    const double span = hi - lo;
    require(span > 0.0, "gen_toy: degenerate dimension, cannot normalize");
    data.samples.col(l) = (data.samples.col(l).array() - lo) / span;
    data.scale(l) = span;
    data.offset(l) = lo;
  }
}

std::uint64_t kind_salt(ToyKind kind) {
  return 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(kind) + 1);
}

}  // namespace

GaussianMixture toy_mixture(ToyKind kind, std::uint64_t seed) {
  require(kind == ToyKind::Mix1 || kind == ToyKind::Mix2 ||
              kind == ToyKind::Mix3,
          "toy_mixture: only the MIX kinds have a component spec");
  Rng rng(seed ^ kind_salt(kind));
  std::uniform_real_distribution<double> center(-3.0, 3.0);
  std::uniform_real_distribution<double> var(0.2, 0.8);
  std::vector<Gaussian> comps;
  for (int k = 0; k < 20; ++k) {
    Vector m(2), v(2);
    m << center(rng), center(rng);
    v << var(rng), var(rng);
    comps.emplace_back(std::move(m), std::move(v));
  }
  return GaussianMixture(std::move(comps));
}

Dataset gen_toy(ToyKind kind, int n, std::uint64_t seed) {
  if (n <= 0) n = kind == ToyKind::Uniform5d ? 10000 : 2000;
  require(n >= 2, "gen_toy: n must be >= 2");
  Dataset data;
  data.name = toy_kind_name(kind);
  data.seed = seed;
  Rng rng(seed ^ kind_salt(kind));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif01(0.0, 1.0);

  switch (kind) {
    case ToyKind::Mog5: {
      const double centers[5][2] = {
          {0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}, {0.5, 0.5}};
      std::uniform_int_distribution<int> pick(0, 4);
      data.samples.resize(n, 2);
      for (int i = 0; i < n; ++i) {
        const int c = pick(rng);
        data.samples(i, 0) = centers[c][0] + 0.05 * normal(rng);
        data.samples(i, 1) = centers[c][1] + 0.05 * normal(rng);
      }
      data.scale = Vector::Ones(2);
      data.offset = Vector::Zero(2);
      break;
    }
    case ToyKind::TwoMoons: {
      data.samples.resize(n, 2);
      std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
      for (int i = 0; i < n; ++i) {
        const double t = angle(rng);
        double x, y;
        if (i % 2 == 0) {
          x = std::cos(t);
          y = std::sin(t);
        } else {
          x = 1.0 - std::cos(t);
          y = 0.5 - std::sin(t);
        }
        data.samples(i, 0) = x + 0.05 * normal(rng);
        data.samples(i, 1) = y + 0.05 * normal(rng);
      }
      normalize_unit_box(data);
      break;
    }
    case ToyKind::Gauss: {
      data.samples.resize(n, 2);
      for (int i = 0; i < n; ++i) {
        data.samples(i, 0) = 0.5 + 0.15 * normal(rng);
        data.samples(i, 1) = 0.5 + 0.15 * normal(rng);
      }
      data.scale = Vector::Ones(2);
      data.offset = Vector::Zero(2);
      break;
    }
    case ToyKind::Mix1:
    case ToyKind::Mix2:
    case ToyKind::Mix3: {
      const GaussianMixture gm = toy_mixture(kind, seed);
      data.samples = sample_mixture(gm, n, rng);
      normalize_unit_box(data);
      break;
    }
    case ToyKind::Uniform5d: {
      data.samples.resize(n, 5);
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < 5; ++l) data.samples(i, l) = unif01(rng);
      data.scale = Vector::Ones(5);
      data.offset = Vector::Zero(5);
      break;
    }
  }
  require(data.samples.allFinite(), "gen_toy: non-finite samples");
  return data;
}

WalkEnsemble simulate_random_walk(int trials, int length, std::uint64_t seed) {
  require(trials >= 1 && length >= 1,
          "simulate_random_walk: trials and length must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WalkEnsemble walks;
  walks.positions.resize(trials, length);
  for (int tr = 0; tr < trials; ++tr) {
    double pos = 0.0;
    for (int t = 0; t < length; ++t) {
      pos += normal(rng);
      walks.positions(tr, t) = pos / walks.magnitude_divisor;
    }
  }
  return walks;
}

Matrix walk_transition_pairs(const WalkEnsemble& walks) {
  const Eigen::Index trials = walks.positions.rows();
  const Eigen::Index length = walks.positions.cols();
  Matrix pairs(trials * length, 2);
  Eigen::Index r = 0;
  for (Eigen::Index tr = 0; tr < trials; ++tr) {
    double prev = 0.0;
    for (Eigen::Index t = 0; t < length; ++t) {
      pairs(r, 0) = prev;
      pairs(r, 1) = walks.positions(tr, t);
      prev = walks.positions(tr, t);
      ++r;
    }
  }
  return pairs;
}

namespace {

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("load_idx_subset: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

Dataset load_csv_matrix(const std::string& path, int count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_idx_subset: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line) && static_cast<int>(rows.size()) < count) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("load_idx_subset: ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (static_cast<int>(rows.size()) < count)
    throw std::runtime_error("load_idx_subset: count exceeds file");
  Dataset data;
  data.name = path;
  data.samples.resize(count, static_cast<Eigen::Index>(rows.front().size()));
  for (int i = 0; i < count; ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      data.samples(i, static_cast<Eigen::Index>(j)) = rows[i][j];
  if (data.samples.minCoeff() < 0.0 || data.samples.maxCoeff() > 1.0)
    throw std::runtime_error(
        "load_idx_subset: CSV values must already lie in [0, 1]");
  data.scale = Vector::Ones(data.samples.cols());
  data.offset = Vector::Zero(data.samples.cols());
  return data;
}

}  // namespace

Dataset load_idx_subset(const std::string& path, int count) {
  require(count >= 1, "load_idx_subset: count must be >= 1");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_idx_subset: cannot open " + path);
  const std::uint32_t magic = read_be32(in);
  if (magic != 0x00000803u) return load_csv_matrix(path, count);

  const std::uint32_t n_images = read_be32(in);
  const std::uint32_t n_rows = read_be32(in);
  const std::uint32_t n_cols = read_be32(in);
  if (n_rows == 0 || n_cols == 0)
    throw std::runtime_error("load_idx_subset: malformed header");
  if (static_cast<std::uint32_t>(count) > n_images)
    throw std::runtime_error("load_idx_subset: count exceeds file");

  const std::size_t d = std::size_t(n_rows) * std::size_t(n_cols);
  std::vector<unsigned char> buf(d);
  Dataset data;
  data.name = path;
  data.samples.resize(count, static_cast<Eigen::Index>(d));
  for (int i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(d));
    if (!in) throw std::runtime_error("load_idx_subset: truncated image data");
    for (std::size_t j = 0; j < d; ++j)
      data.samples(i, static_cast<Eigen::Index>(j)) = buf[j] / 255.0;
  }
  data.scale = Vector::Ones(data.samples.cols());
  data.offset = Vector::Zero(data.samples.cols());
  return data;
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.samples.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.samples(i, j));
      out << buf << (j + 1 == data.samples.cols() ? '\n' : ',');
    }
  }
}

}  // namespace ceb
