#pragma once

#include "ceb/gm.hpp"

#include <cstdint>
#include <string>

namespace ceb {

enum class ToyKind { Mog5, TwoMoons, Gauss, Mix1, Mix2, Mix3, Uniform5d };

std::string toy_kind_name(ToyKind kind);
ToyKind toy_kind_from_name(const std::string& name);

/// Sample matrix plus the affine record that maps it back to the raw
/// generator output: raw = sample * scale + offset, per dimension.
/// Samples are kept in (or near) the unit box so tanh decoders apply.
struct Dataset {
  Matrix samples;
  std::string name;
  std::uint64_t seed = 0;
  Vector scale;
  Vector offset;
};

/// n <= 0 picks the per-kind default: 2,000 for the 2-D kinds, 10,000
/// for the 5-D uniform.
Dataset gen_toy(ToyKind kind, int n, std::uint64_t seed);

/// Pre-normalization component spec of the MIX kinds: 20 components with
/// per-dimension variances drawn uniformly from [0.2, 0.8].
GaussianMixture toy_mixture(ToyKind kind, std::uint64_t seed);

/// trials x length positions of scaled random walks: cumulative sums of
/// standard normal increments divided by 30.
struct WalkEnsemble {
  Matrix positions;
  double step_std = 1.0;
  double magnitude_divisor = 30.0;
};

WalkEnsemble simulate_random_walk(int trials, int length, std::uint64_t seed);

/// Consecutive (x_t, x_{t+1}) pairs pooled over all trials, including the
/// step out of the origin. Column 0 is the input, column 1 the target.
Matrix walk_transition_pairs(const WalkEnsemble& walks);

/// Reads the first `count` images of an IDX file (big-endian magic
/// 0x00000803) scaled to [0, 1], or a CSV numeric matrix whose values
/// must already lie in [0, 1].
Dataset load_idx_subset(const std::string& path, int count);

void save_dataset_csv(const Dataset& data, const std::string& path);

}  // namespace ceb
