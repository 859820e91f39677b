#pragma once

#include "rgcn/common.hpp"

namespace rgcn {

enum class NoiseKind { Masking, Gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Masking;
  double level = 0.0;  // masking: fraction of features; gaussian: std deviation
  double val = 10.0;   // masking fill value
  std::uint64_t seed = 0;
  bool column_mode = false;  // masking: corrupt one shared feature subset instead
                             // of drawing fresh indices per sample
};

/// Per sample, a uniformly random subset of floor(level * M) feature indices
/// is overwritten with spec.val (one shared subset in column mode).
Mat masking_noise(const Mat& x, const NoiseSpec& spec);

/// x plus i.i.d. Normal(0, level^2) noise. The noise field depends only on
/// the shape and the seed, never on x.
Mat gaussian_noise(const Mat& x, const NoiseSpec& spec);

/// The additive field gaussian_noise would add to a matrix of this shape.
Mat gaussian_noise_field(Eigen::Index rows, Eigen::Index cols, const NoiseSpec& spec);

/// Dispatch on spec.kind.
Mat apply_noise(const Mat& x, const NoiseSpec& spec);

}  // namespace rgcn
