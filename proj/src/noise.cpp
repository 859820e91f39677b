#include "rgcn/noise.hpp"

#include <cmath>

namespace rgcn {

namespace {

constexpr std::uint64_t kMaskStream = 0x6d61736b;   // keeps noise draws out of
constexpr std::uint64_t kGaussStream = 0x67617573;  // other modules' streams

}  // namespace

Mat masking_noise(const Mat& x, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Masking) throw InvalidParameter("spec is not a masking spec");
  if (spec.level < 0.0 || spec.level > 1.0)
    throw InvalidParameter("masking level must lie in [0, 1]");
  const int m = static_cast<int>(x.cols());
  const int k = static_cast<int>(std::floor(spec.level * m));
  Mat out = x;
  if (k == 0) return out;

  Rng rng = Rng::stream(spec.seed, kMaskStream);
  if (spec.column_mode) {
    for (int j : rng.sample_without_replacement(m, k)) out.col(j).setConstant(spec.val);
  } else {
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (int j : rng.sample_without_replacement(m, k)) out(i, j) = spec.val;
  }
  return out;
}

Mat gaussian_noise_field(Eigen::Index rows, Eigen::Index cols, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Gaussian) throw InvalidParameter("spec is not a gaussian spec");
  if (spec.level < 0.0) throw InvalidParameter("gaussian level must be non-negative");
  if (spec.level == 0.0) return Mat::Zero(rows, cols);
  Rng rng = Rng::stream(spec.seed, kGaussStream);
  return rng.normal_matrix(rows, cols, 0.0, spec.level);
}

Mat gaussian_noise(const Mat& x, const NoiseSpec& spec) {
  if (spec.level == 0.0 && spec.kind == NoiseKind::Gaussian) return x;
  return x + gaussian_noise_field(x.rows(), x.cols(), spec);
}

Mat apply_noise(const Mat& x, const NoiseSpec& spec) {
  return spec.kind == NoiseKind::Masking ? masking_noise(x, spec) : gaussian_noise(x, spec);
}

}  // namespace rgcn
