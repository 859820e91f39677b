#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgcn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

// Error taxonomy shared across the library. The CLI maps these onto its
// exit-code contract (2 = parameter/data/parse problems, 3 = numerical).
struct InvalidParameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

struct Diverged : std::runtime_error {
  Diverged(const std::string& msg, int at_epoch)
      : std::runtime_error(msg + " (epoch " + std::to_string(at_epoch) + ")"),
        epoch(at_epoch) {}
  int epoch;
};

struct OracleScaleExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic RNG. Each stochastic component of a run draws from its own
/// stream (see Rng::stream) so unrelated features never perturb each other's
/// sequences; this is what makes same-seed runs bitwise reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // splitmix64 finalizer over the (seed, stream) pair.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(mix(seed, stream_id));
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }

  /// Uniform integer in [lo, hi).
  std::int64_t randint(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi - 1)(eng_);
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(p[static_cast<std::size_t>(i)],
                p[static_cast<std::size_t>(randint(0, i + 1))]);
    }
    return p;
  }

  /// k distinct indices from [0, n), order unspecified (partial Fisher-Yates).
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k > n) throw InvalidParameter("sample_without_replacement: k > n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::swap(pool[static_cast<std::size_t>(i)],
                pool[static_cast<std::size_t>(randint(i, n))]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double mean = 0.0,
                    double stddev = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(mean, stddev);
    return m;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace rgcn
