#pragma once

#include <functional>
#include <vector>

#include "rgcn/common.hpp"
#include "rgcn/nncore.hpp"
#include "rgcn/noise.hpp"

namespace rgcn {

enum class AeActivation { Identity, Sigmoid, Relu };

/// Mirrored encoder/decoder stack. layer_sizes is the full chain, e.g.
/// {M, 5000, 350, 5000, M}; the nonlinearity sits between layers (the output
/// layer stays linear so reconstructions live in the input space).
struct AeSpec {
  std::vector<int> layer_sizes;
  AeActivation activation = AeActivation::Identity;
  std::uint64_t seed = 0;

  static AeSpec mirrored(int m, const std::vector<int>& hidden, AeActivation act,
                         std::uint64_t seed);
  void check() const;
  int input_dim() const { return layer_sizes.front(); }
};

std::size_t ae_param_count(const AeSpec& spec);

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
/// Layers carry Activation::Identity: the AE applies its own nonlinearity.
std::vector<DenseLayer> ae_init(const AeSpec& spec);

Mat ae_forward(const AeSpec& spec, const std::vector<DenseLayer>& weights, const Mat& x);

// flat parameter vector <-> layer list (order: per layer W row-major, then b)
Vec ae_flatten(const std::vector<DenseLayer>& weights);
void ae_unflatten(const Vec& flat, std::vector<DenseLayer>& weights);

struct AeEval {
  double loss = 0.0;                   // scale * 0.5/B * |out - target|_F^2
  std::vector<DenseGrads> layer_grads; // scaled the same way
  Mat grad_input;
  Mat output;
};

/// Reconstruction loss and gradients in one pass; `scale` multiplies both
/// (used to weigh the reconstruction term inside a composite objective).
AeEval ae_loss_and_grad(const AeSpec& spec, const std::vector<DenseLayer>& weights,
                        const Mat& input, const Mat& target, double scale = 1.0);

struct AeTrainResult {
  std::vector<DenseLayer> weights;
  std::vector<double> epoch_loss;  // epoch-averaged training loss
};

/// Plain reconstruction training (squared Frobenius objective, ADAM, seeded
/// mini-batch shuffling). No ridge is applied to autoencoder weights.
AeTrainResult ae_train(const AeSpec& spec, const Mat& x, int epochs, int batch,
                       const AdamConfig& cfg);

/// Denoising variant: every mini-batch gets a freshly corrupted input copy
/// while the target stays clean. Zero corruption reproduces ae_train bitwise.
AeTrainResult dae_train(const AeSpec& spec, const Mat& x, const NoiseSpec& corruption,
                        int epochs, int batch, const AdamConfig& cfg);

/// Incremental trainer for callers that interleave reconstruction epochs with
/// other work. Optimizer state persists across run() calls; `epoch` counts
/// every epoch ever run and drives both the lr decay and the corruption
/// stream, so a sequence of run() calls matches one long training run.
struct AeTrainer {
  AeTrainer(const AeSpec& spec, const AdamConfig& cfg);

  /// `epochs` reconstruction passes over x (corrupting each mini-batch input
  /// when `corruption` is set). `scale` multiplies the loss and every
  /// gradient; zero freezes the weights exactly. Returns per-epoch losses.
  std::vector<double> run(const Mat& x, int epochs, int batch,
                          const NoiseSpec* corruption = nullptr, double scale = 1.0);

  AeSpec spec;
  AdamConfig cfg;
  std::vector<DenseLayer> weights;
  AdamState state;
  Rng shuffle;
  int epoch = 0;
};

/// Elementwise soft thresholding max(e - lam, 0) + min(e + lam, 0).
Mat prox_l1(const Mat& e, double lam);

struct Decomposition {
  Mat low_rank;    // L
  Mat err_sparse;  // E
  double residual = 0.0;  // |X - L - E|_F / |X|_F (absolute when X = 0)
  int outer_iters = 0;
  bool converged = false;
  double sparsity = 0.0;  // fraction of nonzero entries in err_sparse
  std::vector<double> residual_trace;
};

struct RlaeOptions {
  double lam = 0.0;      // required, > 0
  double tol = 1e-2;
  int max_outer = 20;
  int inner_epochs = 50;
  int batch = 100;       // clamped to the row count
  // bookkeeping hook, called after every outer iteration
  std::function<void(int iter, const Mat& l, const Mat& e, double residual)> on_outer;
};

struct RlaeResult {
  Decomposition dec;
  std::vector<DenseLayer> weights;
};

/// Alternating robust decomposition X ~ L + E: each outer iteration restores
/// feasibility (the autoencoder trains on X - E, so the sparse estimate feeds
/// back into the low-rank fit), then refreshes L through the autoencoder and
/// re-thresholds E. Stops when |X - L - E|_F / |X|_F drops below tol; on
/// exhaustion returns the best iterate flagged not-converged.
RlaeResult rlae_fit(const AeSpec& spec, const Mat& x, const RlaeOptions& opt,
                    const AdamConfig& cfg);

/// Geometric sweep grid centered at 1/sqrt(max(N, M)).
std::vector<double> lambda_grid(int n, int m, int count = 9, double decades = 2.0);

}  // namespace rgcn
