#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "rgcn/common.hpp"

namespace rgcn {

/// SoftmaxHead marks a classifier output layer: the affine map still emits
/// raw logits (softmax is fused into softmax_xent for stability); the tag
/// tells model assembly and evaluation how to read the layer's output.
enum class Activation { Identity, Relu, SoftmaxHead };

struct DenseLayer {
  Mat weight;  // F_in x F_out
  Vec bias;    // F_out
  Activation act = Activation::Identity;
};

Mat dense_forward(const DenseLayer& layer, const Mat& x);

struct DenseGrads {
  Mat weight;
  Vec bias;
  Mat x;
};

/// Gradients of an upstream scalar through y = act(xW + b). With l2 > 0 the
/// weight gradient includes the ridge term l2*W (bias is not regularized),
/// matching a loss contribution of 0.5*l2*|W|_F^2.
DenseGrads dense_backward(const DenseLayer& layer, const Mat& x, const Mat& grad_out,
                          double l2 = 0.0);

/// 0.5 * coeff * sum of squared Frobenius norms.
double l2_penalty(double coeff, const std::vector<const Mat*>& weights);

struct LabelSet {
  static constexpr int kUnlabeled = -1;

  std::vector<int> labels;  // class index or kUnlabeled
  int num_classes = 0;

  LabelSet() = default;
  LabelSet(std::vector<int> l, int classes);

  int size() const { return static_cast<int>(labels.size()); }
  int labeled_count() const;
  bool is_labeled(int i) const { return labels[static_cast<std::size_t>(i)] != kUnlabeled; }
};

struct XentResult {
  double loss;
  Mat grad;  // B x C, zero on unlabeled rows
};

/// Mean cross-entropy over labeled rows only; unlabeled rows contribute
/// nothing to the loss or the gradient.
XentResult softmax_xent(const Mat& logits, const LabelSet& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;  // the "momentum" knob
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 0.95;  // applied per epoch
  double l2 = 5e-4;        // ridge coefficient handed to dense_backward

  void check() const;
};

struct AdamState {
  Vec m;
  Vec v;
  long long t = 0;

  static AdamState zeros(Eigen::Index dim);
};

/// In-place ADAM update with bias correction; effective learning rate is
/// lr * lr_decay^epoch.
void adam_step(AdamState& state, Vec& params, const Vec& grads, const AdamConfig& cfg,
               int epoch);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<int> failing;  // coordinates whose rel. err exceeds tolerance
  int checked = 0;
  bool ok() const { return failing.empty(); }
};

/// Central-difference check (h = 1e-5) of the closure's analytic gradient.
/// The closure returns (value, gradient) at a parameter vector; only the
/// value is used for the difference quotients. All coordinates are tested
/// when dim <= min_coords, otherwise a seeded random subset of min_coords.
GradCheckReport gradcheck(const std::function<std::pair<double, Vec>(const Vec&)>& f,
                          const Vec& params, double tolerance, int min_coords = 200,
                          std::uint64_t seed = 0);

}  // namespace rgcn
