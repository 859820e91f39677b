#include "rgcn/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rgcn {

namespace {

constexpr std::uint64_t kInitStream = 0x6165696e6974;
constexpr std::uint64_t kShuffleStream = 0x616573687566;
constexpr std::uint64_t kCorruptStream = 0x636f7272;

Mat activate(const Mat& z, AeActivation act) {
  switch (act) {
    case AeActivation::Identity: return z;
    case AeActivation::Relu: return z.cwiseMax(0.0);
    case AeActivation::Sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  throw InvalidParameter("unknown activation");
}

// derivative expressed through the activation output
Mat activate_grad(const Mat& a, AeActivation act) {
  switch (act) {
    case AeActivation::Identity: return Mat::Ones(a.rows(), a.cols());
    case AeActivation::Relu: return (a.array() > 0.0).cast<double>().matrix();
    case AeActivation::Sigmoid: return (a.array() * (1.0 - a.array())).matrix();
  }
  throw InvalidParameter("unknown activation");
}

}  // namespace

AeSpec AeSpec::mirrored(int m, const std::vector<int>& hidden, AeActivation act,
                        std::uint64_t seed) {
  AeSpec s;
  s.layer_sizes.push_back(m);
  for (int h : hidden) s.layer_sizes.push_back(h);
  for (auto it = hidden.rbegin() + 1; it != hidden.rend(); ++it) s.layer_sizes.push_back(*it);
  if (!hidden.empty()) s.layer_sizes.push_back(m);
  s.activation = act;
  s.seed = seed;
  s.check();
  return s;
}

void AeSpec::check() const {
  if (layer_sizes.size() < 3) throw InvalidParameter("autoencoder needs at least one hidden layer");
  if (layer_sizes.front() != layer_sizes.back())
    throw InvalidParameter("autoencoder input and output widths must match");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidParameter("layer sizes must be positive");
}

std::size_t ae_param_count(const AeSpec& spec) {
  spec.check();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l)
    total += static_cast<std::size_t>(spec.layer_sizes[l]) *
                 static_cast<std::size_t>(spec.layer_sizes[l + 1]) +
             static_cast<std::size_t>(spec.layer_sizes[l + 1]);
  return total;
}

std::vector<DenseLayer> ae_init(const AeSpec& spec) {
  spec.check();
  Rng rng = Rng::stream(spec.seed, kInitStream);
  std::vector<DenseLayer> w;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    int fi = spec.layer_sizes[l];
    int fo = spec.layer_sizes[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(fi));
    DenseLayer layer;
    layer.weight.resize(fi, fo);
    for (int i = 0; i < fi; ++i)
      for (int j = 0; j < fo; ++j) layer.weight(i, j) = rng.uniform(-bound, bound);
    layer.bias = Vec::Zero(fo);
    layer.act = Activation::Identity;  // nonlinearity applied by the stack
    w.push_back(std::move(layer));
  }
  return w;
}

namespace {

void check_weights(const AeSpec& spec, const std::vector<DenseLayer>& w) {
  if (w.size() + 1 != spec.layer_sizes.size()) throw InvalidData("weight stack does not match spec");
  for (std::size_t l = 0; l < w.size(); ++l)
    if (w[l].weight.rows() != spec.layer_sizes[l] || w[l].weight.cols() != spec.layer_sizes[l + 1])
      throw InvalidData("weight shape does not match spec");
}

// forward pass keeping all post-activation values (activations[0] = input)
std::vector<Mat> forward_stack(const AeSpec& spec, const std::vector<DenseLayer>& w,
                               const Mat& x) {
  std::vector<Mat> a;
  a.reserve(w.size() + 1);
  a.push_back(x);
  for (std::size_t l = 0; l < w.size(); ++l) {
    Mat z = dense_forward(w[l], a.back());
    a.push_back(l + 1 < w.size() ? activate(z, spec.activation) : std::move(z));
  }
  return a;
}

}  // namespace

Mat ae_forward(const AeSpec& spec, const std::vector<DenseLayer>& weights, const Mat& x) {
  spec.check();
  check_weights(spec, weights);
  if (static_cast<int>(x.cols()) != spec.input_dim())
    throw InvalidData("input width does not match autoencoder");
  return forward_stack(spec, weights, x).back();
}

Vec ae_flatten(const std::vector<DenseLayer>& weights) {
  std::size_t total = 0;
  for (const DenseLayer& l : weights)
    total += static_cast<std::size_t>(l.weight.size()) + static_cast<std::size_t>(l.bias.size());
  Vec flat(static_cast<Eigen::Index>(total));
  Eigen::Index at = 0;
  for (const DenseLayer& l : weights) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) flat[at++] = l.weight(i, j);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) flat[at++] = l.bias[j];
  }
  return flat;
}

void ae_unflatten(const Vec& flat, std::vector<DenseLayer>& weights) {
  Eigen::Index at = 0;
  for (DenseLayer& l : weights) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat[at++];
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias[j] = flat[at++];
  }
  if (at != flat.size()) throw InvalidData("flat parameter size does not match weight stack");
}

AeEval ae_loss_and_grad(const AeSpec& spec, const std::vector<DenseLayer>& weights,
                        const Mat& input, const Mat& target, double scale) {
  spec.check();
  check_weights(spec, weights);
  if (input.rows() != target.rows() || input.cols() != target.cols())
    throw InvalidData("input and target shapes differ");
  if (static_cast<int>(input.cols()) != spec.input_dim())
    throw InvalidData("input width does not match autoencoder");

  std::vector<Mat> a = forward_stack(spec, weights, input);
  const double inv_b = 1.0 / static_cast<double>(input.rows());

  AeEval ev;
  ev.output = a.back();
  Mat diff = ev.output - target;
  ev.loss = scale * 0.5 * inv_b * diff.squaredNorm();

  Mat ga = scale * inv_b * diff;  // d loss / d output
  ev.layer_grads.resize(weights.size());
  for (std::size_t l = weights.size(); l-- > 0;) {
    if (l + 1 < weights.size()) ga = ga.cwiseProduct(activate_grad(a[l + 1], spec.activation));
    ev.layer_grads[l] = dense_backward(weights[l], a[l], ga, 0.0);
    ga = ev.layer_grads[l].x;
  }
  ev.grad_input = ga;
  return ev;
}

namespace {

Vec flatten_grads(const std::vector<DenseGrads>& grads) {
  std::size_t total = 0;
  for (const DenseGrads& g : grads)
    total += static_cast<std::size_t>(g.weight.size()) + static_cast<std::size_t>(g.bias.size());
  Vec flat(static_cast<Eigen::Index>(total));
  Eigen::Index at = 0;
  for (const DenseGrads& g : grads) {
    for (Eigen::Index i = 0; i < g.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < g.weight.cols(); ++j) flat[at++] = g.weight(i, j);
    for (Eigen::Index j = 0; j < g.bias.size(); ++j) flat[at++] = g.bias[j];
  }
  return flat;
}

// One training pass over x (optionally corrupting each mini-batch input).
// Returns the epoch-averaged loss. epoch_global drives both lr decay and the
// corruption stream so warm-started runs stay deterministic.
double train_epoch(const AeSpec& spec, std::vector<DenseLayer>& w, AdamState& st,
                   Rng& shuffle, const Mat& x, const NoiseSpec* corruption, int batch,
                   const AdamConfig& cfg, int epoch_global, double scale) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> perm = shuffle.permutation(n);
  double loss_sum = 0.0;
  int batches = 0;
  for (int start = 0; start < n; start += batch) {
    int rows = std::min(batch, n - start);
    Mat xb(rows, x.cols());
    for (int r = 0; r < rows; ++r) xb.row(r) = x.row(perm[static_cast<std::size_t>(start + r)]);

    Mat input = xb;
    if (corruption) {
      NoiseSpec fresh = *corruption;
      fresh.seed = Rng::mix(Rng::mix(corruption->seed, kCorruptStream),
                            static_cast<std::uint64_t>(epoch_global) * 1000003ULL +
                                static_cast<std::uint64_t>(batches));
      input = apply_noise(xb, fresh);
    }

    AeEval ev = ae_loss_and_grad(spec, w, input, xb, scale);
    if (!std::isfinite(ev.loss)) throw Diverged("reconstruction loss is not finite", epoch_global);
    loss_sum += ev.loss;
    ++batches;

    Vec params = ae_flatten(w);
    Vec grads = flatten_grads(ev.layer_grads);
    adam_step(st, params, grads, cfg, epoch_global);
    ae_unflatten(params, w);
  }
  return loss_sum / std::max(1, batches);
}

}  // namespace

AeTrainer::AeTrainer(const AeSpec& s, const AdamConfig& c)
    : spec(s),
      cfg(c),
      weights(ae_init(s)),
      state(AdamState::zeros(static_cast<Eigen::Index>(ae_param_count(s)))),
      shuffle(Rng::stream(s.seed, kShuffleStream)) {
  cfg.check();
}

std::vector<double> AeTrainer::run(const Mat& x, int epochs, int batch,
                                   const NoiseSpec* corruption, double scale) {
  if (static_cast<int>(x.cols()) != spec.input_dim())
    throw InvalidData("training data width does not match autoencoder");
  if (batch < 1) throw InvalidParameter("batch size must be >= 1");
  if (static_cast<int>(x.rows()) < batch)
    throw InvalidParameter("batch size exceeds the number of samples");
  if (epochs < 0) throw InvalidParameter("epochs must be non-negative");

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e)
    losses.push_back(
        train_epoch(spec, weights, state, shuffle, x, corruption, batch, cfg, epoch++, scale));
  return losses;
}

AeTrainResult ae_train(const AeSpec& spec, const Mat& x, int epochs, int batch,
                       const AdamConfig& cfg) {
  AeTrainer t(spec, cfg);
  AeTrainResult r;
  r.epoch_loss = t.run(x, epochs, batch);
  r.weights = std::move(t.weights);
  return r;
}

AeTrainResult dae_train(const AeSpec& spec, const Mat& x, const NoiseSpec& corruption,
                        int epochs, int batch, const AdamConfig& cfg) {
  AeTrainer t(spec, cfg);
  AeTrainResult r;
  r.epoch_loss = t.run(x, epochs, batch, &corruption);
  r.weights = std::move(t.weights);
  return r;
}

Mat prox_l1(const Mat& e, double lam) {
  if (lam < 0.0) throw InvalidParameter("threshold must be non-negative");
  return (e.array() - lam).max(0.0).matrix() + (e.array() + lam).min(0.0).matrix();
}

RlaeResult rlae_fit(const AeSpec& spec, const Mat& x, const RlaeOptions& opt,
                    const AdamConfig& cfg) {
  spec.check();
  cfg.check();
  if (opt.lam <= 0.0) throw InvalidParameter("sparsity threshold must be positive");
  if (opt.tol <= 0.0) throw InvalidParameter("tolerance must be positive");
  if (opt.max_outer < 1) throw InvalidParameter("need at least one outer iteration");
  if (static_cast<int>(x.cols()) != spec.input_dim())
    throw InvalidData("data width does not match autoencoder");

  const double x_norm = x.norm();
  const int batch = std::min<int>(opt.batch, static_cast<int>(x.rows()));

  RlaeResult best;
  best.dec.residual = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  bool converged = false;

  RlaeResult cur;
  AeTrainer trainer(spec, cfg);
  Mat e = Mat::Zero(x.rows(), x.cols());

  for (int outer = 1; outer <= opt.max_outer; ++outer) {
    Mat l_target = x - e;
    trainer.run(l_target, opt.inner_epochs, batch);
    cur.weights = trainer.weights;

    Mat l = ae_forward(spec, cur.weights, l_target);
    e = prox_l1(x - l, opt.lam);
    double abs_res = (x - l - e).norm();
    double residual = x_norm > 0.0 ? abs_res / x_norm : abs_res;
    if (!std::isfinite(residual)) throw Diverged("decomposition residual is not finite", outer);

    cur.dec.low_rank = l;
    cur.dec.err_sparse = e;
    cur.dec.residual = residual;
    cur.dec.outer_iters = outer;
    trace.push_back(residual);
    if (opt.on_outer) opt.on_outer(outer, l, e, residual);

    if (residual < best.dec.residual) {
      best.dec.low_rank = l;
      best.dec.err_sparse = e;
      best.dec.residual = residual;
      best.dec.outer_iters = outer;
      best.weights = cur.weights;
    }
    if (residual < opt.tol) {
      converged = true;
      break;
    }
  }

  RlaeResult out = converged ? std::move(cur) : std::move(best);
  out.dec.converged = converged;
  out.dec.residual_trace = std::move(trace);
  double nz = static_cast<double>((out.dec.err_sparse.array() != 0.0).count());
  out.dec.sparsity = nz / static_cast<double>(out.dec.err_sparse.size());
  return out;
}

std::vector<double> lambda_grid(int n, int m, int count, double decades) {
  if (n < 1 || m < 1) throw InvalidParameter("matrix dimensions must be positive");
  if (count < 1) throw InvalidParameter("grid needs at least one point");
  const double center = 1.0 / std::sqrt(static_cast<double>(std::max(n, m)));
  std::vector<double> grid;
  if (count == 1) return {center};
  for (int i = 0; i < count; ++i) {
    double expo = -decades + 2.0 * decades * static_cast<double>(i) / (count - 1);
    grid.push_back(center * std::pow(10.0, expo));
  }
  return grid;
}

}  // namespace rgcn
