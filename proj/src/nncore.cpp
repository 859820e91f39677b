#include "rgcn/nncore.hpp"

#include <algorithm>
#include <cmath>

namespace rgcn {

Mat dense_forward(const DenseLayer& layer, const Mat& x) {
  if (x.cols() != layer.weight.rows()) throw InvalidData("input width does not match layer");
  if (layer.bias.size() != layer.weight.cols()) throw InvalidData("bias size does not match layer");
  Mat z = (x * layer.weight).rowwise() + layer.bias.transpose();
  if (layer.act == Activation::Relu) return z.cwiseMax(0.0);
  return z;  // Identity and SoftmaxHead both emit raw logits
}

DenseGrads dense_backward(const DenseLayer& layer, const Mat& x, const Mat& grad_out,
                          double l2) {
  if (x.cols() != layer.weight.rows()) throw InvalidData("input width does not match layer");
  if (grad_out.rows() != x.rows() || grad_out.cols() != layer.weight.cols())
    throw InvalidData("gradient shape does not match layer output");

  Mat gz = grad_out;
  if (layer.act == Activation::Relu) {
    Mat z = (x * layer.weight).rowwise() + layer.bias.transpose();
    gz = (z.array() > 0.0).cast<double>() * grad_out.array();
  }
  DenseGrads g;
  g.weight = x.transpose() * gz + l2 * layer.weight;
  g.bias = gz.colwise().sum().transpose();
  g.x = gz * layer.weight.transpose();
  return g;
}

double l2_penalty(double coeff, const std::vector<const Mat*>& weights) {
  double acc = 0.0;
  for (const Mat* w : weights) acc += w->squaredNorm();
  return 0.5 * coeff * acc;
}

LabelSet::LabelSet(std::vector<int> l, int classes) : labels(std::move(l)), num_classes(classes) {
  if (classes < 1) throw InvalidParameter("need at least one class");
  int labeled = 0;
  for (int y : labels) {
    if (y == kUnlabeled) continue;
    if (y < 0 || y >= classes) throw InvalidParameter("label out of range");
    ++labeled;
  }
  if (labeled == 0) throw InvalidParameter("need at least one labeled sample");
}

int LabelSet::labeled_count() const {
  int c = 0;
  for (int y : labels) c += (y != kUnlabeled);
  return c;
}

XentResult softmax_xent(const Mat& logits, const LabelSet& labels) {
  if (static_cast<int>(logits.rows()) != labels.size())
    throw InvalidData("logit rows do not match label count");
  if (static_cast<int>(logits.cols()) != labels.num_classes)
    throw InvalidData("logit columns do not match class count");
  const int labeled = labels.labeled_count();
  if (labeled == 0) throw InvalidData("all rows unlabeled");

  XentResult r;
  r.loss = 0.0;
  r.grad = Mat::Zero(logits.rows(), logits.cols());
  for (int b = 0; b < labels.size(); ++b) {
    int y = labels.labels[static_cast<std::size_t>(b)];
    if (y == LabelSet::kUnlabeled) continue;
    double m = logits.row(b).maxCoeff();
    Eigen::RowVectorXd shifted = logits.row(b).array() - m;
    Eigen::RowVectorXd ex = shifted.array().exp();
    double z = ex.sum();
    r.loss += std::log(z) - shifted[y];
    r.grad.row(b) = ex / (z * labeled);
    r.grad(b, y) -= 1.0 / labeled;
  }
  r.loss /= labeled;
  return r;
}

void AdamConfig::check() const {
  if (lr <= 0.0) throw InvalidParameter("learning rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw InvalidParameter("betas must lie in [0, 1)");
  if (eps <= 0.0) throw InvalidParameter("eps must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw InvalidParameter("lr decay must lie in (0, 1]");
  if (l2 < 0.0) throw InvalidParameter("l2 coefficient must be non-negative");
}

AdamState AdamState::zeros(Eigen::Index dim) {
  AdamState s;
  s.m = Vec::Zero(dim);
  s.v = Vec::Zero(dim);
  s.t = 0;
  return s;
}

void adam_step(AdamState& state, Vec& params, const Vec& grads, const AdamConfig& cfg,
               int epoch) {
  cfg.check();
  if (state.m.size() != params.size() || grads.size() != params.size())
    throw InvalidParameter("optimizer state does not match parameter count");
  if (!grads.allFinite()) throw Diverged("non-finite gradient", epoch);

  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double lr_eff = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
  Vec mhat = state.m / bc1;
  Vec vhat = state.v / bc2;
  Vec denom = vhat.cwiseSqrt() + Vec::Constant(params.size(), cfg.eps);
  params -= lr_eff * mhat.cwiseQuotient(denom);
}

GradCheckReport gradcheck(const std::function<std::pair<double, Vec>(const Vec&)>& f,
                          const Vec& params, double tolerance, int min_coords,
                          std::uint64_t seed) {
  const int dim = static_cast<int>(params.size());
  Vec analytic = f(params).second;
  if (analytic.size() != dim) throw InvalidData("gradient size does not match parameters");

  std::vector<int> coords;
  if (dim <= min_coords) {
    coords.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) coords[static_cast<std::size_t>(i)] = i;
  } else {
    Rng rng(Rng::mix(seed, 0x6772616463686bULL));
    coords = rng.sample_without_replacement(dim, min_coords);
  }

  const double h = 1e-5;
  GradCheckReport rep;
  rep.checked = static_cast<int>(coords.size());
  for (int c : coords) {
    Vec p = params;
    p[c] += h;
    double fp = f(p).first;
    p[c] = params[c] - h;
    double fm = f(p).first;
    double num = (fp - fm) / (2.0 * h);
    double ana = analytic[c];
    double err = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-5});
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    if (err > tolerance) rep.failing.push_back(c);
  }
  return rep;
}

}  // namespace rgcn
