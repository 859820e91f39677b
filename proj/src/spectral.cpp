#include "rgcn/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace rgcn {

namespace {

void check_batch(const SignalBatch& x, int n) {
  if (x.empty()) throw InvalidData("empty signal batch");
  for (const Mat& m : x) {
    if (static_cast<int>(m.rows()) != n) throw InvalidData("signal vertex count does not match Laplacian");
    if (m.cols() != x[0].cols()) throw InvalidData("inconsistent feature counts across batch");
    if (!m.allFinite()) throw InvalidData("signal contains non-finite values");
  }
}

}  // namespace

ChebParams ChebParams::zeros(int s, int f_in, int f_out) {
  if (s < 1) throw InvalidParameter("filter order must be >= 1");
  if (f_in < 1 || f_out < 1) throw InvalidParameter("feature map counts must be >= 1");
  ChebParams p;
  p.theta.assign(static_cast<std::size_t>(s), Mat::Zero(f_in, f_out));
  return p;
}

void ChebParams::check() const {
  if (theta.empty()) throw InvalidParameter("filter order must be >= 1");
  for (const Mat& t : theta) {
    if (t.rows() != theta[0].rows() || t.cols() != theta[0].cols())
      throw InvalidParameter("inconsistent coefficient shapes");
    if (!t.allFinite()) throw InvalidParameter("non-finite filter coefficients");
  }
}

std::vector<SignalBatch> cheb_basis(const Laplacian& l_hat, const SignalBatch& x, int s) {
  if (l_hat.kind != LaplacianKind::Rescaled)
    throw InvalidParameter("filtering expects a rescaled Laplacian");
  if (s < 1) throw InvalidParameter("filter order must be >= 1");
  check_batch(x, l_hat.n());

  std::vector<SignalBatch> basis(static_cast<std::size_t>(s));
  basis[0] = x;
  if (s >= 2) {
    basis[1].reserve(x.size());
    for (const Mat& m : x) basis[1].push_back(l_hat.mat * m);
  }
  for (int p = 2; p < s; ++p) {
    basis[static_cast<std::size_t>(p)].reserve(x.size());
    for (std::size_t b = 0; b < x.size(); ++b)
      basis[static_cast<std::size_t>(p)].push_back(
          2.0 * (l_hat.mat * basis[static_cast<std::size_t>(p - 1)][b]) -
          basis[static_cast<std::size_t>(p - 2)][b]);
  }
  return basis;
}

SignalBatch cheb_conv_forward(const std::vector<SignalBatch>& basis, const ChebParams& params) {
  params.check();
  if (basis.size() != params.theta.size())
    throw InvalidData("basis length does not match filter order");
  const SignalBatch& x0 = basis[0];
  if (x0.empty()) throw InvalidData("empty signal batch");
  if (static_cast<int>(x0[0].cols()) != params.f_in())
    throw InvalidData("input feature count does not match filter");

  SignalBatch y;
  y.reserve(x0.size());
  for (std::size_t b = 0; b < x0.size(); ++b) {
    Mat acc = Mat::Zero(x0[b].rows(), params.f_out());
    for (std::size_t p = 0; p < basis.size(); ++p) {
      if (basis[p].size() != x0.size()) throw InvalidData("ragged basis");
      acc.noalias() += basis[p][b] * params.theta[p];
    }
    y.push_back(std::move(acc));
  }
  return y;
}

SignalBatch cheb_conv(const Laplacian& l_hat, const SignalBatch& x, const ChebParams& params) {
  return cheb_conv_forward(cheb_basis(l_hat, x, params.order()), params);
}

SignalBatch dense_spectral_oracle(const Laplacian& l, const ChebParams& params,
                                  const SignalBatch& x) {
  if (l.kind != LaplacianKind::Normalized)
    throw InvalidParameter("oracle expects a normalized Laplacian");
  if (l.n() > 64) throw OracleScaleExceeded("oracle is restricted to n <= 64");
  params.check();
  check_batch(x, l.n());
  if (static_cast<int>(x[0].cols()) != params.f_in())
    throw InvalidData("input feature count does not match filter");

  const int n = l.n();
  const int s = params.order();
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(l.mat));
  const Mat& u = es.eigenvectors();
  const Vec& lam = es.eigenvalues();
  const double lam_max = lam[n - 1];

  // scalar Chebyshev recurrence on each rescaled eigenvalue
  Mat t(s, n);  // t(p, e) = T_p(lam_hat_e)
  for (int e = 0; e < n; ++e) {
    double lh = lam_max > 0.0 ? 2.0 * lam[e] / lam_max - 1.0 : -1.0;
    t(0, e) = 1.0;
    if (s > 1) t(1, e) = lh;
    for (int p = 2; p < s; ++p) t(p, e) = 2.0 * lh * t(p - 1, e) - t(p - 2, e);
  }

  SignalBatch y;
  y.reserve(x.size());
  for (const Mat& xb : x) {
    Mat spectral = u.transpose() * xb;  // n x F_in
    Mat out_spec = Mat::Zero(n, params.f_out());
    for (int j = 0; j < params.f_out(); ++j)
      for (int i = 0; i < params.f_in(); ++i) {
        Vec filt = Vec::Zero(n);
        for (int p = 0; p < s; ++p) filt += params.theta[static_cast<std::size_t>(p)](i, j) * t.row(p).transpose();
        out_spec.col(j) += filt.cwiseProduct(spectral.col(i));
      }
    y.push_back(u * out_spec);
  }
  return y;
}

ChebGrad cheb_conv_backward(const Laplacian& l_hat, const std::vector<SignalBatch>& basis,
                            const ChebParams& params, const SignalBatch& grad_out) {
  params.check();
  if (basis.size() != params.theta.size())
    throw InvalidData("basis length does not match filter order");
  const SignalBatch& x0 = basis[0];
  if (grad_out.size() != x0.size()) throw InvalidData("gradient batch size mismatch");
  for (std::size_t b = 0; b < grad_out.size(); ++b) {
    if (grad_out[b].rows() != x0[b].rows() || static_cast<int>(grad_out[b].cols()) != params.f_out())
      throw InvalidData("gradient shape mismatch");
  }

  ChebGrad g;
  g.theta.assign(params.theta.size(), Mat::Zero(params.f_in(), params.f_out()));
  for (std::size_t p = 0; p < basis.size(); ++p)
    for (std::size_t b = 0; b < x0.size(); ++b)
      g.theta[p].noalias() += basis[p][b].transpose() * grad_out[b];

  // transpose of y = sum_p T_p(L) x theta_p: since L is symmetric, push
  // grad_out through the same recurrence and contract with theta^T
  std::vector<SignalBatch> gbasis = cheb_basis(l_hat, grad_out, params.order());
  g.x.reserve(x0.size());
  for (std::size_t b = 0; b < x0.size(); ++b) {
    Mat acc = Mat::Zero(x0[b].rows(), params.f_in());
    for (std::size_t p = 0; p < gbasis.size(); ++p)
      acc.noalias() += gbasis[p][b] * params.theta[p].transpose();
    g.x.push_back(std::move(acc));
  }
  return g;
}

SignalBatch graph_max_pool(const SignalBatch& x, int pool_size) {
  if (pool_size < 1) throw InvalidParameter("pool size must be >= 1");
  if (x.empty()) throw InvalidData("empty signal batch");
  if (pool_size == 1) return x;
  const Eigen::Index n = x[0].rows();
  if (n % pool_size != 0) throw InvalidParameter("vertex count not divisible by pool size");

  SignalBatch y;
  y.reserve(x.size());
  for (const Mat& xb : x) {
    if (xb.rows() != n) throw InvalidData("inconsistent vertex counts across batch");
    Mat out(n / pool_size, xb.cols());
    for (Eigen::Index v = 0; v < out.rows(); ++v) {
      out.row(v) = xb.row(v * pool_size);
      for (int t = 1; t < pool_size; ++t)
        out.row(v) = out.row(v).cwiseMax(xb.row(v * pool_size + t));
    }
    y.push_back(std::move(out));
  }
  return y;
}

}  // namespace rgcn
