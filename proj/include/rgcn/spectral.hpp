#pragma once

#include <vector>

#include "rgcn/common.hpp"
#include "rgcn/graph.hpp"

namespace rgcn {

/// Batch of vertex signals: B matrices, each n x F (vertices x feature maps).
using SignalBatch = std::vector<Mat>;

/// Filter coefficients for a polynomial filter bank: theta[p] is the
/// F_in x F_out coefficient matrix of polynomial order p.
struct ChebParams {
  std::vector<Mat> theta;

  int order() const { return static_cast<int>(theta.size()); }
  int f_in() const { return theta.empty() ? 0 : static_cast<int>(theta[0].rows()); }
  int f_out() const { return theta.empty() ? 0 : static_cast<int>(theta[0].cols()); }

  static ChebParams zeros(int s, int f_in, int f_out);
  void check() const;  // s >= 1, consistent shapes, finite entries
};

/// Chebyshev basis signals: element p is T_p(L_hat) applied to x, computed by
/// the recurrence x0 = x, x1 = L_hat x, xp = 2 L_hat x(p-1) - x(p-2).
std::vector<SignalBatch> cheb_basis(const Laplacian& l_hat, const SignalBatch& x, int s);

/// y[b][:,j] = sum_i sum_p theta[p](i,j) * basis[p][b][:,i].
SignalBatch cheb_conv_forward(const std::vector<SignalBatch>& basis, const ChebParams& params);

/// Convenience wrapper: basis + contraction in one call.
SignalBatch cheb_conv(const Laplacian& l_hat, const SignalBatch& x, const ChebParams& params);

/// Reference filter through an explicit dense eigendecomposition of the
/// normalized Laplacian (lambda_max taken from that same decomposition).
/// Guarded to small graphs; shares no code with the sparse recurrence path.
SignalBatch dense_spectral_oracle(const Laplacian& l, const ChebParams& params,
                                  const SignalBatch& x);

struct ChebGrad {
  std::vector<Mat> theta;  // same layout as ChebParams::theta
  SignalBatch x;
};

/// Gradients of sum(grad_out .* forward(x)) with respect to theta and x.
/// grad_theta[p] = sum_b basis[p][b]^T grad_out[b]; grad_x runs the same
/// recurrence on grad_out (L_hat is symmetric) and contracts with theta
/// transposed over (in, out).
ChebGrad cheb_conv_backward(const Laplacian& l_hat, const std::vector<SignalBatch>& basis,
                            const ChebParams& params, const SignalBatch& grad_out);

/// Max over consecutive groups of pool_size vertices, per feature map.
/// pool_size == 1 is the identity. The input must already be permuted to the
/// coarsening layout, with fake slots holding -inf sentinels.
SignalBatch graph_max_pool(const SignalBatch& x, int pool_size);

}  // namespace rgcn
