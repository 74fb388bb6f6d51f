#pragma once

// Dense-layer kernels over row-major batches (one sample per row).
//
// `reference` is the plain serial implementation kept for testing. `parallel`
// is what the networks use: rows of the batch (or output units, for weight
// gradients) are cut into fixed-size chunks spread over OpenMP threads, each
// chunk handled by an Eigen GEMM. Each output element is produced by exactly
// one chunk, so results do not depend on the thread count.

#include <span>

#include "sero/matrix.hpp"

namespace sero::kernels {

namespace reference {

/// y = x W^T + b, with W stored [out x in].
void affine_forward(const Matrix& weight, std::span<const double> bias, const Matrix& x, Matrix& y);
/// dx = dy W.
void affine_backward_input(const Matrix& weight, const Matrix& dy, Matrix& dx);
/// dW += dy^T x, db += column sums of dy.
void affine_backward_params(const Matrix& x, const Matrix& dy, Matrix& dweight, std::span<double> dbias);

}  // namespace reference

namespace parallel {

void affine_forward(const Matrix& weight, std::span<const double> bias, const Matrix& x, Matrix& y);
void affine_backward_input(const Matrix& weight, const Matrix& dy, Matrix& dx);
void affine_backward_params(const Matrix& x, const Matrix& dy, Matrix& dweight, std::span<double> dbias);

}  // namespace parallel

}  // namespace sero::kernels
