#include "sero/kernels.hpp"

#include <algorithm>
#include <cstddef>

#include <Eigen/Core>

#include "sero/errors.hpp"

namespace sero::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

void check_forward(const Matrix& weight, std::span<const double> bias, const Matrix& x, Matrix& y) {
  if (x.cols != weight.cols || bias.size() != weight.rows) {
    throw ShapeError("affine_forward: input width " + std::to_string(x.cols) + " vs layer in " +
                     std::to_string(weight.cols));
  }
  if (y.rows != x.rows || y.cols != weight.rows) y = Matrix(x.rows, weight.rows);
}

void check_backward_input(const Matrix& weight, const Matrix& dy, Matrix& dx) {
  if (dy.cols != weight.rows) throw ShapeError("affine_backward_input: gradient width mismatch");
  if (dx.rows != dy.rows || dx.cols != weight.cols) dx = Matrix(dy.rows, weight.cols);
}

void check_backward_params(const Matrix& x, const Matrix& dy, const Matrix& dweight,
                           std::span<double> dbias) {
  if (x.rows != dy.rows || dweight.rows != dy.cols || dweight.cols != x.cols ||
      dbias.size() != dy.cols) {
    throw ShapeError("affine_backward_params: shape mismatch");
  }
}

}  // namespace

namespace reference {

void affine_forward(const Matrix& weight, std::span<const double> bias, const Matrix& x, Matrix& y) {
  check_forward(weight, bias, x, y);
  for (std::size_t b = 0; b < x.rows; ++b) {
    for (std::size_t j = 0; j < weight.rows; ++j) {
      double acc = bias[j];
      for (std::size_t i = 0; i < weight.cols; ++i) acc += weight(j, i) * x(b, i);
      y(b, j) = acc;
    }
  }
}

void affine_backward_input(const Matrix& weight, const Matrix& dy, Matrix& dx) {
  check_backward_input(weight, dy, dx);
  for (std::size_t b = 0; b < dy.rows; ++b) {
    for (std::size_t i = 0; i < weight.cols; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < weight.rows; ++j) acc += dy(b, j) * weight(j, i);
      dx(b, i) = acc;
    }
  }
}

void affine_backward_params(const Matrix& x, const Matrix& dy, Matrix& dweight, std::span<double> dbias) {
  check_backward_params(x, dy, dweight, dbias);
  for (std::size_t j = 0; j < dy.cols; ++j) {
    for (std::size_t b = 0; b < dy.rows; ++b) {
      dbias[j] += dy(b, j);
      for (std::size_t i = 0; i < x.cols; ++i) dweight(j, i) += dy(b, j) * x(b, i);
    }
  }
}

}  // namespace reference

namespace parallel {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// Work is cut into fixed-size chunks (independent of the thread count) so that
// every element goes through the same GEMM code path on any machine.
constexpr std::ptrdiff_t kChunk = 64;
constexpr Eigen::Index kRowBlock = 8;
constexpr Eigen::Index kMinRows = 24;  // above Eigen's coefficient-wise product cutoff

ConstMap view(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}
MutMap view(Matrix& m) { return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)}; }

std::ptrdiff_t chunks(std::size_t n) { return (static_cast<std::ptrdiff_t>(n) + kChunk - 1) / kChunk; }

}  // namespace

void affine_forward(const Matrix& weight, std::span<const double> bias, const Matrix& x, Matrix& y) {
  check_forward(weight, bias, x, y);
  const auto w = view(weight);
  const auto xs = view(x);
  auto ys = view(y);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(bias.size()));
  const std::ptrdiff_t n = chunks(x.rows);
#pragma omp parallel for schedule(static) if (x.rows * weight.cols * weight.rows > kParallelThreshold)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const Eigen::Index r0 = c * kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, xs.rows() - r0);
    auto out = ys.middleRows(r0, len);
    const Eigen::Index rows = std::max<Eigen::Index>(kMinRows, (len + kRowBlock - 1) / kRowBlock * kRowBlock);
    if (rows != len) {
      // Small or ragged blocks would take a different product kernel; pad them
      // so a row's result does not depend on where it sits in the batch.
      RowMajor padded = RowMajor::Zero(rows, xs.cols());
      padded.topRows(len) = xs.middleRows(r0, len);
      const RowMajor prod = padded * w.transpose();
      out = prod.topRows(len);
    } else {
      out.noalias() = xs.middleRows(r0, len) * w.transpose();
    }
    out.rowwise() += b;
  }
}

void affine_backward_input(const Matrix& weight, const Matrix& dy, Matrix& dx) {
  check_backward_input(weight, dy, dx);
  const auto w = view(weight);
  const auto g = view(dy);
  auto d = view(dx);
  const std::ptrdiff_t n = chunks(dy.rows);
#pragma omp parallel for schedule(static) if (dy.rows * weight.cols * weight.rows > kParallelThreshold)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const Eigen::Index r0 = c * kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, g.rows() - r0);
    d.middleRows(r0, len).noalias() = g.middleRows(r0, len) * w;
  }
}

void affine_backward_params(const Matrix& x, const Matrix& dy, Matrix& dweight, std::span<double> dbias) {
  check_backward_params(x, dy, dweight, dbias);
  const auto xs = view(x);
  const auto g = view(dy);
  auto dw = view(dweight);
  Eigen::Map<Eigen::RowVectorXd> db(dbias.data(), static_cast<Eigen::Index>(dbias.size()));
  const std::ptrdiff_t n = chunks(dy.cols);
#pragma omp parallel for schedule(static) if (dy.rows * x.cols * dy.cols > kParallelThreshold)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const Eigen::Index j0 = c * kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, g.cols() - j0);
    dw.middleRows(j0, len).noalias() += g.middleCols(j0, len).transpose() * xs;
    // Reduce into aligned scratch: the bias storage may sit at any alignment.
    const Eigen::RowVectorXd sums = g.middleCols(j0, len).colwise().sum();
    db.segment(j0, len) += sums;
  }
}

}  // namespace parallel

}  // namespace sero::kernels
