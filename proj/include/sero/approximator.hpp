#pragma once

// Feedforward function approximator: dense layers, rectifier or tanh hidden
// activations, inverted dropout on hidden layers, exact reverse-mode
// gradients and Adam.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sero/matrix.hpp"
#include "sero/rng.hpp"

namespace sero {

enum class Activation { relu, tanh };

enum class KernelPath { parallel, reference };

struct DenseLayer {
  Matrix weight;  // [out x in]
  Vector bias;    // [out]

  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  std::vector<Activation> activations;  // one per hidden layer
  std::vector<double> dropout;          // one per hidden layer, each in [0, 1)

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.back().weight.rows; }
  std::size_t hidden_count() const { return layers.size() - 1; }
  std::size_t parameter_count() const;
  bool has_dropout() const;

  /// Throws ShapeError / ConfigError when the invariants do not hold.
  void validate() const;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights and biases.
  static MlpParams create(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t output_dim, double dropout, Rng& rng,
                          Activation activation = Activation::relu);

  bool operator==(const MlpParams&) const = default;
};

/// Binary keep-masks for the hidden layers of a network, for `rows` samples.
/// Entry (r, i) of layer k lives at keep[k][r * width_k + i]. The 1/q scale is
/// applied at forward time.
struct DropoutMask {
  std::size_t rows = 1;
  std::vector<std::vector<std::uint8_t>> keep;
  std::vector<double> keep_probability;
};

/// One real per parameter, shape-congruent with the MlpParams it came from.
struct GradientSet {
  std::vector<DenseLayer> layers;

  static GradientSet zeros_like(const MlpParams& params);
  void add(const GradientSet& other, double scale = 1.0);
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct MlpTape {
  std::vector<Matrix> inputs;     // input to each layer
  std::vector<Matrix> activated;  // hidden activations before dropout
  const DropoutMask* mask = nullptr;
};

struct BackwardResult {
  GradientSet grads;
  Matrix input_grad;
};

/// Deterministic (mask absent) or masked forward pass of a single input.
Vector forward(const MlpParams& params, std::span<const double> input,
               const DropoutMask* mask = nullptr);

/// Batched forward pass. When `tape` is given it is filled for backward().
Matrix forward_batch(const MlpParams& params, const Matrix& input, const DropoutMask* mask = nullptr,
                     MlpTape* tape = nullptr, KernelPath path = KernelPath::parallel);

/// Reverse-mode pass. Parameter gradients are skipped when `param_grads` is false.
BackwardResult backward(const MlpParams& params, const MlpTape& tape, const Matrix& output_grad,
                        bool param_grads = true, KernelPath path = KernelPath::parallel);

/// Maps a network output batch to a scalar and writes d(value)/d(output).
using Objective = std::function<double(const Matrix& output, Matrix& output_grad)>;

struct ValueAndGradients {
  double value = 0.0;
  GradientSet grads;
};

ValueAndGradients gradients(const Objective& objective, const MlpParams& params, const Matrix& batch,
                            const DropoutMask* mask = nullptr);

DropoutMask sample_mask(const MlpParams& params, Rng& rng, std::size_t rows = 1);

/// Mutable views over every weight and bias block, in layer order.
std::vector<std::span<double>> parameter_blocks(std::vector<DenseLayer>& layers);
std::vector<std::span<const double>> parameter_blocks(const std::vector<DenseLayer>& layers);

Vector flatten(const std::vector<DenseLayer>& layers);
void unflatten(std::span<const double> flat, std::vector<DenseLayer>& layers);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const MlpParams& params);
};

/// One Adam update of `params` in place.
void adam_step(MlpParams& params, const GradientSet& grads, AdamState& state, double lr,
               const AdamOptions& options = {});

}  // namespace sero
