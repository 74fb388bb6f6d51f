#include "sero/approximator.hpp"

#include <cmath>
#include <string>

#include "sero/errors.hpp"
#include "sero/kernels.hpp"

namespace sero {

namespace {

void affine_forward(KernelPath path, const DenseLayer& layer, const Matrix& x, Matrix& y) {
  if (path == KernelPath::parallel) {
    kernels::parallel::affine_forward(layer.weight, layer.bias, x, y);
  } else {
    kernels::reference::affine_forward(layer.weight, layer.bias, x, y);
  }
}

void check_finite(const Matrix& m, std::size_t layer) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation", static_cast<std::ptrdiff_t>(layer));
  }
}

void apply_activation(Activation act, Matrix& m) {
  if (act == Activation::relu) {
    for (double& v : m.data) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : m.data) v = std::tanh(v);
  }
}

void check_mask(const MlpParams& params, const DropoutMask& mask, std::size_t rows) {
  if (mask.keep.size() != params.hidden_count() || mask.keep_probability.size() != params.hidden_count()) {
    throw ShapeError("dropout mask layer count does not match network");
  }
  if (mask.rows != rows) throw ShapeError("dropout mask rows do not match batch");
  for (std::size_t k = 0; k < params.hidden_count(); ++k) {
    if (mask.keep[k].size() != rows * params.layers[k].weight.rows) {
      throw ShapeError("dropout mask width mismatch at layer " + std::to_string(k));
    }
  }
}

void apply_mask(const DropoutMask& mask, std::size_t layer, Matrix& m) {
  const double scale = 1.0 / mask.keep_probability[layer];
  const auto& keep = mask.keep[layer];
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = keep[i] ? m.data[i] * scale : 0.0;
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool MlpParams::has_dropout() const {
  for (double p : dropout) {
    if (p > 0.0) return true;
  }
  return false;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (activations.size() != hidden_count() || dropout.size() != hidden_count()) {
    throw ShapeError("activation/dropout tags must cover every hidden layer");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.weight.rows == 0 || l.weight.cols == 0) throw ShapeError("empty layer " + std::to_string(k));
    if (l.weight.data.size() != l.weight.rows * l.weight.cols || l.bias.size() != l.weight.rows) {
      throw ShapeError("layer " + std::to_string(k) + " bias/weight size mismatch");
    }
    if (k + 1 < layers.size() && layers[k + 1].weight.cols != l.weight.rows) {
      throw ShapeError("layer " + std::to_string(k) + " output does not chain into layer " +
                       std::to_string(k + 1));
    }
  }
  for (double p : dropout) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  }
}

MlpParams MlpParams::create(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t output_dim, double dropout, Rng& rng, Activation activation) {
  MlpParams params;
  std::size_t fan_in = input_dim;
  auto add_layer = [&](std::size_t out) {
    DenseLayer layer{Matrix(out, fan_in), Vector(out)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weight.data) w = uniform(rng, -bound, bound);
    for (double& b : layer.bias) b = uniform(rng, -bound, bound);
    params.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (std::size_t width : hidden) {
    add_layer(width);
    params.activations.push_back(activation);
    params.dropout.push_back(dropout);
  }
  add_layer(output_dim);
  params.validate();
  return params;
}

GradientSet GradientSet::zeros_like(const MlpParams& params) {
  GradientSet g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix(l.weight.rows, l.weight.cols), Vector(l.bias.size(), 0.0)});
  }
  return g;
}

void GradientSet::add(const GradientSet& other, double scale) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient sets are not congruent");
  auto dst = parameter_blocks(layers);
  auto src = parameter_blocks(other.layers);
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (dst[k].size() != src[k].size()) throw ShapeError("gradient sets are not congruent");
    for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += scale * src[k][i];
  }
}

Vector forward(const MlpParams& params, std::span<const double> input, const DropoutMask* mask) {
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  const Matrix y = forward_batch(params, x, mask);
  return Vector(y.data.begin(), y.data.end());
}

Matrix forward_batch(const MlpParams& params, const Matrix& input, const DropoutMask* mask, MlpTape* tape,
                     KernelPath path) {
  if (input.cols != params.input_dim()) {
    throw ShapeError("input width " + std::to_string(input.cols) + " does not match network input " +
                     std::to_string(params.input_dim()));
  }
  if (mask != nullptr) check_mask(params, *mask, input.rows);
  if (tape != nullptr) {
    tape->inputs.assign(params.layers.size(), Matrix());
    tape->activated.assign(params.hidden_count(), Matrix());
    tape->mask = mask;
    tape->inputs[0] = input;
  }
  Matrix current = input;
  Matrix next;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    affine_forward(path, params.layers[k], current, next);
    check_finite(next, k);
    if (k < params.hidden_count()) {
      apply_activation(params.activations[k], next);
      if (tape != nullptr) tape->activated[k] = next;
      if (mask != nullptr) apply_mask(*mask, k, next);
      if (tape != nullptr) tape->inputs[k + 1] = next;
    }
    std::swap(current, next);
  }
  return current;
}

BackwardResult backward(const MlpParams& params, const MlpTape& tape, const Matrix& output_grad,
                        bool param_grads, KernelPath path) {
  if (tape.inputs.size() != params.layers.size()) throw StateError("tape does not belong to this network");
  if (output_grad.cols != params.output_dim() || output_grad.rows != tape.inputs[0].rows) {
    throw ShapeError("output gradient shape mismatch");
  }
  BackwardResult result;
  if (param_grads) result.grads = GradientSet::zeros_like(params);
  Matrix grad = output_grad;
  Matrix grad_in;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    if (param_grads) {
      auto& g = result.grads.layers[k];
      if (path == KernelPath::parallel) {
        kernels::parallel::affine_backward_params(tape.inputs[k], grad, g.weight, g.bias);
      } else {
        kernels::reference::affine_backward_params(tape.inputs[k], grad, g.weight, g.bias);
      }
    }
    if (path == KernelPath::parallel) {
      kernels::parallel::affine_backward_input(layer.weight, grad, grad_in);
    } else {
      kernels::reference::affine_backward_input(layer.weight, grad, grad_in);
    }
    if (k > 0) {
      const std::size_t h = k - 1;
      if (tape.mask != nullptr) {
        const double scale = 1.0 / tape.mask->keep_probability[h];
        const auto& keep = tape.mask->keep[h];
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) grad_in.data[i] = keep[i] ? grad_in.data[i] * scale : 0.0;
      }
      const auto& act = tape.activated[h].data;
      if (params.activations[h] == Activation::relu) {
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) {
          if (!(act[i] > 0.0)) grad_in.data[i] = 0.0;
        }
      } else {
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) grad_in.data[i] *= 1.0 - act[i] * act[i];
      }
    }
    std::swap(grad, grad_in);
  }
  result.input_grad = std::move(grad);
  return result;
}

ValueAndGradients gradients(const Objective& objective, const MlpParams& params, const Matrix& batch,
                            const DropoutMask* mask) {
  MlpTape tape;
  Matrix out = forward_batch(params, batch, mask, &tape);
  Matrix dout(out.rows, out.cols);
  ValueAndGradients result;
  result.value = objective(out, dout);
  if (!std::isfinite(result.value)) throw NumericError("non-finite objective value");
  result.grads = backward(params, tape, dout).grads;
  return result;
}

DropoutMask sample_mask(const MlpParams& params, Rng& rng, std::size_t rows) {
  DropoutMask mask;
  mask.rows = rows;
  for (std::size_t k = 0; k < params.hidden_count(); ++k) {
    const double p = params.dropout[k];
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    const double q = 1.0 - p;
    std::vector<std::uint8_t> keep(rows * params.layers[k].weight.rows, 1);
    if (p > 0.0) {
      std::bernoulli_distribution coin(q);
      for (auto& m : keep) m = coin(rng) ? 1 : 0;
    }
    mask.keep.push_back(std::move(keep));
    mask.keep_probability.push_back(q);
  }
  return mask;
}

std::vector<std::span<double>> parameter_blocks(std::vector<DenseLayer>& layers) {
  std::vector<std::span<double>> blocks;
  for (auto& l : layers) {
    blocks.emplace_back(l.weight.data);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

std::vector<std::span<const double>> parameter_blocks(const std::vector<DenseLayer>& layers) {
  std::vector<std::span<const double>> blocks;
  for (const auto& l : layers) {
    blocks.emplace_back(l.weight.data);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

Vector flatten(const std::vector<DenseLayer>& layers) {
  Vector flat;
  for (auto block : parameter_blocks(layers)) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

void unflatten(std::span<const double> flat, std::vector<DenseLayer>& layers) {
  std::size_t offset = 0;
  for (auto block : parameter_blocks(layers)) {
    if (offset + block.size() > flat.size()) throw ShapeError("flat parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  }
  if (offset != flat.size()) throw ShapeError("flat parameter vector too long");
}

AdamState AdamState::zeros_like(const MlpParams& params) {
  AdamState s;
  s.m = GradientSet::zeros_like(params).layers;
  s.v = s.m;
  return s;
}

void adam_step(MlpParams& params, const GradientSet& grads, AdamState& state, double lr,
               const AdamOptions& options) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  auto p = parameter_blocks(params.layers);
  auto g = parameter_blocks(grads.layers);
  auto m = parameter_blocks(state.m);
  auto v = parameter_blocks(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("optimizer state is not congruent with parameters");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k].size() != p[k].size() || m[k].size() != p[k].size() || v[k].size() != p[k].size()) {
      throw ShapeError("optimizer state is not congruent with parameters");
    }
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      m[k][i] = options.beta1 * m[k][i] + (1.0 - options.beta1) * g[k][i];
      v[k][i] = options.beta2 * v[k][i] + (1.0 - options.beta2) * g[k][i] * g[k][i];
      const double mhat = m[k][i] / c1;
      const double vhat = v[k][i] / c2;
      p[k][i] -= lr * mhat / (std::sqrt(vhat) + options.eps);
    }
  }
}

}  // namespace sero
