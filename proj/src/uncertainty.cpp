#include "sero/uncertainty.hpp"

#include <algorithm>
#include <limits>

#include "sero/errors.hpp"

namespace sero {

namespace {

void check_args(const MlpParams& encoder, std::span<const double> state, std::size_t passes) {
  if (passes < 2) throw std::invalid_argument("mc_uncertainty needs at least two dropout passes");
  if (encoder.hidden_count() == 0) throw ConfigError("mc_uncertainty needs an encoder with dropout layers");
  if (state.size() != encoder.input_dim()) throw ShapeError("mc_uncertainty: state dimension mismatch");
}

Vector column_variance(const Matrix& samples) {
  // Deviations from the first sample, so identical samples give exactly zero.
  const double n = static_cast<double>(samples.rows);
  Vector shift(samples.row(0).begin(), samples.row(0).end());
  Vector mean(samples.cols, 0.0);
  for (std::size_t r = 0; r < samples.rows; ++r) {
    for (std::size_t c = 0; c < samples.cols; ++c) mean[c] += samples(r, c) - shift[c];
  }
  for (double& m : mean) m /= n;
  Vector var(samples.cols, 0.0);
  for (std::size_t r = 0; r < samples.rows; ++r) {
    for (std::size_t c = 0; c < samples.cols; ++c) {
      const double d = samples(r, c) - shift[c] - mean[c];
      var[c] += d * d;
    }
  }
  for (double& v : var) v /= n;
  return var;
}

}  // namespace

Vector mc_uncertainty(const MlpParams& encoder, std::span<const double> state, std::size_t passes, Rng& rng,
                      KernelPath path) {
  check_args(encoder, state, passes);
  const DropoutMask masks = sample_mask(encoder, rng, passes);
  Matrix inputs(passes, state.size());
  for (std::size_t r = 0; r < passes; ++r) std::copy(state.begin(), state.end(), inputs.row(r).begin());
  return column_variance(forward_batch(encoder, inputs, &masks, nullptr, path));
}

Vector mc_uncertainty_serial(const MlpParams& encoder, std::span<const double> state, std::size_t passes,
                             Rng& rng) {
  check_args(encoder, state, passes);
  const DropoutMask masks = sample_mask(encoder, rng, passes);
  Matrix outputs(passes, encoder.output_dim());
  Matrix input(1, state.size());
  std::copy(state.begin(), state.end(), input.data.begin());
  for (std::size_t r = 0; r < passes; ++r) {
    DropoutMask single;
    single.keep_probability = masks.keep_probability;
    for (std::size_t k = 0; k < masks.keep.size(); ++k) {
      const std::size_t width = encoder.layers[k].weight.rows;
      const auto begin = masks.keep[k].begin() + static_cast<std::ptrdiff_t>(r * width);
      single.keep.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(width));
    }
    const Matrix out = forward_batch(encoder, input, &single, nullptr, KernelPath::reference);
    std::copy(out.data.begin(), out.data.end(), outputs.row(r).begin());
  }
  return column_variance(outputs);
}

void update_sigma_max(UncertaintyTracker& tracker, std::span<const double> sigma_u) {
  if (tracker.dim == 0 && !tracker.initialized) tracker.dim = sigma_u.size();
  if (sigma_u.size() != tracker.dim) throw ShapeError("update_sigma_max: dimension mismatch");
  if (!tracker.initialized) {
    tracker.sigma_max.assign(sigma_u.begin(), sigma_u.end());
    tracker.initialized = true;
    return;
  }
  for (std::size_t i = 0; i < tracker.dim; ++i) tracker.sigma_max[i] = std::max(tracker.sigma_max[i], sigma_u[i]);
}

double uncertainty_distance(const UncertaintyTracker& tracker, std::span<const double> sigma_u) {
  if (!tracker.initialized) throw StateError("uncertainty tracker has no maxima yet");
  if (sigma_u.size() != tracker.dim) throw ShapeError("uncertainty_distance: dimension mismatch");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < tracker.dim; ++i) {
    const double max = tracker.sigma_max[i];
    const double n = max > 0.0 ? std::clamp(sigma_u[i] / max, 0.0, 1.0) : 0.0;
    sum += n;
    sum_sq += n * n;
  }
  if (sum <= 0.0) return 0.0;
  return std::clamp(sum_sq / sum, 0.0, 1.0);
}

}  // namespace sero
