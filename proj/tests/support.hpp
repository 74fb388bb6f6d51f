#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <span>
#include <vector>

#include <unistd.h>

#include "sero/approximator.hpp"
#include "sero/rng.hpp"

namespace sero::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = uniform(rng, lo, hi);
  return m;
}

inline Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Central differences of `f` with respect to every entry of `layers`, step h.
inline std::vector<DenseLayer> central_differences(std::vector<DenseLayer> layers,
                                                   const std::function<double(const std::vector<DenseLayer>&)>& f,
                                                   double h = 1e-5) {
  std::vector<DenseLayer> out = layers;
  auto blocks = parameter_blocks(layers);
  auto out_blocks = parameter_blocks(out);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double keep = blocks[b][i];
      blocks[b][i] = keep + h;
      const double plus = f(layers);
      blocks[b][i] = keep - h;
      const double minus = f(layers);
      blocks[b][i] = keep;
      out_blocks[b][i] = (plus - minus) / (2.0 * h);
    }
  }
  return out;
}

struct GradientComparison {
  double worst_relative = 0.0;
  std::size_t compared = 0;
};

/// Elementwise relative error over entries whose magnitude exceeds `floor`.
inline GradientComparison compare_gradients(const std::vector<DenseLayer>& analytic,
                                            const std::vector<DenseLayer>& numeric, double floor = 1e-6) {
  GradientComparison c;
  const auto a = parameter_blocks(analytic);
  const auto n = parameter_blocks(numeric);
  for (std::size_t b = 0; b < a.size(); ++b) {
    for (std::size_t i = 0; i < a[b].size(); ++i) {
      const double scale = std::max(std::abs(a[b][i]), std::abs(n[b][i]));
      if (scale <= floor) continue;
      c.worst_relative = std::max(c.worst_relative, std::abs(a[b][i] - n[b][i]) / scale);
      ++c.compared;
    }
  }
  return c;
}

/// Half squared error against fixed targets, with its output gradient.
inline Objective squared_error(const Matrix& targets) {
  return [targets](const Matrix& out, Matrix& grad) {
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const double e = out.data[i] - targets.data[i];
      loss += 0.5 * e * e;
      grad.data[i] = e;
    }
    return loss;
  };
}

inline double objective_value(const Objective& objective, const MlpParams& params, const Matrix& batch,
                              const DropoutMask* mask = nullptr) {
  const Matrix out = forward_batch(params, batch, mask, nullptr, KernelPath::reference);
  Matrix grad(out.rows, out.cols);
  return objective(out, grad);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("sero_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace sero::testing
