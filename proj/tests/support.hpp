#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "texanom/grid.hpp"
#include "texanom/rng.hpp"

namespace texanom::testing {

inline RealGrid random_grid(int rows, int cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RealGrid g(rows, cols);
  for (auto& v : g.values()) v = u(rng);
  return g;
}

inline ComplexGrid random_complex(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexGrid g(rows, cols);
  for (auto& v : g.values()) v = {n(rng), n(rng)};
  return g;
}

// Sinusoidal stripes at `angle` with the given period in pixels, values in [0.1, 0.9].
inline GrayImage stripes(int rows, int cols, double angle, double period, double phase = 0.0) {
  GrayImage g(rows, cols);
  const double w = 2.0 * std::numbers::pi / period;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      g(r, c) = 0.5 + 0.4 * std::sin(w * (c * std::cos(angle) + r * std::sin(angle)) + phase);
  return g;
}

// Central differences of f at x, one coordinate at a time.
inline RealGrid numeric_gradient(const std::function<double(const RealGrid&)>& f, RealGrid x, double h = 1e-5) {
  RealGrid g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max |a - b| / max(max |b|, floor).
inline double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::fabs(a[i] - b[i]));
    den = std::max(den, std::fabs(b[i]));
  }
  return num / den;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("texanom_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace texanom::testing
