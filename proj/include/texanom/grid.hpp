#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "texanom/errors.hpp"

namespace texanom {

using cplx = std::complex<double>;

// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw ContractError("grid dimensions must be nonnegative");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }
  Grid(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw ContractError("grid data length does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<cplx>;

// Intensity image with values in [0,1].
using GrayImage = RealGrid;
// Per-pixel anomaly scores.
using AnomalyMap = RealGrid;
// Per-pixel {0,1} labels.
using AnomalyMask = Grid<std::uint8_t>;

// Mirror index into [0, n) without repeating the edge sample (…c b | a b c d | c b…).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
Grid<T> crop(const Grid<T>& g, int r0, int c0, int rows, int cols) {
  if (r0 < 0 || c0 < 0 || r0 + rows > g.rows() || c0 + cols > g.cols())
    throw ContractError("crop window exceeds grid bounds");
  Grid<T> out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = g(r0 + r, c0 + c);
  return out;
}

// Extends g to rows x cols by mirroring across the bottom and right edges.
template <typename T>
Grid<T> reflect_pad(const Grid<T>& g, int rows, int cols) {
  if (rows < g.rows() || cols < g.cols()) throw ContractError("reflect_pad cannot shrink a grid");
  Grid<T> out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int sr = reflect_index(r, g.rows());
    for (int c = 0; c < cols; ++c) out(r, c) = g(sr, reflect_index(c, g.cols()));
  }
  return out;
}

inline void require_same_shape(const RealGrid& a, const RealGrid& b, const char* what) {
  if (!a.same_shape(b))
    throw ContractError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

}  // namespace texanom
