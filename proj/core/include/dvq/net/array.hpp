#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace dvq::net {

// Row-major 2-d array of 64-bit floats. Scalars are 1x1, row vectors 1xN.
struct DenseArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseArray() = default;
  DenseArray(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  DenseArray(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {}

  static DenseArray scalar(double v) { return {1, 1, {v}}; }
  static DenseArray row(std::vector<double> v) {
    const std::size_t n = v.size();
    return {1, n, std::move(v)};
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const DenseArray& o) const { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double item() const { return data.at(0); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;
};

}  // namespace dvq::net
