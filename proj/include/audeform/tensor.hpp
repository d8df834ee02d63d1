#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "audeform/rng.hpp"

namespace audeform {

// Dense row-major float64 tensor. grad, when allocated, always matches the
// shape of data; requires_grad marks leaves whose gradient must survive a
// backward pass.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless allocated
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shp);

  static Tensor zeros(std::vector<std::size_t> shp);
  static Tensor full(std::vector<std::size_t> shp, double v);
  static Tensor from(std::vector<std::size_t> shp, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor uniform(std::vector<std::size_t> shp, double lo, double hi, Rng& rng);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-D accessors; shape must be [rows, cols]
  double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  // 3-D accessors; shape must be [c, h, w]
  double& at3(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape[1] + y) * shape[2] + x];
  }
  double at3(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  void ensure_grad();
  void zero_grad();
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace audeform
