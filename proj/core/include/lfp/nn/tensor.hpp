#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lfp::nn {

/// Dense row-major array of doubles. Feature maps use the [C, H, W] layout,
/// convolution weights use [O, I, K, K], scalars use [1].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  static Tensor chw(int channels, int height, int width, double fill = 0.0);
  static Tensor scalar(double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // [C, H, W] accessors; only meaningful for rank-3 tensors.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  std::size_t plane() const {
    return static_cast<std::size_t>(shape_[1]) * static_cast<std::size_t>(shape_[2]);
  }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  double* row(int c, int y) {
    return data_.data() + (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2];
  }
  const double* row(int c, int y) const {
    return data_.data() + (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const;
  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

}  // namespace lfp::nn
