#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "tcb/raster.hpp"

namespace tcb {

/// Dense N x C x H x W tensor of doubles, row-major (W fastest).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(1, 1, 1, 1, v); }
  static Tensor like(const Tensor& t, double fill = 0.0) { return Tensor(t.n(), t.c(), t.h(), t.w(), fill); }

  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  std::string shape_string() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  double item() const { return data_.at(0); }

  /// Pointer to the start of image n (C * H * W contiguous values).
  double* image(int n) { return data_.data() + static_cast<std::size_t>(n) * c() * h() * w(); }
  const double* image(int n) const { return data_.data() + static_cast<std::size_t>(n) * c() * h() * w(); }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);
  bool all_finite() const;
  double sum() const;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
  }

  std::array<int, 4> dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// Stack rasters (all with the same dims) into an N x C x H x W tensor.
Tensor rasters_to_tensor(const std::vector<const Raster*>& rasters);
Tensor raster_to_tensor(const Raster& raster);
/// Image n of a tensor as a raster (values converted to float).
Raster tensor_to_raster(const Tensor& t, int n = 0);
/// Masks as an N x 1 x H x W tensor of 0/1 targets.
Tensor masks_to_tensor(const std::vector<const Mask*>& masks);

}  // namespace tcb
