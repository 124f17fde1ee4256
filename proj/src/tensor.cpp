#include "tcb/tensor.hpp"

#include <cmath>
#include <numeric>

#include "tcb/error.hpp"

namespace tcb {

Tensor::Tensor(int n, int c, int h, int w, double fill) : dims_{n, c, h, w} {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ConfigError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(n()) + "," + std::to_string(c()) + "," + std::to_string(h()) + "," +
         std::to_string(w()) + "]";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ConfigError("shape mismatch " + shape_string() + " vs " + o.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

Tensor rasters_to_tensor(const std::vector<const Raster*>& rasters) {
  if (rasters.empty()) throw ConfigError("empty batch");
  const Raster& first = *rasters.front();
  Tensor t(static_cast<int>(rasters.size()), first.channels, first.height, first.width);
  for (std::size_t n = 0; n < rasters.size(); ++n) {
    const Raster& r = *rasters[n];
    if (!r.same_dims(first)) throw ConfigError("batch rasters differ in size");
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x)
        for (int ch = 0; ch < r.channels; ++ch) t.at(static_cast<int>(n), ch, y, x) = r.at(y, x, ch);
  }
  return t;
}

Tensor raster_to_tensor(const Raster& raster) { return rasters_to_tensor({&raster}); }

Raster tensor_to_raster(const Tensor& t, int n) {
  Raster r(t.h(), t.w(), t.c());
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x)
      for (int ch = 0; ch < t.c(); ++ch) r.at(y, x, ch) = static_cast<float>(t.at(n, ch, y, x));
  return r;
}

Tensor masks_to_tensor(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw ConfigError("empty batch");
  const Mask& first = *masks.front();
  Tensor t(static_cast<int>(masks.size()), 1, first.height, first.width);
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const Mask& m = *masks[n];
    if (m.height != first.height || m.width != first.width) throw ConfigError("batch masks differ in size");
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) t.at(static_cast<int>(n), 0, y, x) = m.at(y, x) ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace tcb
