#pragma once

#include <cstddef>
#include <vector>

namespace bhia {

// Planar CHW image/feature tensor, double precision throughout. Images are
// RGB in [0,1]; feature maps carry whatever the extractor produced.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const Rect&) const = default;
};

// Bilinear resampling with pixel-center alignment.
Tensor bilinear_resize(const Tensor& in, int out_w, int out_h);

// Resize so the shorter side equals `short_side`, preserving aspect ratio.
Tensor resize_short_side(const Tensor& in, int short_side);

Tensor center_crop(const Tensor& in, int crop_w, int crop_h);
Tensor crop(const Tensor& in, const Rect& r);
Tensor hflip(const Tensor& in);

// a - b, elementwise. Shapes must match.
Tensor subtract(const Tensor& a, const Tensor& b);

// Spatial average pooling: one mean per channel.
std::vector<double> average_pool(const Tensor& map);

}  // namespace bhia
