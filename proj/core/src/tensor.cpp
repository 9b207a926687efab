#include "bhia/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bhia {

Tensor bilinear_resize(const Tensor& in, int out_w, int out_h) {
  if (in.empty()) throw std::invalid_argument("bilinear_resize: empty tensor");
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("bilinear_resize: non-positive output size");
  if (out_w == in.width && out_h == in.height) return in;

  Tensor out(in.channels, out_h, out_w);
  const double sx = static_cast<double>(in.width) / out_w;
  const double sy = static_cast<double>(in.height) / out_h;
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      double fy = (oy + 0.5) * sy - 0.5;
      fy = std::max(0.0, std::min(fy, static_cast<double>(in.height - 1)));
      const int y0 = static_cast<int>(std::floor(fy));
      const int y1 = std::min(y0 + 1, in.height - 1);
      const double wy = fy - y0;
      for (int ox = 0; ox < out_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        fx = std::max(0.0, std::min(fx, static_cast<double>(in.width - 1)));
        const int x0 = static_cast<int>(std::floor(fx));
        const int x1 = std::min(x0 + 1, in.width - 1);
        const double wx = fx - x0;
        const double top = in.at(c, y0, x0) * (1.0 - wx) + in.at(c, y0, x1) * wx;
        const double bot = in.at(c, y1, x0) * (1.0 - wx) + in.at(c, y1, x1) * wx;
        out.at(c, oy, ox) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Tensor resize_short_side(const Tensor& in, int short_side) {
  if (short_side <= 0) throw std::invalid_argument("resize_short_side: non-positive target");
  int out_w, out_h;
  if (in.width <= in.height) {
    out_w = short_side;
    out_h = std::max(1, static_cast<int>(std::lround(static_cast<double>(in.height) * short_side / in.width)));
  } else {
    out_h = short_side;
    out_w = std::max(1, static_cast<int>(std::lround(static_cast<double>(in.width) * short_side / in.height)));
  }
  return bilinear_resize(in, out_w, out_h);
}

Tensor crop(const Tensor& in, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > in.width || r.y + r.h > in.height)
    throw std::invalid_argument("crop: rectangle outside tensor bounds");
  Tensor out(in.channels, r.h, r.w);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) out.at(c, y, x) = in.at(c, r.y + y, r.x + x);
  return out;
}

Tensor center_crop(const Tensor& in, int crop_w, int crop_h) {
  if (crop_w > in.width || crop_h > in.height)
    throw std::invalid_argument("center_crop: crop larger than input");
  return crop(in, Rect{(in.width - crop_w) / 2, (in.height - crop_h) / 2, crop_w, crop_h});
}

Tensor hflip(const Tensor& in) {
  Tensor out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) out.at(c, y, x) = in.at(c, y, in.width - 1 - x);
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("subtract: shape mismatch");
  Tensor out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

std::vector<double> average_pool(const Tensor& map) {
  if (map.empty()) throw std::invalid_argument("average_pool: empty tensor");
  std::vector<double> pooled(map.channels, 0.0);
  const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
  for (int c = 0; c < map.channels; ++c) {
    double sum = 0.0;
    const double* p = map.data.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    pooled[c] = sum / static_cast<double>(plane);
  }
  return pooled;
}

}  // namespace bhia
