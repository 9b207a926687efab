#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "bhia/image_io.hpp"
#include "bhia/rng.hpp"
#include "bhia/tensor.hpp"

namespace testutil {

// Scoped temporary directory under the system temp root.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("bhia_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline bhia::Tensor solid_image(int w, int h, double r, double g, double b) {
  bhia::Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t.at(0, y, x) = r;
      t.at(1, y, x) = g;
      t.at(2, y, x) = b;
    }
  return t;
}

// Smooth but distinctive pattern; base color, amplitude and phase all shift
// with the seed, so every image has a different palette and clearly
// separated pooled features.
inline bhia::Tensor pattern_image(int w, int h, std::uint64_t seed) {
  bhia::Rng rng(seed);
  const double fx = rng.uniform(0.5, 3.0);
  const double fy = rng.uniform(0.5, 3.0);
  const double ph = rng.uniform(0.0, 6.28);
  double base[3], amp[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    amp[c] = rng.uniform(0.05, std::min(base[c], 1.0 - base[c]));
  }
  bhia::Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w;
      const double v = static_cast<double>(y) / h;
      t.at(0, y, x) = base[0] + amp[0] * std::sin(6.28 * fx * u + ph);
      t.at(1, y, x) = base[1] + amp[1] * std::sin(6.28 * fy * v + 2.0 * ph);
      t.at(2, y, x) = base[2] + amp[2] * std::sin(6.28 * (u + v) + 0.5 * ph);
    }
  return t;
}

inline bhia::Tensor noise_image(int w, int h, std::uint64_t seed) {
  bhia::Rng rng(seed);
  bhia::Tensor t(3, h, w);
  for (double& v : t.data) v = rng.uniform01();
  return t;
}

// Random color blocks on a fixed grid. Block colors are independent across
// images, which keeps pooled backbone features well conditioned; the toy
// overfit worlds rely on that.
inline bhia::Tensor block_image(int w, int h, std::uint64_t seed, int block = 6) {
  bhia::Rng rng(seed);
  const int nx = (w + block - 1) / block;
  const int ny = (h + block - 1) / block;
  std::vector<double> colors(static_cast<std::size_t>(3) * nx * ny);
  for (double& c : colors) c = rng.uniform(0.05, 0.95);
  bhia::Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t b = static_cast<std::size_t>(y / block) * nx + (x / block);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = colors[3 * b + c];
    }
  return t;
}

inline std::string write_png(const TempDir& dir, const std::string& name, const bhia::Tensor& img) {
  const std::string p = dir.file(name);
  bhia::save_image_rgb(img, p);
  return p;
}

}  // namespace testutil
