#pragma once

#include <optional>
#include <string>

#include "bhia/tensor.hpp"

namespace bhia {

struct ImageInfo {
  int width = 0;
  int height = 0;
};

// Decode only enough to learn the pixel dimensions. nullopt if unreadable.
std::optional<ImageInfo> probe_image(const std::string& path);

// Decode to RGB in [0,1]. nullopt if the file is missing or undecodable.
std::optional<Tensor> try_load_image_rgb(const std::string& path);

// Throwing variant; the message names the path.
Tensor load_image_rgb(const std::string& path);

// 8-bit RGB writer (PNG/JPEG chosen by extension). Values clamped to [0,1].
void save_image_rgb(const Tensor& rgb, const std::string& path);

}  // namespace bhia
