#include "bhia/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <stdexcept>

namespace bhia {

std::optional<ImageInfo> probe_image(const std::string& path) {
  const cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) return std::nullopt;
  return ImageInfo{img.cols, img.rows};
}

std::optional<Tensor> try_load_image_rgb(const std::string& path) {
  const cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);  // BGR, 8-bit
  if (img.empty()) return std::nullopt;
  Tensor t(3, img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      t.at(0, y, x) = row[x][2] / 255.0;  // R
      t.at(1, y, x) = row[x][1] / 255.0;  // G
      t.at(2, y, x) = row[x][0] / 255.0;  // B
    }
  }
  return t;
}

Tensor load_image_rgb(const std::string& path) {
  auto t = try_load_image_rgb(path);
  if (!t) throw std::runtime_error("failed to decode image: " + path);
  return std::move(*t);
}

void save_image_rgb(const Tensor& rgb, const std::string& path) {
  if (rgb.channels != 3) throw std::invalid_argument("save_image_rgb: expected 3 channels");
  cv::Mat img(rgb.height, rgb.width, CV_8UC3);
  for (int y = 0; y < rgb.height; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.width; ++x) {
      const auto to_u8 = [](double v) {
        return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      };
      row[x][2] = to_u8(rgb.at(0, y, x));
      row[x][1] = to_u8(rgb.at(1, y, x));
      row[x][0] = to_u8(rgb.at(2, y, x));
    }
  }
  if (!cv::imwrite(path, img)) throw std::runtime_error("failed to write image: " + path);
}

}  // namespace bhia
