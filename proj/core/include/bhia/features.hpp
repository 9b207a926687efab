#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bhia/tensor.hpp"

namespace bhia {

// Geometry normalization applied before a backbone: resize the short side,
// then center-crop. crop must not exceed short_side.
struct Preprocess {
  int short_side = 256;
  int crop = 224;
};

Tensor preprocess_image(const Tensor& rgb, const Preprocess& pp);

// Any convolutional backbone exposing a spatial feature map fits behind this
// interface; pooled vectors come from average_pool on the returned map.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int channels() const = 0;
  virtual Tensor feature_map(const Tensor& rgb) const = 0;

  std::vector<double> pooled(const Tensor& rgb) const { return average_pool(feature_map(rgb)); }
};

// Two 3x3 stride-2 convolutions with ReLU. Small enough for hand-checked
// forward passes and fast desk-scale training; weights are either seeded or
// set explicitly.
class StubCnnExtractor : public FeatureExtractor {
 public:
  struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    std::vector<double> w;  // [out][in][3][3]
    std::vector<double> b;  // [out]
  };

  StubCnnExtractor(int mid_channels, int out_channels, std::uint64_t seed);
  StubCnnExtractor(ConvLayer l1, ConvLayer l2, std::string id);

  std::string id() const override { return id_; }
  int channels() const override { return layer2_.out_ch; }
  Tensor feature_map(const Tensor& rgb) const override;

  static Tensor conv3x3_s2_relu(const Tensor& in, const ConvLayer& layer);

 private:
  ConvLayer layer1_;
  ConvLayer layer2_;
  std::string id_;
};

// Pretrained backbone loaded from an ONNX file via the OpenCV DNN runtime.
// The artifact treats such weights as pluggable inputs; any exported
// feature-extraction subgraph producing an NCHW map works.
class OnnxFeatureExtractor : public FeatureExtractor {
 public:
  OnnxFeatureExtractor(const std::string& model_path, std::string output_layer, int probe_size);

  std::string id() const override { return id_; }
  int channels() const override { return channels_; }
  Tensor feature_map(const Tensor& rgb) const override;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  std::string id_;
  std::string output_layer_;
  int channels_ = 0;
};

// Backbone selection as it appears in config files and checkpoints.
struct BackboneSpec {
  std::string kind = "stub";  // stub | onnx
  // stub parameters
  int stub_mid_channels = 8;
  int stub_out_channels = 16;
  std::uint64_t stub_seed = 7;
  // onnx parameters
  std::string onnx_path;
  std::string onnx_output;
  int onnx_probe_size = 224;

  bool operator==(const BackboneSpec&) const = default;
};

std::shared_ptr<FeatureExtractor> make_extractor(const BackboneSpec& spec);

// Same spec but a different random instantiation (independent copies of the
// stub; a shared pretrained file for onnx).
std::shared_ptr<FeatureExtractor> make_extractor(const BackboneSpec& spec, std::uint64_t seed_offset);

}  // namespace bhia
