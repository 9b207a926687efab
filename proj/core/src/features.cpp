#include "bhia/features.hpp"

#include <opencv2/dnn.hpp>

#include <cmath>
#include <stdexcept>

#include "bhia/rng.hpp"

namespace bhia {

Tensor preprocess_image(const Tensor& rgb, const Preprocess& pp) {
  if (pp.crop > pp.short_side)
    throw std::invalid_argument("preprocess: crop exceeds short side");
  return center_crop(resize_short_side(rgb, pp.short_side), pp.crop, pp.crop);
}

// --- stub CNN ---------------------------------------------------------------

namespace {

StubCnnExtractor::ConvLayer seeded_layer(int in_ch, int out_ch, Rng& rng) {
  StubCnnExtractor::ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.w.resize(static_cast<std::size_t>(out_ch) * in_ch * 9);
  l.b.resize(out_ch);
  const double std = std::sqrt(2.0 / (in_ch * 9));
  for (double& v : l.w) v = rng.gaussian() * std;
  for (double& v : l.b) v = rng.uniform(0.0, 0.1);  // keep ReLU units alive
  return l;
}

}  // namespace

StubCnnExtractor::StubCnnExtractor(int mid_channels, int out_channels, std::uint64_t seed) {
  if (mid_channels < 1 || out_channels < 1)
    throw std::invalid_argument("StubCnnExtractor: channel counts must be >= 1");
  Rng rng = Rng::substream(seed, "stub-cnn");
  layer1_ = seeded_layer(3, mid_channels, rng);
  layer2_ = seeded_layer(mid_channels, out_channels, rng);
  id_ = "stub-cnn/s" + std::to_string(seed) + "/c" + std::to_string(mid_channels) + "x" +
        std::to_string(out_channels);
}

StubCnnExtractor::StubCnnExtractor(ConvLayer l1, ConvLayer l2, std::string id)
    : layer1_(std::move(l1)), layer2_(std::move(l2)), id_(std::move(id)) {
  if (layer1_.out_ch != layer2_.in_ch)
    throw std::invalid_argument("StubCnnExtractor: layer channel mismatch");
}

Tensor StubCnnExtractor::conv3x3_s2_relu(const Tensor& in, const ConvLayer& layer) {
  if (in.channels != layer.in_ch)
    throw std::invalid_argument("conv3x3: input channel mismatch");
  // stride 2, padding 1: out = ceil(size / 2)
  const int oh = (in.height + 1) / 2;
  const int ow = (in.width + 1) / 2;
  Tensor out(layer.out_ch, oh, ow);
  for (int oc = 0; oc < layer.out_ch; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = layer.b[oc];
        for (int ic = 0; ic < layer.in_ch; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 + ky - 1;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 + kx - 1;
              if (ix < 0 || ix >= in.width) continue;
              acc += layer.w[((static_cast<std::size_t>(oc) * layer.in_ch + ic) * 3 + ky) * 3 + kx] *
                     in.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, oy, ox) = acc > 0.0 ? acc : 0.0;
      }
    }
  }
  return out;
}

Tensor StubCnnExtractor::feature_map(const Tensor& rgb) const {
  if (rgb.channels != layer1_.in_ch)
    throw std::invalid_argument("StubCnnExtractor: expected " + std::to_string(layer1_.in_ch) +
                                "-channel input");
  return conv3x3_s2_relu(conv3x3_s2_relu(rgb, layer1_), layer2_);
}

// --- ONNX-backed extractor ----------------------------------------------------

struct OnnxFeatureExtractor::Impl {
  mutable cv::dnn::Net net;
};

namespace {

cv::Mat tensor_to_blob(const Tensor& rgb) {
  cv::Mat img(rgb.height, rgb.width, CV_32FC3);
  for (int y = 0; y < rgb.height; ++y) {
    cv::Vec3f* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < rgb.width; ++x) {
      row[x][0] = static_cast<float>(rgb.at(0, y, x));
      row[x][1] = static_cast<float>(rgb.at(1, y, x));
      row[x][2] = static_cast<float>(rgb.at(2, y, x));
    }
  }
  return cv::dnn::blobFromImage(img);
}

}  // namespace

OnnxFeatureExtractor::OnnxFeatureExtractor(const std::string& model_path, std::string output_layer,
                                           int probe_size)
    : impl_(std::make_shared<Impl>()), output_layer_(std::move(output_layer)) {
  impl_->net = cv::dnn::readNetFromONNX(model_path);
  if (impl_->net.empty()) throw std::runtime_error("failed to load ONNX model: " + model_path);
  id_ = "onnx/" + model_path + "#" + output_layer_;

  // Probe once to pin the channel count.
  Tensor probe(3, probe_size, probe_size);
  const Tensor map = feature_map(probe);
  channels_ = map.channels;
}

Tensor OnnxFeatureExtractor::feature_map(const Tensor& rgb) const {
  impl_->net.setInput(tensor_to_blob(rgb));
  const cv::Mat out =
      output_layer_.empty() ? impl_->net.forward() : impl_->net.forward(output_layer_);
  if (out.dims != 4 || out.size[0] != 1)
    throw std::runtime_error("ONNX backbone: expected a 1xCxHxW feature map output");
  const int c = out.size[1], h = out.size[2], w = out.size[3];
  Tensor t(c, h, w);
  const float* p = out.ptr<float>();
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(p[i]);
  return t;
}

// --- factory --------------------------------------------------------------------

std::shared_ptr<FeatureExtractor> make_extractor(const BackboneSpec& spec) {
  return make_extractor(spec, 0);
}

std::shared_ptr<FeatureExtractor> make_extractor(const BackboneSpec& spec,
                                                 std::uint64_t seed_offset) {
  if (spec.kind == "stub") {
    return std::make_shared<StubCnnExtractor>(spec.stub_mid_channels, spec.stub_out_channels,
                                              spec.stub_seed + seed_offset);
  }
  if (spec.kind == "onnx") {
    if (spec.onnx_path.empty())
      throw std::invalid_argument("backbone kind 'onnx' requires onnx_path");
    return std::make_shared<OnnxFeatureExtractor>(spec.onnx_path, spec.onnx_output,
                                                  spec.onnx_probe_size);
  }
  throw std::invalid_argument("unknown backbone kind '" + spec.kind + "' (expected stub|onnx)");
}

}  // namespace bhia
