#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bhia/losses.hpp"
#include "bhia/model.hpp"
#include "testutil.hpp"

using namespace bhia;

namespace {

ModelSpec tiny_spec(std::uint64_t seed = 11) {
  ModelSpec s;
  s.dimension = Dimension::Beauty;
  s.backbone.kind = "stub";
  s.backbone.stub_mid_channels = 4;
  s.backbone.stub_out_channels = 6;
  s.backbone.stub_seed = 17;
  s.preprocess = Preprocess{24, 16};
  s.hidden = 8;
  s.seed = seed;
  return s;
}

// Naive convolution written independently of the production code: explicit
// zero padding, stride 2, ReLU.
Tensor conv_oracle(const Tensor& in, const StubCnnExtractor::ConvLayer& l) {
  const int oh = (in.height + 1) / 2;
  const int ow = (in.width + 1) / 2;
  Tensor padded(in.channels, in.height + 2, in.width + 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) padded.at(c, y + 1, x + 1) = in.at(c, y, x);
  Tensor out(l.out_ch, oh, ow);
  for (int oc = 0; oc < l.out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = l.b[oc];
        for (int ic = 0; ic < l.in_ch; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc += l.w[((static_cast<std::size_t>(oc) * l.in_ch + ic) * 3 + ky) * 3 + kx] *
                     padded.at(ic, oy * 2 + ky, ox * 2 + kx);
        out.at(oc, oy, ox) = std::max(0.0, acc);
      }
  return out;
}

}  // namespace

TEST_CASE("stub backbone matches the naive convolution oracle on a 4x4 input") {
  StubCnnExtractor::ConvLayer l1;
  l1.in_ch = 3;
  l1.out_ch = 2;
  l1.w.resize(3 * 2 * 9);
  l1.b = {0.05, -0.02};
  StubCnnExtractor::ConvLayer l2;
  l2.in_ch = 2;
  l2.out_ch = 2;
  l2.w.resize(2 * 2 * 9);
  l2.b = {0.1, 0.0};
  Rng rng(101);
  for (double& v : l1.w) v = rng.uniform(-0.5, 0.5);
  for (double& v : l2.w) v = rng.uniform(-0.5, 0.5);

  const StubCnnExtractor stub(l1, l2, "hand-set");
  const Tensor input = testutil::noise_image(4, 4, 55);
  const Tensor got = stub.feature_map(input);
  const Tensor expect = conv_oracle(conv_oracle(input, l1), l2);
  REQUIRE(got.same_shape(expect));
  for (std::size_t i = 0; i < got.data.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
  CHECK(got.height == 1);
  CHECK(got.width == 1);
}

TEST_CASE("linear and two-layer heads match hand-computed values") {
  LinearHead lin;
  lin.w = {0.5, -1.0, 2.0};
  lin.b = 0.25;
  const std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK(lin.forward(x) == doctest::Approx(0.5 - 2.0 + 6.0 + 0.25));

  TwoLayerHead two;
  two.in_dim = 2;
  two.hidden = 2;
  two.w1 = {1.0, 0.0, -1.0, 1.0};  // rows: [1,0], [-1,1]
  two.b1 = {0.0, -0.5};
  two.w2 = {2.0, 3.0};
  two.b2 = 0.1;
  const std::vector<double> y = {0.5, 2.0};
  // pre1 = 0.5 -> relu 0.5; pre2 = -0.5+2-0.5 = 1.0 -> relu 1.0
  CHECK(two.forward(y) == doctest::Approx(2.0 * 0.5 + 3.0 * 1.0 + 0.1));

  const std::vector<double> z = {-1.0, 0.0};
  // pre1 = -1 -> 0; pre2 = 1 - 0.5 = 0.5
  CHECK(two.forward(z) == doctest::Approx(3.0 * 0.5 + 0.1));
}

TEST_CASE("Siamese branches give identical scores for identical inputs") {
  const auto bundle = make_model_bundle(tiny_spec());
  const Tensor img = preprocess_image(testutil::pattern_image(48, 32, 9), bundle.spec.preprocess);
  const auto out = forward_global(bundle.global, img, img);
  CHECK(out.input_score == out.ref_score);  // exact: shared weights, same features
}

TEST_CASE("model bundles are reproducible from the same seed") {
  const auto a = make_model_bundle(tiny_spec(21));
  const auto b = make_model_bundle(tiny_spec(21));
  CHECK(global_params(a.global) == global_params(b.global));
  CHECK(local_params(a.local) == local_params(b.local));
  CHECK(emotion_params(a.emotion) == emotion_params(b.emotion));

  const auto c = make_model_bundle(tiny_spec(22));
  CHECK(emotion_params(a.emotion) != emotion_params(c.emotion));

  // forward passes are deterministic given fixed weights and inputs
  const Tensor p = testutil::pattern_image(48, 32, 3);
  const Tensor q = testutil::pattern_image(48, 32, 4);
  const auto r1 = forward_all(a, p, q, 4.0);
  const auto r2 = forward_all(b, p, q, 4.0);
  CHECK(r1.global_input == r2.global_input);
  CHECK(r1.local_rel == r2.local_rel);
  CHECK(r1.emo_diff == r2.emo_diff);
}

TEST_CASE("patch layout on a 900x600 image matches the documented geometry") {
  const auto rects = patch_rects(900, 600, PatchScheme{0.5, 0.4});
  REQUIRE(rects.size() == 5);
  CHECK(rects[0] == Rect{225, 150, 450, 300});  // center: 50% sides, centered
  CHECK(rects[1] == Rect{0, 0, 360, 240});      // top-left: 40% sides
  CHECK(rects[2] == Rect{540, 0, 360, 240});    // top-right
  CHECK(rects[3] == Rect{0, 360, 360, 240});    // bottom-left
  CHECK(rects[4] == Rect{540, 360, 360, 240});  // bottom-right
}

TEST_CASE("local features concatenate five patches per image") {
  const auto bundle = make_model_bundle(tiny_spec());
  const Tensor scaled = resize_short_side(testutil::pattern_image(60, 40, 8), 24);
  const auto f = local_concat_features(bundle.local, bundle.spec.patches, scaled, 16);
  CHECK(f.size() == static_cast<std::size_t>(5 * bundle.channels()));
}

TEST_CASE("emotion module with identical parallel backbones zeroes the difference map") {
  auto bundle = make_model_bundle(tiny_spec());
  bundle.emotion.backbone_assist = bundle.emotion.backbone_target;  // share weights

  const Tensor img = preprocess_image(testutil::pattern_image(48, 32, 6), bundle.spec.preprocess);
  EmotionTrace trace;
  const auto out = forward_emotion(bundle.emotion, img, &trace);

  for (double v : trace.map_diff.data) CHECK(v == 0.0);
  // y_diff collapses to the head's response on all-zero features
  const std::vector<double> zeros(bundle.channels(), 0.0);
  CHECK(out.diff == doctest::Approx(bundle.emotion.head_diff.forward(zeros)));
}

TEST_CASE("difference map equals target minus assist elementwise via the trace hook") {
  const auto bundle = make_model_bundle(tiny_spec());
  const Tensor img = preprocess_image(testutil::pattern_image(48, 32, 14), bundle.spec.preprocess);
  EmotionTrace trace;
  forward_emotion(bundle.emotion, img, &trace);
  REQUIRE(trace.map_target.same_shape(trace.map_assist));
  REQUIRE(trace.map_target.same_shape(trace.map_diff));
  for (std::size_t i = 0; i < trace.map_diff.data.size(); ++i)
    CHECK(trace.map_diff.data[i] == trace.map_target.data[i] - trace.map_assist.data[i]);
}

// Central finite differences over every head parameter of each module,
// against the analytic gradients assembled from the heads' accumulate_grad.
TEST_CASE("head-parameter gradients match central finite differences") {
  auto bundle = make_model_bundle(tiny_spec(33));
  const int d = bundle.channels();
  {
    // generic parameter point instead of the zero init
    Rng prng(4242);
    auto gp = global_params(bundle.global);
    for (double& v : gp) v = prng.gaussian() * 0.3;
    set_global_params(bundle.global, gp);
    auto lp = local_params(bundle.local);
    for (double& v : lp) v = prng.gaussian() * 0.3;
    set_local_params(bundle.local, lp);
    auto ep = emotion_params(bundle.emotion);
    for (double& v : ep) v = prng.gaussian() * 0.3;
    set_emotion_params(bundle.emotion, ep);
  }
  const Tensor p = preprocess_image(testutil::pattern_image(48, 32, 41), bundle.spec.preprocess);
  const Tensor q = preprocess_image(testutil::pattern_image(48, 32, 42), bundle.spec.preprocess);
  const double t_p = 5.2, t_q = 4.1, t_assist = 4.7;
  const double eps = 1e-6;

  const auto check_grads = [eps](const std::vector<double>& params,
                                 const std::vector<double>& analytic, auto loss_at) {
    REQUIRE(params.size() == analytic.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::vector<double> plus = params, minus = params;
      plus[i] += eps;
      minus[i] -= eps;
      const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
      CHECK(std::abs(numeric - analytic[i]) / denom < 1e-4);
    }
  };

  SUBCASE("global module") {
    const auto f_p = global_pooled(bundle.global, p);
    const auto f_q = global_pooled(bundle.global, q);
    const auto out = forward_global_from_features(bundle.global, f_p, f_q);
    const auto dy = loss_global_grad(out.input_score, out.ref_score, out.rel_score, t_p, t_q);

    std::vector<double> g(3 * d + 2, 0.0);
    std::vector<double> pair;
    pair.insert(pair.end(), f_p.begin(), f_p.end());
    pair.insert(pair.end(), f_q.begin(), f_q.end());
    double& gb_abs = g[d];
    bundle.global.absolute_head.accumulate_grad(f_p, dy.d_input, {g.data(), static_cast<std::size_t>(d)}, gb_abs);
    bundle.global.absolute_head.accumulate_grad(f_q, dy.d_ref, {g.data(), static_cast<std::size_t>(d)}, gb_abs);
    double& gb_rel = g[3 * d + 1];
    bundle.global.relative_head.accumulate_grad(pair, dy.d_rel,
                                                {g.data() + d + 1, static_cast<std::size_t>(2 * d)},
                                                gb_rel);

    GlobalModule probe = bundle.global;
    check_grads(global_params(bundle.global), g, [&](const std::vector<double>& v) {
      set_global_params(probe, v);
      const auto o = forward_global_from_features(probe, f_p, f_q);
      return loss_global(o.input_score, o.ref_score, o.rel_score, t_p, t_q);
    });
  }

  SUBCASE("local module") {
    const Tensor ps = resize_short_side(testutil::pattern_image(48, 32, 41), 24);
    const Tensor qs = resize_short_side(testutil::pattern_image(48, 32, 42), 24);
    const auto f_p = local_concat_features(bundle.local, bundle.spec.patches, ps, 16);
    const auto f_q = local_concat_features(bundle.local, bundle.spec.patches, qs, 16);
    const double y = forward_local_from_features(bundle.local, f_p, f_q);
    const double dy = loss_local_grad(y, t_p, t_q);

    const std::size_t nw = bundle.local.relative_head.w.size();
    std::vector<double> g(nw + 1, 0.0);
    std::vector<double> pair;
    pair.insert(pair.end(), f_p.begin(), f_p.end());
    pair.insert(pair.end(), f_q.begin(), f_q.end());
    double& gb = g[nw];
    bundle.local.relative_head.accumulate_grad(pair, dy, {g.data(), nw}, gb);

    LocalModule probe = bundle.local;
    check_grads(local_params(bundle.local), g, [&](const std::vector<double>& v) {
      set_local_params(probe, v);
      return loss_local(forward_local_from_features(probe, f_p, f_q), t_p, t_q);
    });
  }

  SUBCASE("emotion module") {
    const auto f = emotion_pooled(bundle.emotion, p);
    const auto out = forward_emotion_from_features(bundle.emotion, f);
    const auto dy = loss_emotion_grad(out.target, out.assist, out.diff, t_p, t_assist);

    const auto& head = bundle.emotion.head_diff;
    const std::size_t n_w1 = head.w1.size(), n_b1 = head.b1.size(), n_w2 = head.w2.size();
    std::vector<double> g(2 * (d + 1) + n_w1 + n_b1 + n_w2 + 1, 0.0);
    std::size_t off = 0;
    double& g_tb = g[off + d];
    bundle.emotion.head_target.accumulate_grad(f.target, dy.d_target,
                                               {g.data() + off, static_cast<std::size_t>(d)}, g_tb);
    off += d + 1;
    double& g_ab = g[off + d];
    bundle.emotion.head_assist.accumulate_grad(f.assist, dy.d_assist,
                                               {g.data() + off, static_cast<std::size_t>(d)}, g_ab);
    off += d + 1;
    double& g_b2 = g[off + n_w1 + n_b1 + n_w2];
    head.accumulate_grad(f.diff, dy.d_diff, {g.data() + off, n_w1}, {g.data() + off + n_w1, n_b1},
                         {g.data() + off + n_w1 + n_b1, n_w2}, g_b2);

    EmotionModule probe = bundle.emotion;
    check_grads(emotion_params(bundle.emotion), g, [&](const std::vector<double>& v) {
      set_emotion_params(probe, v);
      const auto o = forward_emotion_from_features(probe, f);
      return loss_emotion(o.target, o.assist, o.diff, t_p, t_assist);
    });
  }
}

TEST_CASE("checkpoints round-trip the full bundle") {
  testutil::TempDir dir("ckpt");
  auto bundle = make_model_bundle(tiny_spec(5));
  bundle.completed_stages = {1, 2};
  save_bundle(dir.str(), bundle);
  const auto back = load_bundle(dir.str());
  CHECK(back.spec.dimension == bundle.spec.dimension);
  CHECK(back.spec.hidden == bundle.spec.hidden);
  CHECK(back.completed_stages == bundle.completed_stages);
  CHECK(global_params(back.global) == global_params(bundle.global));
  CHECK(local_params(back.local) == local_params(bundle.local));
  CHECK(emotion_params(back.emotion) == emotion_params(bundle.emotion));

  const Tensor p = testutil::pattern_image(48, 32, 1);
  const Tensor q = testutil::pattern_image(48, 32, 2);
  const auto r1 = forward_all(bundle, p, q, 4.0);
  const auto r2 = forward_all(back, p, q, 4.0);
  CHECK(r1.global_rel == r2.global_rel);
  CHECK(r1.emo_diff == r2.emo_diff);
}

TEST_CASE("geometry mismatch between branches is a hard error") {
  const auto bundle = make_model_bundle(tiny_spec());
  const Tensor a(3, 16, 16);
  const Tensor b(3, 12, 16);
  CHECK_THROWS_AS(forward_global(bundle.global, a, b), std::invalid_argument);
}
