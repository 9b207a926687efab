// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "bhia/curation.hpp"
#include "bhia/image_io.hpp"
#include "bhia/losses.hpp"
#include "bhia/metrics.hpp"
#include "bhia/model.hpp"
#include "bhia/ratings.hpp"
#include "bhia/retrieval.hpp"
#include "bhia/scoring.hpp"
#include "bhia/training.hpp"

namespace fs = std::filesystem;
using namespace bhia;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail = "") {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& name, const std::string& detail) {
  std::cout << "[SKIP] criterion " << criterion << ": " << name << " (" << detail << ")\n";
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bhia_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::string str() const { return path.string(); }
};

Tensor pattern_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  const double fx = rng.uniform(0.5, 3.0);
  const double fy = rng.uniform(0.5, 3.0);
  const double ph = rng.uniform(0.0, 6.28);
  double base[3], amp[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    amp[c] = rng.uniform(0.05, std::min(base[c], 1.0 - base[c]));
  }
  Tensor t(3, h, w);
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

Tensor block_image(int w, int h, std::uint64_t seed, int block = 6) {
  Rng rng(seed);
  const int nx = (w + block - 1) / block;
  const int ny = (h + block - 1) / block;
  std::vector<double> colors(static_cast<std::size_t>(3) * nx * ny);
  for (double& c : colors) c = rng.uniform(0.05, 0.95);
  Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t b = static_cast<std::size_t>(y / block) * nx + (x / block);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = colors[3 * b + c];
    }
  return t;
}

// --- criterion 1: loss oracles ------------------------------------------------

void criterion_loss_oracles() {
  Timer timer;
  Rng rng(1);
  bool ok = true;
  for (int i = 0; i < 1000 && ok; ++i) {
    const double yp = rng.uniform(-10, 10), yq = rng.uniform(-10, 10), yr = rng.uniform(-10, 10);
    const double tp = rng.uniform(1, 7), tq = rng.uniform(1, 7), te = rng.uniform(1, 7);
    const double og = std::pow(yp - tp, 2) + std::pow(yq - tq, 2) + std::pow(yr - (tp - tq), 2);
    const double ol = std::pow(yr - (tp - tq), 2);
    const double oe = std::pow(yp - tp, 2) + std::pow(yq - te, 2) + std::pow(yr - (tp - te), 2);
    ok = ok && std::abs(loss_global(yp, yq, yr, tp, tq) - og) <= 1e-12;
    ok = ok && std::abs(loss_local(yr, tp, tq) - ol) <= 1e-12;
    ok = ok && std::abs(loss_emotion(yp, yq, yr, tp, te) - oe) <= 1e-12;
    ok = ok && loss_global(tp, tq, tp - tq, tp, tq) == 0.0;
    ok = ok && loss_local(tp - tq, tp, tq) == 0.0;
    ok = ok && loss_emotion(tp, te, tp - te, tp, te) == 0.0;
  }
  const double secs = timer.seconds();
  report(1, "loss oracles (1000 tuples within 1e-12, zero at perfect)", ok && secs < 1.0,
         "runtime " + std::to_string(secs) + "s");
}

// --- criterion 2: fusion identity -----------------------------------------------

void criterion_fusion_identity() {
  Timer timer;
  Rng rng(2);
  bool ok = true;
  for (int i = 0; i < 1000 && ok; ++i) {
    const double tp = rng.uniform(1, 7), te = rng.uniform(1, 7), tq = rng.uniform(1, 7);
    PredictionBreakdown b;
    b.global_input = tp;
    b.global_ref = tq;
    b.global_rel = tp - tq;
    b.local_rel = tp - tq;
    b.emo_target = tp;
    b.emo_assist = te;
    b.emo_diff = tp - te;
    b.ref_truth = tq;
    const auto s = fuse_scores(b);
    ok = ok && std::abs(s.score_sum - 4.0 * tp) <= 1e-9 && std::abs(s.calibrated - tp) <= 1e-9;
  }
  const double secs = timer.seconds();
  report(2, "fusion identity (z = 4*t on 1000 ground-truth triples)", ok && secs < 1.0,
         "runtime " + std::to_string(secs) + "s");
}

// --- criterion 3: metric oracle equivalence ---------------------------------------

std::vector<double> rank_oracle(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    ranks[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return ranks;
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  return (sab / n - sa / n * (sb / n)) /
         std::sqrt((saa / n - sa / n * (sa / n)) * (sbb / n - sb / n * (sb / n)));
}

void criterion_metric_oracles() {
  Timer timer;
  Rng rng(3);
  bool ok = true;
  std::string detail;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    const bool with_ties = trial % 2 == 0;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = with_ties ? static_cast<double>(rng.below(10)) : rng.uniform(-3, 3);
      b[i] = with_ties ? static_cast<double>(rng.below(10)) : rng.uniform(-3, 3);
    }
    const auto rep = compute_metrics(a, b, 4.0);
    if (!rep.lcc) continue;  // degenerate tie draw; oracle undefined too
    if (std::abs(*rep.lcc - pearson_oracle(a, b)) > 1e-9) {
      ok = false;
      detail = "lcc mismatch";
    }
    if (std::abs(*rep.srcc - pearson_oracle(rank_oracle(a), rank_oracle(b))) > 1e-9) {
      ok = false;
      detail = "srcc mismatch";
    }
  }
  // exact monotone-transform invariance on tie-free data
  for (int trial = 0; trial < 10 && ok; ++trial) {
    std::vector<double> a(97), b(97);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform(-2, 2);
      b[i] = rng.uniform(-2, 2);
    }
    std::vector<double> ea(a.size()), lb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ea[i] = std::exp(a[i]);
      lb[i] = 5.0 * b[i] + 3.0;
    }
    const auto base = compute_metrics(a, b, 0.0);
    if (*compute_metrics(ea, b, 0.0).srcc != *base.srcc ||
        *compute_metrics(a, lb, 0.0).srcc != *base.srcc) {
      ok = false;
      detail = "monotone invariance broken";
    }
  }
  const double secs = timer.seconds();
  report(3, "SRCC/LCC against brute-force oracles within 1e-9", ok && secs < 10.0,
         detail.empty() ? "runtime " + std::to_string(secs) + "s" : detail);
}

// --- criterion 4: improvement rows ----------------------------------------------

void criterion_improvement_rows() {
  const auto mk = [](double acc, double mse, double srcc, double lcc) {
    MetricsReport r;
    r.acc = acc;
    r.mse = mse;
    r.srcc = srcc;
    r.lcc = lcc;
    r.n = 3106;
    return r;
  };
  const auto close = [](const std::optional<double>& v, double want) {
    return v && std::abs(*v - want) <= 0.01;
  };

  const auto beauty = improvement_report(mk(0.7379, 0.7602, 0.6331, 0.6361),
                                         mk(0.7733, 0.6547, 0.6871, 0.6903));
  bool ok = close(beauty.acc_pct, 4.80) && close(beauty.mse_pct, 13.88) &&
            close(beauty.srcc_pct, 8.53) && close(beauty.lcc_pct, 8.52);

  const auto happy = improvement_report(mk(0.7762, 0.6643, 0.7026, 0.6963),
                                        mk(0.8042, 0.5895, 0.7450, 0.7455));
  ok = ok && close(happy.acc_pct, 3.60) && close(happy.mse_pct, 11.26) &&
       close(happy.srcc_pct, 6.03) && close(happy.lcc_pct, 7.07);

  report(4, "improvement rows reproduce both published tables within 0.01 points", ok);
}

// --- criterion 5: retrieval exactness ----------------------------------------------

void criterion_retrieval_exactness() {
  Timer timer;
  BackboneSpec spec;
  spec.kind = "stub";
  spec.stub_mid_channels = 4;
  spec.stub_out_channels = 8;
  spec.stub_seed = 50;
  const auto backbone = make_extractor(spec);
  const Preprocess pp{24, 16};

  std::vector<Tensor> images;
  std::vector<ReferenceIndex::Entry> entries;
  for (int i = 0; i < 100; ++i) {
    images.push_back(pattern_image(48, 32, 5000 + i));
    ReferenceIndex::Entry e;
    char id[16];
    std::snprintf(id, sizeof(id), "ref%03d", i);
    e.id = id;
    e.score = 3.8 + 0.004 * i;
    e.features = extract_scene_features(images.back(), *backbone, pp);
    entries.push_back(std::move(e));
  }
  const auto index = ReferenceIndex::build(entries, DistanceMetric::Euclidean, Dimension::Beauty,
                                           backbone->id());

  bool ok = true;
  // every index member self-queries at distance 0
  for (int i = 0; i < 100 && ok; ++i) {
    const auto hit = retrieve_reference(images[i], index, *backbone, pp);
    char id[16];
    std::snprintf(id, sizeof(id), "ref%03d", i);
    ok = hit.id == id && hit.distance == 0.0;
  }
  // fresh queries match the exhaustive scan
  for (int q = 0; q < 50 && ok; ++q) {
    const Tensor probe_img = pattern_image(48, 32, 90000 + q);
    const auto probe = extract_scene_features(probe_img, *backbone, pp);
    const auto hit = index.query(probe);
    double best = 1e300;
    std::string best_id;
    for (const auto& e : index.entries()) {
      const double d = vector_distance(probe, e.features, DistanceMetric::Euclidean);
      if (d < best || (d == best && e.id < best_id)) {
        best = d;
        best_id = e.id;
      }
    }
    ok = hit.id == best_id && std::abs(hit.distance - best) == 0.0;
  }
  const double secs = timer.seconds();
  report(5, "retrieval equals exhaustive argmin on a 100-image index; self-distance 0",
         ok && secs < 30.0, "runtime " + std::to_string(secs) + "s");
}

// --- criterion 6: dedup correctness --------------------------------------------------

void criterion_dedup() {
  Timer timer;
  TempDir dir("dedup");

  // 45 distinct images + 5 exact duplicates of the first five.
  std::vector<std::string> names;
  for (int i = 0; i < 45; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%02d.png", i);
    save_image_rgb(pattern_image(120, 80, 300 + 17 * i), dir.file(name));
    names.push_back(name);
  }
  for (int i = 0; i < 5; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%02d_copy.png", i);
    fs::copy_file(dir.file(names[i]), dir.file(name));
  }

  std::vector<ImageRecord> records;
  std::vector<ColorHistogram> hists;
  for (const auto& rel : list_image_files(dir.str())) {
    const auto img = load_image_rgb(dir.file(rel));
    records.push_back(ImageRecord::make(rel, dir.file(rel), img.width, img.height));
    hists.push_back(compute_histogram(img, 8));
  }

  // choose a threshold below the closest distinct pair so only exact
  // duplicates collide
  double min_distinct = 2.0;
  for (std::size_t a = 0; a < hists.size(); ++a)
    for (std::size_t b = a + 1; b < hists.size(); ++b) {
      const double d = histogram_distance(hists[a], hists[b]);
      if (d > 0.0) min_distinct = std::min(min_distinct, d);
    }
  const double threshold = std::min(0.2, 0.9 * min_distinct);

  Rng rng(606);
  const auto res = dedup_by_histogram(records, hists, threshold, rng);

  bool ok = threshold > 0.0 && res.kept.size() == 45;
  for (int i = 0; i < 5 && ok; ++i) {
    char orig[32], copy[32];
    std::snprintf(orig, sizeof(orig), "img%02d.png", i);
    std::snprintf(copy, sizeof(copy), "img%02d_copy.png", i);
    int survivors = 0;
    for (const auto& r : res.kept)
      if (r.id == orig || r.id == copy) ++survivors;
    ok = survivors == 1;
  }
  // brute-force: post-dedup min pairwise distance >= threshold
  std::map<std::string, const ColorHistogram*> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].id] = &hists[i];
  for (std::size_t a = 0; a < res.kept.size() && ok; ++a)
    for (std::size_t b = a + 1; b < res.kept.size() && ok; ++b)
      ok = histogram_distance(*by_id[res.kept[a].id], *by_id[res.kept[b].id]) >= threshold;

  const double secs = timer.seconds();
  report(6, "dedup keeps one of each planted duplicate group; min distance >= threshold",
         ok && secs < 30.0, "runtime " + std::to_string(secs) + "s");
}

// --- criterion 7: toy overfit ---------------------------------------------------------

void criterion_toy_overfit() {
  Timer timer;

  BackboneSpec rb;
  rb.kind = "stub";
  rb.stub_mid_channels = 4;
  rb.stub_out_channels = 8;
  rb.stub_seed = 1001;
  const auto retrieval_backbone = make_extractor(rb);
  const Preprocess pp{24, 16};

  ModelSpec ms;
  ms.dimension = Dimension::Beauty;
  ms.backbone.kind = "stub";
  ms.backbone.stub_mid_channels = 8;
  ms.backbone.stub_out_channels = 32;
  ms.backbone.stub_seed = 2002;
  ms.preprocess = pp;
  ms.hidden = 16;
  ms.seed = 7;

  std::map<std::string, Tensor> ref_images;
  std::vector<ReferenceIndex::Entry> entries;
  for (int r = 0; r < 4; ++r) {
    const std::string id = "ref" + std::to_string(r);
    const Tensor img = block_image(48, 32, 9000 + r);
    ref_images[id] = img;
    ReferenceIndex::Entry e;
    e.id = id;
    e.score = 3.85 + 0.1 * r;
    e.features = extract_scene_features(img, *retrieval_backbone, pp);
    entries.push_back(std::move(e));
  }
  const auto index = ReferenceIndex::build(std::move(entries), DistanceMetric::Euclidean,
                                           Dimension::Beauty, retrieval_backbone->id());

  Rng lrng(55);
  std::vector<TrainSample> inputs;
  for (int i = 0; i < 16; ++i) {
    TrainSample s;
    s.image_id = "img" + std::to_string(i);
    s.image = block_image(48, 32, 100 + i);
    s.t_target = 1.5 + 5.0 * (i / 15.0);
    s.t_assist = std::min(7.0, std::max(1.0, s.t_target + lrng.uniform(-0.8, 0.8)));
    inputs.push_back(std::move(s));
  }

  auto bundle = std::make_shared<ModelBundle>(make_model_bundle(ms));
  bool ok = true;
  std::string detail;

  double stage1_drop = 0.0;
  for (int stage : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.15;
    cfg.seed = 99;
    cfg.freeze = FreezePolicy::default_for_stage(stage);
    cfg.scale_lo = cfg.scale_hi = 1.0;
    cfg.flip_prob = 0.0;

    const auto g_before = global_params(bundle->global);
    const auto l_before = local_params(bundle->local);
    const auto res =
        train_stage(*bundle, inputs, index, *retrieval_backbone, pp, ref_images, cfg);
    if (stage == 1) {
      stage1_drop = res.history.back().mean_loss / res.history.front().mean_loss;
      if (stage1_drop > 0.10) {
        ok = false;
        detail = "stage-1 loss only fell to " + std::to_string(stage1_drop) + " of initial";
      }
    }
    if (stage >= 2 && global_params(bundle->global) != g_before) {
      ok = false;
      detail = "frozen global module changed in stage " + std::to_string(stage);
    }
    if (stage == 3 && local_params(bundle->local) != l_before) {
      ok = false;
      detail = "frozen local module changed in stage 3";
    }
  }

  // calibrated train-set scores vs ground truth
  auto index_ptr = std::make_shared<ReferenceIndex>(index);
  ImageResolver resolve = [&ref_images](const std::string& id) { return ref_images.at(id); };
  const Scorer scorer(bundle, index_ptr, retrieval_backbone, pp, resolve);
  std::vector<double> pred, truth;
  for (const auto& s : inputs) {
    pred.push_back(scorer.score_image(s.image_id, s.image).calibrated);
    truth.push_back(s.t_target);
  }
  const auto rep = compute_metrics(pred, truth, 4.0);
  if (!rep.srcc || *rep.srcc < 0.9) {
    ok = false;
    detail = "train SRCC " + (rep.srcc ? std::to_string(*rep.srcc) : std::string("undefined"));
  }

  const double secs = timer.seconds();
  if (detail.empty())
    detail = "stage-1 residual " + std::to_string(stage1_drop) + ", SRCC " +
             std::to_string(*rep.srcc) + ", runtime " + std::to_string(secs) + "s";
  report(7, "toy overfit: stage-1 loss drop >= 90%, SRCC >= 0.9, frozen modules bitwise intact",
         ok && secs < 300.0, detail);
}

// --- criterion 8: gradient checks ----------------------------------------------------

void criterion_gradient_checks() {
  Timer timer;
  Rng rng(8);
  bool ok = true;
  const double eps = 1e-6;
  const auto rel_close = [](double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom <= 1e-4;
  };
  for (int i = 0; i < 100 && ok; ++i) {
    const double yp = rng.uniform(-5, 5), yq = rng.uniform(-5, 5), yr = rng.uniform(-5, 5);
    const double tp = rng.uniform(1, 7), tq = rng.uniform(1, 7), te = rng.uniform(1, 7);

    const auto g = loss_global_grad(yp, yq, yr, tp, tq);
    ok = ok && rel_close(g.d_input, (loss_global(yp + eps, yq, yr, tp, tq) -
                                     loss_global(yp - eps, yq, yr, tp, tq)) / (2 * eps));
    ok = ok && rel_close(g.d_ref, (loss_global(yp, yq + eps, yr, tp, tq) -
                                   loss_global(yp, yq - eps, yr, tp, tq)) / (2 * eps));
    ok = ok && rel_close(g.d_rel, (loss_global(yp, yq, yr + eps, tp, tq) -
                                   loss_global(yp, yq, yr - eps, tp, tq)) / (2 * eps));

    ok = ok && rel_close(loss_local_grad(yr, tp, tq),
                         (loss_local(yr + eps, tp, tq) - loss_local(yr - eps, tp, tq)) / (2 * eps));

    const auto e = loss_emotion_grad(yp, yq, yr, tp, te);
    ok = ok && rel_close(e.d_target, (loss_emotion(yp + eps, yq, yr, tp, te) -
                                      loss_emotion(yp - eps, yq, yr, tp, te)) / (2 * eps));
    ok = ok && rel_close(e.d_assist, (loss_emotion(yp, yq + eps, yr, tp, te) -
                                      loss_emotion(yp, yq - eps, yr, tp, te)) / (2 * eps));
    ok = ok && rel_close(e.d_diff, (loss_emotion(yp, yq, yr + eps, tp, te) -
                                    loss_emotion(yp, yq, yr - eps, tp, te)) / (2 * eps));
  }
  const double secs = timer.seconds();
  report(8, "analytic loss gradients match central differences within 1e-4", ok && secs < 10.0,
         "runtime " + std::to_string(secs) + "s");
}

// --- criterion 9: published-score statistics ------------------------------------------

void criterion_published_stats() {
  const char* env = std::getenv("BHIA_BNID_LABELS");
  if (env && fs::exists(env)) {
    const auto labels = load_labels(env);
    const auto rep = score_statistics(labels);
    const double want[4] = {0.3062, 0.5405, 0.7571, 0.8695};
    bool ok = rep.gap_fractions.size() == 4;
    std::string detail;
    for (int i = 0; i < 4 && ok; ++i) {
      ok = std::abs(rep.gap_fractions[i].second - want[i]) <= 0.005;
      if (!ok) detail = "fraction " + std::to_string(i) + " = " +
                        std::to_string(rep.gap_fractions[i].second);
    }
    ok = ok && rep.pearson && *rep.pearson > 0.0;
    report(9, "published score file reproduces the difference distribution", ok, detail);
    return;
  }

  // dataset not available: the synthetic monotone-CDF property must pass
  Rng rng(9);
  std::vector<LabeledImage> labels;
  for (int i = 0; i < 500; ++i) {
    LabeledImage l;
    l.image_id = "s" + std::to_string(i);
    l.beauty_mean = rng.uniform(1.0, 7.0);
    l.happy_mean = rng.uniform(1.0, 7.0);
    l.n_beauty = l.n_happy = 10;
    labels.push_back(std::move(l));
  }
  const auto rep = score_statistics(labels, {0.25, 0.5, 0.75, 1.0, 2.0, 4.0, 6.0});
  bool ok = true;
  double prev = 0.0;
  for (const auto& [bound, frac] : rep.gap_fractions) {
    ok = ok && frac >= prev;
    prev = frac;
  }
  ok = ok && rep.gap_fractions.back().second == 1.0;
  report_skip(9, "published score file not available (set BHIA_BNID_LABELS to enable)",
              std::string("synthetic monotone-CDF property: ") + (ok ? "PASS" : "FAIL"));
  if (!ok) ++g_failures;
}

// --- criterion 10: CLI determinism ------------------------------------------------------

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(BHIA_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Masks the declared timestamp fields: the "timestamp" key in run manifests
// and the timestamp column of history files. Everything else must match
// byte for byte.
std::string canonical(const fs::path& p, std::string bytes) {
  const std::string name = p.filename().string();
  if (name.size() > 14 && name.substr(name.size() - 14) == ".manifest.json") {
    static const std::regex ts_re("\"timestamp\": \"[^\"]*\"");
    return std::regex_replace(bytes, ts_re, "\"timestamp\": \"<masked>\"");
  }
  if (name == "manifest.json") return bytes;  // checkpoint manifest has no timestamp
  if (name.rfind("history_", 0) == 0) {
    static const std::regex line_re("\t[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9:]*Z");
    return std::regex_replace(bytes, line_re, "\t<masked>");
  }
  return bytes;
}

std::map<std::string, std::string> snapshot(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(work)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), work).generic_string()] = canonical(e.path(), read_bytes(e.path()));
  }
  return out;
}

void criterion_cli_determinism() {
  Timer timer;
  TempDir dir("determinism");
  const std::string corpus = dir.file("corpus");
  fs::create_directories(corpus);
  for (int i = 0; i < 20; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%02d.png", i);
    save_image_rgb(pattern_image(300, 200, 7000 + i), (fs::path(corpus) / name).string());
  }
  {
    std::ofstream f(dir.file("ratings.csv"));
    f << "image_id,rater_id,beauty,happy,dwell_seconds\n";
    const int spread[6] = {1, 2, 3, 5, 6, 7};
    for (int i = 0; i < 20; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "img%02d.png", i);
      const int beauty = i < 6 ? 4 : spread[i % 6];
      const int happy = i < 6 ? 4 : spread[(i + 2) % 6];
      for (int r = 0; r < 8; ++r)
        f << id << ",rater" << r << "," << beauty << "," << happy << ",5.0\n";
    }
  }
  {
    std::ofstream f(dir.file("profiles.csv"));
    f << "rater_id,optimism,mood\n";
    for (int r = 0; r < 8; ++r)
      f << "rater" << r << "," << (r % 2 ? "high" : "low") << "," << (r % 3 ? "good" : "bad")
        << "\n";
  }
  const std::string work = dir.file("work");
  {
    nlohmann::json j;
    j["seed"] = 11;
    j["dimension"] = "beauty";
    j["paths"] = {{"corpus", corpus},
                  {"ratings", dir.file("ratings.csv")},
                  {"profiles", dir.file("profiles.csv")},
                  {"work", work}};
    j["curation"] = {{"ratio", 1.5},      {"ratio_tol", 0.1},  {"min_width", 300},
                     {"min_height", 200}, {"size_slack", 0.0}, {"bins_per_channel", 8},
                     {"dedup_threshold", 0.02}};
    j["cleaning"] = {{"sigma_k", 2.0}, {"min_valid", 5}, {"min_dwell_seconds", 3.0}};
    j["split"] = {{"ref_lo", 3.8}, {"ref_hi", 4.2}, {"ref_count", 4}, {"ref_train", 2},
                  {"input_train", 10}};
    j["backbones"] = {{"retrieval",
                       {{"kind", "stub"},
                        {"stub_mid_channels", 4},
                        {"stub_out_channels", 8},
                        {"stub_seed", 1001}}},
                      {"model",
                       {{"kind", "stub"},
                        {"stub_mid_channels", 8},
                        {"stub_out_channels", 32},
                        {"stub_seed", 2002}}},
                      {"retrieval_metric", "euclidean"}};
    j["model"] = {{"short_side", 24}, {"crop", 16}, {"center_frac", 0.5}, {"corner_frac", 0.4},
                  {"hidden", 16}};
    nlohmann::json stage = {{"epochs", 25}, {"batch_size", 16}, {"learning_rate", 0.05}};
    j["train"] = {{"stages", {stage, stage, stage}}, {"flip_prob", 0.5}, {"scale_lo", 0.9},
                  {"scale_hi", 1.1}};
    j["scoring"] = {{"threshold", 4.0}, {"top_k", 5}};
    std::ofstream f(dir.file("config.json"));
    f << j.dump(2);
  }

  const std::vector<std::string> sequence = {
      "curate", "ingest", "clean", "stats", "split", "index", "train", "evaluate",
      "score --image " + corpus + "/img03.png", "rank --dir " + corpus};

  bool ok = true;
  std::string detail;
  const auto run_all = [&]() {
    for (const auto& sub : sequence) {
      if (run_cli("-c " + dir.file("config.json") + " " + sub, dir.file("log.txt")) != 0) {
        ok = false;
        detail = "subcommand failed on rerun: " + sub + "\n" + read_bytes(dir.file("log.txt"));
        return;
      }
    }
  };

  run_all();
  if (ok) {
    const auto first = snapshot(work);
    run_all();
    if (ok) {
      const auto second = snapshot(work);
      if (first.size() != second.size()) {
        ok = false;
        detail = "artifact sets differ in size";
      } else {
        for (const auto& [rel, bytes] : first) {
          const auto it = second.find(rel);
          if (it == second.end() || it->second != bytes) {
            ok = false;
            detail = "artifact differs across reruns: " + rel;
            break;
          }
        }
      }
    }
  }
  const double secs = timer.seconds();
  report(10, "re-running every subcommand reproduces byte-identical artifacts", ok,
         detail.empty() ? "runtime " + std::to_string(secs) + "s" : detail);
}

}  // namespace

int main() {
  criterion_loss_oracles();
  criterion_fusion_identity();
  criterion_metric_oracles();
  criterion_improvement_rows();
  criterion_retrieval_exactness();
  criterion_dedup();
  criterion_toy_overfit();
  criterion_gradient_checks();
  criterion_published_stats();
  criterion_cli_determinism();

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all acceptance criteria satisfied\n";
  return 0;
}
