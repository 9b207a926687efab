#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bhia {

// Which score a model targets. The other dimension acts as the assistant.
enum class Dimension { Beauty, Happy };

inline std::string to_string(Dimension d) { return d == Dimension::Beauty ? "beauty" : "happy"; }

inline Dimension dimension_from_string(const std::string& s) {
  if (s == "beauty") return Dimension::Beauty;
  if (s == "happy") return Dimension::Happy;
  throw std::invalid_argument("unknown dimension '" + s + "' (expected beauty|happy)");
}

inline Dimension assistant_of(Dimension d) {
  return d == Dimension::Beauty ? Dimension::Happy : Dimension::Beauty;
}

// One image file plus its physical properties.
struct ImageRecord {
  std::string id;
  std::string path;
  int width = 0;
  int height = 0;
  double aspect_ratio = 0.0;  // width / height

  static ImageRecord make(std::string id, std::string path, int width, int height) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("ImageRecord: non-positive dimensions for " + id);
    ImageRecord r;
    r.id = std::move(id);
    r.path = std::move(path);
    r.width = width;
    r.height = height;
    r.aspect_ratio = static_cast<double>(width) / height;
    return r;
  }
};

// One rater's votes on one image. `valid` reflects the dwell-time rule
// (raters must view an image for at least min_dwell seconds).
struct RatingRecord {
  std::string image_id;
  std::string rater_id;
  int beauty = 0;  // 1..7
  int happy = 0;   // 1..7
  double dwell_seconds = 0.0;
  bool valid = true;
};

// Questionnaire answers for one rater. Attribute levels are data-defined
// ordinal strings; the set of attributes comes from the profile file header.
struct RaterProfile {
  std::string rater_id;
  std::vector<std::pair<std::string, std::string>> attributes;  // (name, level)
};

// Aggregated per-image ground truth.
struct LabeledImage {
  std::string image_id;
  double beauty_mean = 0.0;  // in [1,7]
  double happy_mean = 0.0;   // in [1,7]
  int n_beauty = 0;          // surviving beauty ratings
  int n_happy = 0;           // surviving happy ratings

  double score(Dimension d) const { return d == Dimension::Beauty ? beauty_mean : happy_mean; }
};

enum class SplitRole { RefTrain, RefTest, InputTrain, InputTest };

inline std::string to_string(SplitRole r) {
  switch (r) {
    case SplitRole::RefTrain: return "ref-train";
    case SplitRole::RefTest: return "ref-test";
    case SplitRole::InputTrain: return "input-train";
    case SplitRole::InputTest: return "input-test";
  }
  throw std::logic_error("unreachable");
}

inline SplitRole split_role_from_string(const std::string& s) {
  if (s == "ref-train") return SplitRole::RefTrain;
  if (s == "ref-test") return SplitRole::RefTest;
  if (s == "input-train") return SplitRole::InputTrain;
  if (s == "input-test") return SplitRole::InputTest;
  throw std::invalid_argument("unknown split role '" + s + "'");
}

}  // namespace bhia
