#pragma once

namespace bhia {

// Stage losses, all sums of squared errors. Targets: t_input / t_ref are the
// target-dimension ground truths of the input and reference images; t_assist
// is the input's assistant-dimension ground truth.

inline double loss_global(double y_input, double y_ref, double y_rel, double t_input,
                          double t_ref) {
  const double a = y_input - t_input;
  const double b = y_ref - t_ref;
  const double c = y_rel - (t_input - t_ref);
  return a * a + b * b + c * c;
}

inline double loss_local(double y_rel, double t_input, double t_ref) {
  const double c = y_rel - (t_input - t_ref);
  return c * c;
}

inline double loss_emotion(double y_target, double y_assist, double y_diff, double t_target,
                           double t_assist) {
  const double a = y_target - t_target;
  const double b = y_assist - t_assist;
  const double c = y_diff - (t_target - t_assist);
  return a * a + b * b + c * c;
}

// Analytic derivatives with respect to each prediction: 2 * (pred - target).

struct GlobalLossGrad {
  double d_input, d_ref, d_rel;
};

inline GlobalLossGrad loss_global_grad(double y_input, double y_ref, double y_rel, double t_input,
                                       double t_ref) {
  return {2.0 * (y_input - t_input), 2.0 * (y_ref - t_ref),
          2.0 * (y_rel - (t_input - t_ref))};
}

inline double loss_local_grad(double y_rel, double t_input, double t_ref) {
  return 2.0 * (y_rel - (t_input - t_ref));
}

struct EmotionLossGrad {
  double d_target, d_assist, d_diff;
};

inline EmotionLossGrad loss_emotion_grad(double y_target, double y_assist, double y_diff,
                                         double t_target, double t_assist) {
  return {2.0 * (y_target - t_target), 2.0 * (y_assist - t_assist),
          2.0 * (y_diff - (t_target - t_assist))};
}

}  // namespace bhia
