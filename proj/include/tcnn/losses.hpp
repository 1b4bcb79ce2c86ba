#pragma once

#include <span>
#include <vector>

namespace tcnn {

/// Binary log loss on a logit: -t log s(x) - (1 - t) log(1 - s(x)), computed
/// stably. Writes d(loss)/d(logit) when `grad` is non-null.
double bce_with_logits(double logit, double target, double* grad = nullptr);

/// Smooth-L1 with a unit transition point: x^2 / 2 inside |x| < 1, |x| - 1/2 outside.
double smooth_l1(double x, double* grad = nullptr);

/// -log softmax(logits)[label]. Writes d(loss)/d(logits) when `grad` is non-null.
double softmax_cross_entropy(std::span<const double> logits, int label,
                             std::vector<double>* grad = nullptr);

}  // namespace tcnn
