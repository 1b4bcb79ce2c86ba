#include "tcnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tcnn/layers.hpp"

namespace tcnn {

double bce_with_logits(double logit, double target, double* grad) {
  // log(1 + e^x) without overflow.
  const double softplus = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
  if (grad != nullptr) *grad = sigmoid(logit) - target;
  return softplus - target * logit;
}

double smooth_l1(double x, double* grad) {
  const double a = std::abs(x);
  if (a < 1.0) {
    if (grad != nullptr) *grad = x;
    return 0.5 * x * x;
  }
  if (grad != nullptr) *grad = x > 0.0 ? 1.0 : -1.0;
  return a - 0.5;
}

double softmax_cross_entropy(std::span<const double> logits, int label, std::vector<double>* grad) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw std::invalid_argument("softmax_cross_entropy: label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double loss = std::log(z) + m - logits[label];
  if (!std::isfinite(loss)) throw std::runtime_error("softmax_cross_entropy: non-finite loss");
  if (grad != nullptr) {
    grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) (*grad)[i] = std::exp(logits[i] - m) / z;
    (*grad)[label] -= 1.0;
  }
  return loss;
}

}  // namespace tcnn
