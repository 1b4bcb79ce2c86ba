#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tcnn {

/// Central differences of `loss` with respect to every entry of `x`.
std::vector<double> central_difference(std::span<double> x, const std::function<double()>& loss,
                                       double eps = 1e-6);

/// max_i |a_i - n_i| / (|n_i| + floor)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-5);

struct GradcheckEntry {
  std::string layer;
  int instances = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  double tolerance = 1e-3;
  /// Scales the conv3d analytic weight gradient by 1.01, so the check fails.
  bool corrupt_backward = false;
};

/// Checks every differentiable layer (conv3d, maxpool3d, fc, relu, l2norm,
/// conv1x1, toi_pool, the composed TPN loss and the recognition head)
/// against central differences on small random instances. One entry per
/// layer type.
std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& options);

}  // namespace tcnn
