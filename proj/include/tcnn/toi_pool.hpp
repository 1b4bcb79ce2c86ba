#pragma once

#include <cstdint>
#include <vector>

#include "tcnn/geometry.hpp"
#include "tcnn/tensor.hpp"

namespace tcnn {

/// One box per feature frame, in feature-map units.
struct TubeOfInterest {
  std::vector<Box2D> boxes;
};

/// Fixed output size of a ToI pooling layer.
struct ToIOutputSpec {
  int depth = 1;
  int height = 1;
  int width = 1;
};

/// Argmax routing recorded on forward.
struct ToIArgmax {
  CubeShape input_shape;
  CubeShape output_shape;
  /// Input linear index feeding each output element (C x D x H x W).
  std::vector<std::int64_t> index;
  /// Stage-1 winners: input linear index for each spatially pooled cell (C x d x H x W).
  std::vector<std::int64_t> spatial_index;
};

struct ToIResult {
  FeatureCube output;
  ToIArgmax argmax;
};

/// Integer cell region [x0, x1) x [y0, y1) a box covers after snapping
/// outward to cell edges, clamping and inflating empty regions to one cell.
struct CellRegion {
  int x0, y0, x1, y1;
};
CellRegion snap_box(const Box2D& box, int height, int width);

/// [begin, end) of bin k out of `bins` over an extent of `extent` cells.
struct BinRange {
  int begin, end;
};
BinRange bin_range(int k, int bins, int extent);

/// Tube-of-interest max pooling: spatial max over H x W bins of each frame's
/// box, then temporal max over D groups of adjacent frames.
ToIResult toi_pool_forward(const FeatureCube& input, const TubeOfInterest& tube,
                           const ToIOutputSpec& spec);

/// Routes each output gradient to its argmax input; inputs shared by several
/// outputs accumulate.
FeatureCube toi_pool_backward(const FeatureCube& grad_out, const ToIArgmax& argmax,
                              const CubeShape& input_dims);

}  // namespace tcnn
