#include "tcnn/toi_pool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tcnn {

CellRegion snap_box(const Box2D& box, int height, int width) {
  auto snap = [](double lo, double hi, int extent, int& a, int& b) {
    a = static_cast<int>(std::clamp(std::floor(lo), 0.0, static_cast<double>(extent)));
    b = static_cast<int>(std::clamp(std::ceil(hi), 0.0, static_cast<double>(extent)));
    if (b <= a) {
      a = std::min(a, extent - 1);
      b = a + 1;
    }
  };
  CellRegion r{};
  snap(box.x1, box.x2, width, r.x0, r.x1);
  snap(box.y1, box.y2, height, r.y0, r.y1);
  return r;
}

BinRange bin_range(int k, int bins, int extent) {
  const long long e = extent;
  const long long lo = (static_cast<long long>(k) * e) / bins;
  const long long hi = ((static_cast<long long>(k) + 1) * e + bins - 1) / bins;
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

ToIResult toi_pool_forward(const FeatureCube& input, const TubeOfInterest& tube,
                           const ToIOutputSpec& spec) {
  const CubeShape in = input.shape();
  if (static_cast<int>(tube.boxes.size()) != in.depth)
    throw ShapeError("toi_pool: tube has " + std::to_string(tube.boxes.size()) +
                     " boxes but the cube depth is " + std::to_string(in.depth));
  if (spec.depth < 1 || spec.height < 1 || spec.width < 1)
    throw ShapeError("toi_pool: output spec dims must be >= 1");
  for (const Box2D& b : tube.boxes)
    if (!b.valid() || !std::isfinite(b.x1) || !std::isfinite(b.x2) || !std::isfinite(b.y1) ||
        !std::isfinite(b.y2))
      throw std::invalid_argument("toi_pool: invalid box in tube");

  const int C = in.channels, d = in.depth, H = spec.height, W = spec.width, D = spec.depth;
  const CubeShape out_shape{C, D, H, W};
  ToIResult r{FeatureCube(out_shape),
              ToIArgmax{in, out_shape, std::vector<std::int64_t>(out_shape.size()),
                        std::vector<std::int64_t>(static_cast<std::size_t>(C) * d * H * W)}};

  // Stage 1: spatial bins per frame.
  std::vector<CellRegion> regions(d);
  for (int f = 0; f < d; ++f) regions[f] = snap_box(tube.boxes[f], in.height, in.width);
  std::vector<double> stage1(r.argmax.spatial_index.size());
  std::size_t s = 0;
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < d; ++f) {
      const CellRegion& reg = regions[f];
      for (int bh = 0; bh < H; ++bh) {
        const BinRange rh = bin_range(bh, H, reg.y1 - reg.y0);
        for (int bw = 0; bw < W; ++bw, ++s) {
          const BinRange rw = bin_range(bw, W, reg.x1 - reg.x0);
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t arg = -1;
          for (int y = reg.y0 + rh.begin; y < reg.y0 + rh.end; ++y)
            for (int x = reg.x0 + rw.begin; x < reg.x0 + rw.end; ++x) {
              const std::size_t i = input.index(c, f, y, x);
              if (arg < 0 || input[i] > best) {
                best = input[i];
                arg = static_cast<std::int64_t>(i);
              }
            }
          stage1[s] = best;
          r.argmax.spatial_index[s] = arg;
        }
      }
    }

  // Stage 2: temporal bins over the spatially pooled maps. Frames are scanned
  // in ascending order, which is ascending input index within a channel.
  std::size_t o = 0;
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < D; ++t) {
      const BinRange rt = bin_range(t, D, d);
      for (int bh = 0; bh < H; ++bh)
        for (int bw = 0; bw < W; ++bw, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t arg = -1;
          for (int f = rt.begin; f < rt.end; ++f) {
            const std::size_t si = ((static_cast<std::size_t>(c) * d + f) * H + bh) * W + bw;
            const std::int64_t cand = r.argmax.spatial_index[si];
            if (arg < 0 || stage1[si] > best || (stage1[si] == best && cand < arg)) {
              best = stage1[si];
              arg = cand;
            }
          }
          r.output[o] = best;
          r.argmax.index[o] = arg;
        }
    }
  return r;
}

FeatureCube toi_pool_backward(const FeatureCube& grad_out, const ToIArgmax& argmax,
                              const CubeShape& input_dims) {
  if (argmax.index.empty()) throw std::invalid_argument("toi_pool_backward: missing argmax");
  if (!(input_dims == argmax.input_shape))
    throw ShapeError("toi_pool_backward: input dims " + input_dims.str() +
                     " do not match forward input " + argmax.input_shape.str());
  if (!(grad_out.shape() == argmax.output_shape))
    throw ShapeError("toi_pool_backward: grad_out dims " + grad_out.shape().str() +
                     " do not match forward output " + argmax.output_shape.str());
  FeatureCube g(input_dims);
  for (std::size_t j = 0; j < argmax.index.size(); ++j)
    g[static_cast<std::size_t>(argmax.index[j])] += grad_out[j];
  return g;
}

}  // namespace tcnn
