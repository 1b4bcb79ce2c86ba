#include "tcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tcnn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Output column range [lo, hi) for which input column ow + shift is in [0, in_w).
inline void valid_range(int shift, int in_w, int out_w, int& lo, int& hi) {
  lo = std::max(0, -shift);
  hi = std::min(out_w, in_w - shift);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv3D

Conv3D::Conv3D(int in_channels, int out_channels, Extent3 kernel, Extent3 padding)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), padding_(padding) {
  require(in_channels >= 1 && out_channels >= 1, "conv3d channel counts must be >= 1");
  require(kernel.d >= 1 && kernel.h >= 1 && kernel.w >= 1, "conv3d kernel dims must be >= 1");
  require(padding.d >= 0 && padding.h >= 0 && padding.w >= 0, "conv3d padding must be >= 0");
  weight = Tensor({out_channels, in_channels, kernel.d, kernel.h, kernel.w});
  bias = Tensor({out_channels});
}

CubeShape Conv3D::output_shape(const CubeShape& in) const {
  require(in.channels == in_channels_, "conv3d channel mismatch: layer expects " +
                                           std::to_string(in_channels_) + ", input has " +
                                           std::to_string(in.channels));
  const int od = in.depth + 2 * padding_.d - kernel_.d + 1;
  const int oh = in.height + 2 * padding_.h - kernel_.h + 1;
  const int ow = in.width + 2 * padding_.w - kernel_.w + 1;
  require(od >= 1 && oh >= 1 && ow >= 1,
          "conv3d kernel larger than padded input " + in.str());
  return {out_channels_, od, oh, ow};
}

FeatureCube conv3d_forward(const Conv3D& layer, const FeatureCube& input) {
  const CubeShape out_shape = layer.output_shape(input.shape());
  FeatureCube out(out_shape);
  const CubeShape& in = input.shape();
  const Extent3 k = layer.kernel();
  const Extent3 p = layer.padding();
  const int OC = out_shape.channels;
  const int OW = out_shape.width;
  const double* x = input.data().data();
  const double* wt = layer.weight.data.data();

  // Output channels are processed in blocks so each input row load feeds
  // several accumulators. Per output the term order is unchanged.
  constexpr int kBlock = 4;
  std::vector<double> acc(static_cast<std::size_t>(kBlock) * OW);
  for (int oc0 = 0; oc0 < OC; oc0 += kBlock) {
    const int nb = std::min(kBlock, OC - oc0);
    for (int od = 0; od < out_shape.depth; ++od) {
      for (int oh = 0; oh < out_shape.height; ++oh) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ic = 0; ic < in.channels; ++ic) {
          for (int kd = 0; kd < k.d; ++kd) {
            const int id = od + kd - p.d;
            if (id < 0 || id >= in.depth) continue;
            for (int kh = 0; kh < k.h; ++kh) {
              const int ih = oh + kh - p.h;
              if (ih < 0 || ih >= in.height) continue;
              const double* row = x + input.index(ic, id, ih, 0);
              for (int kw = 0; kw < k.w; ++kw) {
                const int shift = kw - p.w;
                int lo, hi;
                valid_range(shift, in.width, OW, lo, hi);
                for (int b = 0; b < nb; ++b) {
                  const double wv = wt[layer.weight_index(oc0 + b, ic, kd, kh, kw)];
                  double* a = acc.data() + static_cast<std::size_t>(b) * OW;
                  for (int ow = lo; ow < hi; ++ow) a[ow] += wv * row[ow + shift];
                }
              }
            }
          }
        }
        for (int b = 0; b < nb; ++b) {
          const double bv = layer.bias.data[oc0 + b];
          double* dst = &out.at(oc0 + b, od, oh, 0);
          const double* a = acc.data() + static_cast<std::size_t>(b) * OW;
          for (int ow = 0; ow < OW; ++ow) dst[ow] = a[ow] + bv;
        }
      }
    }
  }
  return out;
}

void conv3d_backward_accumulate(const Conv3D& layer, const FeatureCube& input,
                                const FeatureCube& grad_out, FeatureCube* grad_input,
                                Tensor& grad_weight, Tensor& grad_bias) {
  const CubeShape out_shape = layer.output_shape(input.shape());
  require(grad_out.shape() == out_shape, "conv3d_backward: grad_out dims " +
                                             grad_out.shape().str() + " != forward output " +
                                             out_shape.str());
  require(grad_weight.size() == layer.weight.size() && grad_bias.size() == layer.bias.size(),
          "conv3d_backward: gradient buffers have wrong size");
  const CubeShape& in = input.shape();
  const Extent3 k = layer.kernel();
  const Extent3 p = layer.padding();
  const int OW = out_shape.width;
  if (grad_input != nullptr) {
    if (grad_input->shape() != in) *grad_input = FeatureCube(in);
    else grad_input->fill(0.0);
  }

  for (int oc = 0; oc < out_shape.channels; ++oc) {
    double bsum = 0.0;
    for (int od = 0; od < out_shape.depth; ++od)
      for (int oh = 0; oh < out_shape.height; ++oh) {
        const double* g = grad_out.data().data() + grad_out.index(oc, od, oh, 0);
        for (int ow = 0; ow < OW; ++ow) bsum += g[ow];
      }
    grad_bias.data[oc] += bsum;
  }

  for (int oc = 0; oc < out_shape.channels; ++oc) {
    for (int ic = 0; ic < in.channels; ++ic) {
      for (int kd = 0; kd < k.d; ++kd) {
        for (int kh = 0; kh < k.h; ++kh) {
          for (int kw = 0; kw < k.w; ++kw) {
            const std::size_t wi = layer.weight_index(oc, ic, kd, kh, kw);
            const double wv = layer.weight.data[wi];
            const int shift = kw - p.w;
            int lo, hi;
            valid_range(shift, in.width, OW, lo, hi);
            double wsum = 0.0;
            for (int od = 0; od < out_shape.depth; ++od) {
              const int id = od + kd - p.d;
              if (id < 0 || id >= in.depth) continue;
              for (int oh = 0; oh < out_shape.height; ++oh) {
                const int ih = oh + kh - p.h;
                if (ih < 0 || ih >= in.height) continue;
                const double* g = grad_out.data().data() + grad_out.index(oc, od, oh, 0);
                const double* row = input.data().data() + input.index(ic, id, ih, 0);
                for (int ow = lo; ow < hi; ++ow) wsum += g[ow] * row[ow + shift];
                if (grad_input != nullptr) {
                  double* gi = &grad_input->at(ic, id, ih, 0);
                  for (int ow = lo; ow < hi; ++ow) gi[ow + shift] += wv * g[ow];
                }
              }
            }
            grad_weight.data[wi] += wsum;
          }
        }
      }
    }
  }
}

Conv3DGrads conv3d_backward(const Conv3D& layer, const FeatureCube& input,
                            const FeatureCube& grad_out) {
  Conv3DGrads g{FeatureCube(input.shape()), Tensor(layer.weight.dims), Tensor(layer.bias.dims)};
  conv3d_backward_accumulate(layer, input, grad_out, &g.input, g.weight, g.bias);
  return g;
}

// ---------------------------------------------------------------------------
// MaxPool3D

CubeShape MaxPool3D::output_shape(const CubeShape& in) const {
  require(kernel.d >= 1 && kernel.h >= 1 && kernel.w >= 1, "maxpool kernel dims must be >= 1");
  if (!allow_partial) {
    require(in.depth % kernel.d == 0 && in.height % kernel.h == 0 && in.width % kernel.w == 0,
            "maxpool3d: input " + in.str() + " not divisible by kernel " +
                std::to_string(kernel.d) + "x" + std::to_string(kernel.h) + "x" +
                std::to_string(kernel.w));
  }
  return {in.channels, ceil_div(in.depth, kernel.d), ceil_div(in.height, kernel.h),
          ceil_div(in.width, kernel.w)};
}

PoolResult maxpool3d_forward(const MaxPool3D& layer, const FeatureCube& input) {
  const CubeShape in = input.shape();
  const CubeShape os = layer.output_shape(in);
  PoolResult r{FeatureCube(os), PoolArgmax{in, os, std::vector<std::int64_t>(os.size())}};
  const Extent3 k = layer.kernel;
  std::size_t o = 0;
  for (int c = 0; c < os.channels; ++c)
    for (int od = 0; od < os.depth; ++od)
      for (int oh = 0; oh < os.height; ++oh)
        for (int ow = 0; ow < os.width; ++ow, ++o) {
          const int d1 = std::min(in.depth, (od + 1) * k.d);
          const int h1 = std::min(in.height, (oh + 1) * k.h);
          const int w1 = std::min(in.width, (ow + 1) * k.w);
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t arg = -1;
          // Ascending scan with strict comparison keeps the lowest index on ties.
          for (int d = od * k.d; d < d1; ++d)
            for (int h = oh * k.h; h < h1; ++h)
              for (int w = ow * k.w; w < w1; ++w) {
                const std::size_t i = input.index(c, d, h, w);
                if (arg < 0 || input[i] > best) {
                  best = input[i];
                  arg = static_cast<std::int64_t>(i);
                }
              }
          r.output[o] = best;
          r.argmax.index[o] = arg;
        }
  return r;
}

FeatureCube maxpool3d_backward(const PoolArgmax& argmax, const FeatureCube& grad_out) {
  if (argmax.index.empty()) throw std::invalid_argument("maxpool3d_backward: missing argmax record");
  require(grad_out.shape() == argmax.output_shape,
          "maxpool3d_backward: grad_out dims " + grad_out.shape().str() +
              " != pooled dims " + argmax.output_shape.str());
  FeatureCube g(argmax.input_shape);
  for (std::size_t j = 0; j < argmax.index.size(); ++j)
    g[static_cast<std::size_t>(argmax.index[j])] += grad_out[j];
  return g;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
  require(in_dim >= 1 && out_dim >= 1, "fc dims must be >= 1");
  weight = Tensor({out_dim, in_dim});
  bias = Tensor({out_dim});
}

std::vector<double> fc_forward(const Linear& layer, std::span<const double> input) {
  require(static_cast<int>(input.size()) == layer.in_dim(),
          "fc: input length " + std::to_string(input.size()) + " != " +
              std::to_string(layer.in_dim()));
  std::vector<double> out(layer.out_dim());
  const double* w = layer.weight.data.data();
  for (int o = 0; o < layer.out_dim(); ++o) {
    const double* row = w + static_cast<std::size_t>(o) * layer.in_dim();
    double acc = 0.0;
    for (int i = 0; i < layer.in_dim(); ++i) acc += row[i] * input[i];
    out[o] = acc + layer.bias.data[o];
  }
  return out;
}

void fc_backward_accumulate(const Linear& layer, std::span<const double> input,
                            std::span<const double> grad_out, std::span<double> grad_input,
                            Tensor& grad_weight, Tensor& grad_bias) {
  require(static_cast<int>(input.size()) == layer.in_dim() &&
              static_cast<int>(grad_out.size()) == layer.out_dim(),
          "fc_backward: shape mismatch");
  require(grad_input.empty() || grad_input.size() == input.size(),
          "fc_backward: grad_input has wrong length");
  const int in_dim = layer.in_dim();
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (int o = 0; o < layer.out_dim(); ++o) {
    const double g = grad_out[o];
    grad_bias.data[o] += g;
    if (g == 0.0) continue;
    double* gw = grad_weight.data.data() + static_cast<std::size_t>(o) * in_dim;
    const double* w = layer.weight.data.data() + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) gw[i] += g * input[i];
    if (!grad_input.empty())
      for (int i = 0; i < in_dim; ++i) grad_input[i] += g * w[i];
  }
}

LinearGrads fc_backward(const Linear& layer, std::span<const double> input,
                        std::span<const double> grad_out) {
  LinearGrads g{std::vector<double>(input.size()), Tensor(layer.weight.dims),
                Tensor(layer.bias.dims)};
  fc_backward_accumulate(layer, input, grad_out, g.input, g.weight, g.bias);
  return g;
}

// ---------------------------------------------------------------------------
// Conv1x1

Conv1x1::Conv1x1(int in_channels, int out_channels)
    : in_channels_(in_channels), out_channels_(out_channels) {
  require(in_channels >= 1 && out_channels >= 1, "conv1x1 channel counts must be >= 1");
  weight = Tensor({out_channels, in_channels});
  bias = Tensor({out_channels});
}

FeatureCube conv1x1_forward(const Conv1x1& layer, const FeatureCube& input) {
  require(input.channels() == layer.in_channels(),
          "conv1x1: channel mismatch, layer expects " + std::to_string(layer.in_channels()) +
              ", input has " + std::to_string(input.channels()));
  const CubeShape in = input.shape();
  const std::size_t vol = in.volume();
  FeatureCube out({layer.out_channels(), in.depth, in.height, in.width});
  std::vector<double> acc(vol);
  for (int o = 0; o < layer.out_channels(); ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* w = layer.weight.data.data() + static_cast<std::size_t>(o) * in.channels;
    for (int c = 0; c < in.channels; ++c) {
      const double wv = w[c];
      const double* x = input.data().data() + static_cast<std::size_t>(c) * vol;
      for (std::size_t v = 0; v < vol; ++v) acc[v] += wv * x[v];
    }
    double* dst = out.data().data() + static_cast<std::size_t>(o) * vol;
    for (std::size_t v = 0; v < vol; ++v) dst[v] = acc[v] + layer.bias.data[o];
  }
  return out;
}

void conv1x1_backward_accumulate(const Conv1x1& layer, const FeatureCube& input,
                                 const FeatureCube& grad_out, FeatureCube* grad_input,
                                 Tensor& grad_weight, Tensor& grad_bias) {
  const CubeShape in = input.shape();
  require(in.channels == layer.in_channels(), "conv1x1_backward: channel mismatch");
  require(grad_out.shape() ==
              CubeShape{layer.out_channels(), in.depth, in.height, in.width},
          "conv1x1_backward: grad_out dims mismatch");
  const std::size_t vol = in.volume();
  if (grad_input != nullptr) {
    if (grad_input->shape() != in) *grad_input = FeatureCube(in);
    else grad_input->fill(0.0);
  }
  for (int o = 0; o < layer.out_channels(); ++o) {
    const double* g = grad_out.data().data() + static_cast<std::size_t>(o) * vol;
    double bsum = 0.0;
    for (std::size_t v = 0; v < vol; ++v) bsum += g[v];
    grad_bias.data[o] += bsum;
    const double* w = layer.weight.data.data() + static_cast<std::size_t>(o) * in.channels;
    double* gw = grad_weight.data.data() + static_cast<std::size_t>(o) * in.channels;
    for (int c = 0; c < in.channels; ++c) {
      const double* x = input.data().data() + static_cast<std::size_t>(c) * vol;
      double s = 0.0;
      for (std::size_t v = 0; v < vol; ++v) s += g[v] * x[v];
      gw[c] += s;
      if (grad_input != nullptr) {
        double* gi = grad_input->data().data() + static_cast<std::size_t>(c) * vol;
        const double wv = w[c];
        for (std::size_t v = 0; v < vol; ++v) gi[v] += wv * g[v];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise

std::vector<double> relu_forward(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

std::vector<double> relu_backward(std::span<const double> x, std::span<const double> grad_out) {
  require(x.size() == grad_out.size(), "relu_backward: shape mismatch");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

void relu_inplace(FeatureCube& cube) {
  for (double& v : cube.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const FeatureCube& output, FeatureCube& grad) {
  require(output.shape() == grad.shape(), "relu_backward: shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output[i] > 0.0)) grad[i] = 0.0;
}

std::vector<double> l2norm_forward(std::span<const double> x) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  std::vector<double> y(x.size(), 0.0);
  if (ss == 0.0) return y;
  const double inv = 1.0 / std::sqrt(ss);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv;
  return y;
}

std::vector<double> l2norm_backward(std::span<const double> x, std::span<const double> grad_out) {
  require(x.size() == grad_out.size(), "l2norm_backward: shape mismatch");
  double ss = 0.0;
  for (double v : x) ss += v * v;
  std::vector<double> g(x.size(), 0.0);
  if (ss == 0.0) return g;
  const double norm = std::sqrt(ss);
  // d(x/|x|) = (I - y y^T) / |x|
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * grad_out[i];
  dot /= norm;
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = (grad_out[i] - (x[i] / norm) * dot) / norm;
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= s;
  return p;
}

}  // namespace tcnn
