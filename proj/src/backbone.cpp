#include "tcnn/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace tcnn {

const std::array<const char*, 8> kConvNames = {"conv1",  "conv2",  "conv3a", "conv3b",
                                               "conv4a", "conv4b", "conv5a", "conv5b"};
const std::array<const char*, 4> kPoolNames = {"max-pool1", "max-pool2", "max-pool3",
                                               "max-pool4"};

namespace {

// Pool that follows each conv, or -1.
constexpr std::array<int, 8> kPoolAfter = {0, 1, -1, 2, -1, 3, -1, -1};

int conv_index_for(SkipSource s) {
  switch (s) {
    case SkipSource::kConv1: return kConv1;
    case SkipSource::kConv2: return kConv2;
    case SkipSource::kConv3: return kConv3b;
    case SkipSource::kConv4: return kConv4b;
    case SkipSource::kNone: break;
  }
  return -1;
}

}  // namespace

std::string to_string(SkipSource s) {
  switch (s) {
    case SkipSource::kNone: return "none";
    case SkipSource::kConv1: return "conv1";
    case SkipSource::kConv2: return "conv2";
    case SkipSource::kConv3: return "conv3";
    case SkipSource::kConv4: return "conv4";
  }
  return "none";
}

SkipSource parse_skip_source(const std::string& s) {
  if (s == "none" || s == "conv5") return SkipSource::kNone;
  if (s == "conv1") return SkipSource::kConv1;
  if (s == "conv2") return SkipSource::kConv2;
  if (s == "conv3") return SkipSource::kConv3;
  if (s == "conv4") return SkipSource::kConv4;
  throw std::invalid_argument("unknown skip source '" + s + "' (expected none, conv1..conv4)");
}

BackboneConfig paper_backbone() { return {3, {64, 128, 256, 256, 512, 512, 512, 512}}; }

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
  int in = config.in_channels;
  for (int i = 0; i < 8; ++i) {
    convs[i] = Conv3D(in, config.channels[i], {3, 3, 3}, {1, 1, 1});
    in = config.channels[i];
  }
  pools = {MaxPool3D{{1, 2, 2}, true}, MaxPool3D{{2, 2, 2}, true}, MaxPool3D{{2, 2, 2}, true},
           MaxPool3D{{2, 2, 2}, true}};
}

void Backbone::initialize(Rng& rng) {
  for (int i = 0; i < 8; ++i) {
    Rng r = rng.substream(kConvNames[i]);
    const double fan_in = static_cast<double>(convs[i].in_channels()) * 27.0;
    const double stddev = std::sqrt(2.0 / fan_in);
    for (double& w : convs[i].weight.data) w = stddev * r.normal();
    convs[i].bias.zero();
  }
}

std::vector<Tensor*> Backbone::params() {
  std::vector<Tensor*> p;
  for (Conv3D& c : convs) {
    p.push_back(&c.weight);
    p.push_back(&c.bias);
  }
  return p;
}

std::vector<const Tensor*> Backbone::params() const {
  std::vector<const Tensor*> p;
  for (const Conv3D& c : convs) {
    p.push_back(&c.weight);
    p.push_back(&c.bias);
  }
  return p;
}

std::vector<std::string> Backbone::param_names() const {
  std::vector<std::string> n;
  for (const char* c : kConvNames) {
    n.push_back(std::string(c) + ".weight");
    n.push_back(std::string(c) + ".bias");
  }
  return n;
}

int Backbone::skip_channels(SkipSource s) const {
  const int i = conv_index_for(s);
  return i < 0 ? 0 : config_.channels[i];
}

bool same_parameters(const Backbone& a, const Backbone& b) {
  const auto pa = a.params();
  const auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i] == *pb[i])) return false;
  return true;
}

const FeatureCube& BackboneTrace::skip(SkipSource s) const {
  const int i = conv_index_for(s);
  if (i < 0) throw std::invalid_argument("no skip cube for skip source 'none'");
  return conv[i];
}

BackboneTrace backbone_forward(const Backbone& net, const FeatureCube& clip) {
  BackboneTrace t;
  t.input = clip;
  const FeatureCube* x = &t.input;
  for (int i = 0; i < 8; ++i) {
    t.conv[i] = conv3d_forward(net.convs[i], *x);
    relu_inplace(t.conv[i]);
    x = &t.conv[i];
    if (const int p = kPoolAfter[i]; p >= 0) {
      PoolResult r = maxpool3d_forward(net.pools[p], t.conv[i]);
      t.pooled[p] = std::move(r.output);
      t.pool_argmax[p] = std::move(r.argmax);
      x = &t.pooled[p];
    }
  }
  return t;
}

BackboneShapes backbone_shapes(const Backbone& net, const CubeShape& input) {
  BackboneShapes s;
  CubeShape x = input;
  for (int i = 0; i < 8; ++i) {
    s.conv[i] = net.convs[i].output_shape(x);
    x = s.conv[i];
    if (const int p = kPoolAfter[i]; p >= 0) {
      s.pooled[p] = net.pools[p].output_shape(x);
      x = s.pooled[p];
    }
  }
  return s;
}

BackboneFeatures backbone_features(const Backbone& net, const FeatureCube& clip, SkipSource skip) {
  BackboneFeatures out;
  const int skip_index = conv_index_for(skip);
  FeatureCube x = clip;
  for (int i = 0; i < 8; ++i) {
    x = conv3d_forward(net.convs[i], x);
    relu_inplace(x);
    if (i == skip_index) out.skip = x;
    if (const int p = kPoolAfter[i]; p >= 0) x = maxpool3d_forward(net.pools[p], x).output;
  }
  out.conv5 = std::move(x);
  return out;
}

void backbone_backward(const Backbone& net, const BackboneTrace& trace,
                       const FeatureCube& grad_conv5, SkipSource skip,
                       const FeatureCube* grad_skip, Backbone& grads) {
  const int skip_index = grad_skip != nullptr ? conv_index_for(skip) : -1;
  FeatureCube g = grad_conv5;
  for (int i = 7; i >= 0; --i) {
    // g is the gradient w.r.t. the post-ReLU output of conv i.
    if (i == skip_index) {
      if (!(grad_skip->shape() == g.shape())) throw ShapeError("backbone_backward: skip grad dims");
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += (*grad_skip)[j];
    }
    relu_backward_inplace(trace.conv[i], g);
    const FeatureCube* input = &trace.input;
    if (i > 0) {
      const int prev_pool = kPoolAfter[i - 1];
      input = prev_pool >= 0 ? &trace.pooled[prev_pool] : &trace.conv[i - 1];
    }
    FeatureCube gin;
    conv3d_backward_accumulate(net.convs[i], *input, g, i > 0 ? &gin : nullptr,
                               grads.convs[i].weight, grads.convs[i].bias);
    if (i == 0) break;
    const int prev_pool = kPoolAfter[i - 1];
    g = prev_pool >= 0 ? maxpool3d_backward(trace.pool_argmax[prev_pool], gin) : std::move(gin);
  }
}

}  // namespace tcnn
