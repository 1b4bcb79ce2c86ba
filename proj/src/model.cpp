#include "tcnn/model.hpp"

#include <cstdio>
#include <sstream>

#include "tcnn/tensor_io.hpp"

namespace tcnn {

namespace fs = std::filesystem;

std::string to_string(Scale s) { return s == Scale::kPaper ? "paper" : "desk"; }

Scale parse_scale(const std::string& s) {
  if (s == "paper" || s == "paper_300x400") return Scale::kPaper;
  if (s == "desk" || s == "desk_60x80") return Scale::kDesk;
  throw std::invalid_argument("unknown scale '" + s + "' (expected paper or desk)");
}

ModelConfig model_preset(Scale scale, int num_classes, SkipSource skip) {
  ModelConfig c;
  c.scale = scale;
  c.tpn.skip = skip;
  c.recognition.num_classes = num_classes;
  if (scale == Scale::kPaper) {
    c.frame_height = 300;
    c.frame_width = 400;
    c.backbone = paper_backbone();
    c.tpn.reduce_dim = 8192;
    c.tpn.fc_dim = 4096;
    c.recognition.fc_dim = 4096;
  } else {
    c.frame_height = 60;
    c.frame_width = 80;
    c.backbone = {3, {8, 16, 32, 32, 64, 64, 64, 64}};
    c.tpn.reduce_dim = 256;
    c.tpn.fc_dim = 256;
    c.recognition.fc_dim = 256;
  }
  return c;
}

Model::Model(const ModelConfig& cfg, const AnchorSet& anchor_set)
    : config(cfg), anchors(anchor_set), tpn_backbone(cfg.backbone), recog_backbone(cfg.backbone) {
  if (anchors.size() == 0) throw std::invalid_argument("Model: empty anchor set");
  const int c5 = cfg.backbone.channels[kConv5b];
  tpn = TpnHead(cfg.tpn, c5, tpn_backbone.skip_channels(cfg.tpn.skip),
                static_cast<int>(anchors.size()));
  recognition = RecognitionHead(cfg.recognition, c5);
}

void Model::initialize(std::uint64_t seed) {
  const Rng root(seed);
  Rng rb = root.substream("init/backbone"), rt = root.substream("init/tpn"),
      rr = root.substream("init/recognition");
  tpn_backbone.initialize(rb);
  recog_backbone = tpn_backbone;
  tpn.initialize(rt);
  recognition.initialize(rr);
}

FrameGeometry Model::geometry() const {
  const BackboneShapes s = backbone_shapes(tpn_backbone, clip_shape());
  return {config.frame_height, config.frame_width, s.conv[kConv5b].height, s.conv[kConv5b].width};
}

CubeShape Model::clip_shape() const {
  return {config.backbone.in_channels, kClipLength, config.frame_height, config.frame_width};
}

namespace {

template <class M, class Out>
void collect(M& m, Out& out) {
  auto add = [&](const std::string& prefix, auto&& params, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back(prefix + names[i], params[i]);
  };
  add("tpn_backbone.", m.tpn_backbone.params(), m.tpn_backbone.param_names());
  add("", m.tpn.params(), m.tpn.param_names());
  add("recog_backbone.", m.recog_backbone.params(), m.recog_backbone.param_names());
  add("", m.recognition.params(), m.recognition.param_names());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> Model::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect(*this, out);
  return out;
}

void save_checkpoint(const Model& model, const fs::path& dir) {
  fs::create_directories(dir);
  const ModelConfig& c = model.config;
  std::ostringstream m;
  m << "tcnn-checkpoint 1\n";
  m << "scale " << to_string(c.scale) << "\n";
  m << "frame " << c.frame_height << " " << c.frame_width << "\n";
  m << "in_channels " << c.backbone.in_channels << "\n";
  m << "channels";
  for (int ch : c.backbone.channels) m << " " << ch;
  m << "\n";
  m << "skip " << to_string(c.tpn.skip) << "\n";
  m << "skip_spec " << c.tpn.skip_spec.depth << " " << c.tpn.skip_spec.height << " "
    << c.tpn.skip_spec.width << "\n";
  m << "conv5_spec " << c.tpn.conv5_spec.depth << " " << c.tpn.conv5_spec.height << " "
    << c.tpn.conv5_spec.width << "\n";
  m << "reduce_dim " << c.tpn.reduce_dim << "\n";
  m << "fc_dim " << c.tpn.fc_dim << "\n";
  m << "actionness_threshold " << fmt(c.tpn.actionness_threshold) << "\n";
  m << "positive_iou " << fmt(c.tpn.positive_iou) << "\n";
  m << "classes " << c.recognition.num_classes << "\n";
  m << "recog_spec " << c.recognition.spec.depth << " " << c.recognition.spec.height << " "
    << c.recognition.spec.width << "\n";
  m << "recog_fc_dim " << c.recognition.fc_dim << "\n";
  m << "dropout " << fmt(c.recognition.dropout) << "\n";
  m << "anchors " << model.anchors.size() << "\n";
  for (const AnchorBox& a : model.anchors.anchors)
    m << "anchor " << fmt(a.width) << " " << fmt(a.height) << "\n";
  for (const auto& [name, t] : model.named_params()) {
    m << "tensor " << name;
    for (int d : t->dims) m << " " << d;
    m << "\n";
    write_file_atomic(dir / (name + ".tcnt"), encode_tensor(t->dims, t->data));
  }
  write_file_atomic(dir / "manifest.txt", m.str());
}

Model load_checkpoint(const fs::path& dir) {
  std::istringstream in(read_file(dir / "manifest.txt"));
  std::string line;
  if (!std::getline(in, line) || line != "tcnn-checkpoint 1")
    throw FormatError("checkpoint manifest: bad header in " + (dir / "manifest.txt").string());
  ModelConfig c;
  AnchorSet anchors;
  std::vector<std::pair<std::string, std::vector<int>>> tensors;
  auto spec = [](std::istream& s, ToIOutputSpec& o) { s >> o.depth >> o.height >> o.width; };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    std::string key;
    s >> key;
    if (key == "scale") {
      std::string v;
      s >> v;
      c.scale = parse_scale(v);
    } else if (key == "frame") {
      s >> c.frame_height >> c.frame_width;
    } else if (key == "in_channels") {
      s >> c.backbone.in_channels;
    } else if (key == "channels") {
      for (int& ch : c.backbone.channels) s >> ch;
    } else if (key == "skip") {
      std::string v;
      s >> v;
      c.tpn.skip = parse_skip_source(v);
    } else if (key == "skip_spec") {
      spec(s, c.tpn.skip_spec);
    } else if (key == "conv5_spec") {
      spec(s, c.tpn.conv5_spec);
    } else if (key == "reduce_dim") {
      s >> c.tpn.reduce_dim;
    } else if (key == "fc_dim") {
      s >> c.tpn.fc_dim;
    } else if (key == "actionness_threshold") {
      s >> c.tpn.actionness_threshold;
    } else if (key == "positive_iou") {
      s >> c.tpn.positive_iou;
    } else if (key == "classes") {
      s >> c.recognition.num_classes;
    } else if (key == "recog_spec") {
      spec(s, c.recognition.spec);
    } else if (key == "recog_fc_dim") {
      s >> c.recognition.fc_dim;
    } else if (key == "dropout") {
      s >> c.recognition.dropout;
    } else if (key == "anchors") {
      // count only; the anchor lines follow
    } else if (key == "anchor") {
      AnchorBox a;
      s >> a.width >> a.height;
      anchors.anchors.push_back(a);
    } else if (key == "tensor") {
      std::string name;
      s >> name;
      std::vector<int> dims;
      int d = 0;
      while (s >> d) dims.push_back(d);
      tensors.emplace_back(name, dims);
      continue;
    } else {
      throw FormatError("checkpoint manifest: unknown key '" + key + "'");
    }
    if (s.fail()) throw FormatError("checkpoint manifest: malformed line '" + line + "'");
  }
  Model model(c, anchors);
  auto params = model.named_params();
  if (params.size() != tensors.size())
    throw FormatError("checkpoint manifest: tensor count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != tensors[i].first || params[i].second->dims != tensors[i].second)
      throw FormatError("checkpoint manifest: unexpected tensor '" + tensors[i].first + "'");
    Tensor t = read_tensor(dir / (tensors[i].first + ".tcnt"));
    if (t.dims != params[i].second->dims)
      throw FormatError("checkpoint: tensor file shape differs from manifest for " +
                        tensors[i].first);
    params[i].second->data = std::move(t.data);
  }
  return model;
}

}  // namespace tcnn
