#include "tcnn/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "tcnn/tensor_io.hpp"

namespace tcnn {

namespace {

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument("config: '" + key + "' needs a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument("config: '" + key + "' needs an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: '" + key + "' needs true or false, got '" + v + "'");
}

std::string real_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
Field int_field(T PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*m = static_cast<T>(to_int(k, v));
          },
          [m](const PipelineConfig& c) { return std::to_string(c.*m); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"data", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.data = v; },
                [](const PipelineConfig& c) { return c.data.string(); }}},
      {"anchors", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.anchors = v; },
                   [](const PipelineConfig& c) { return c.anchors.string(); }}},
      {"checkpoints",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.checkpoints = v; },
        [](const PipelineConfig& c) { return c.checkpoints.string(); }}},
      {"output", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.output = v; },
                  [](const PipelineConfig& c) { return c.output.string(); }}},
      {"scale", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.scale = parse_scale(v); },
                 [](const PipelineConfig& c) { return to_string(c.scale); }}},
      {"skip_source",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.skip_source = parse_skip_source(v); },
        [](const PipelineConfig& c) { return to_string(c.skip_source); }}},
      {"classes", int_field(&PipelineConfig::num_classes)},
      {"anchor_count", int_field(&PipelineConfig::anchor_count)},
      {"seed", {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                  const long long s = to_int(k, v);
                  if (s < 0) throw std::invalid_argument("config: seed must be >= 0");
                  c.seed = static_cast<std::uint64_t>(s);
                },
                [](const PipelineConfig& c) { return std::to_string(c.seed); }}},
      {"threads", int_field(&PipelineConfig::threads)},
      {"actionness_threshold",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.detect.actionness_threshold = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.detect.actionness_threshold); }}},
      {"proposals_per_clip",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.detect.proposals_per_clip = static_cast<std::size_t>(to_int(k, v));
        },
        [](const PipelineConfig& c) { return std::to_string(c.detect.proposals_per_clip); }}},
      {"k", {[](PipelineConfig& c, const std::string& k, const std::string& v) {
               c.detect.k = static_cast<std::size_t>(to_int(k, v));
             },
             [](const PipelineConfig& c) { return std::to_string(c.detect.k); }}},
      {"nms_threshold",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.detect.nms_threshold = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.detect.nms_threshold); }}},
      {"alpha", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.alphas = parse_real_list(v); },
                 [](const PipelineConfig& c) {
                   std::string s;
                   for (double a : c.alphas) s += (s.empty() ? "" : ",") + real_str(a);
                   return s;
                 }}},
      {"batch_scale",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.batch_scale = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.batch_scale); }}},
      {"lr_initial",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.lr_initial = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.train.lr_initial); }}},
      {"lr_after",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.lr_after = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.train.lr_after); }}},
      {"lr_drop_batches",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.lr_drop_batches = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.train.lr_drop_batches); }}},
      {"total_batches",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.total_batches = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.train.total_batches); }}},
      {"update_tpn_factor",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.update_tpn_factor = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.train.update_tpn_factor); }}},
      {"clips_per_batch",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.clips_per_batch = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.train.clips_per_batch); }}},
      {"momentum",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.options.momentum = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.options.momentum); }}},
      {"max_grad_norm",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.options.max_grad_norm = to_real(k, v);
          if (c.options.max_grad_norm < 0.0) throw std::invalid_argument(k + " must be >= 0");
        },
        [](const PipelineConfig& c) { return real_str(c.options.max_grad_norm); }}},
      {"anchors_per_clip",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.options.anchors_per_clip = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.options.anchors_per_clip); }}},
      {"sequences_per_video",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.options.sequences_per_video = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.options.sequences_per_video); }}},
      {"mining", {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.options.mining = to_bool(k, v); },
                  [](const PipelineConfig& c) { return std::string(c.options.mining ? "true" : "false"); }}},
      {"mining_pool_size",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.options.mining_pool_size = static_cast<std::size_t>(to_int(k, v));
        },
        [](const PipelineConfig& c) { return std::to_string(c.options.mining_pool_size); }}},
      {"mining_refresh",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.options.mining_refresh = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.options.mining_refresh); }}},
      {"synth_videos", int_field(&PipelineConfig::synth_videos)},
      {"synth_first", int_field(&PipelineConfig::synth_first)},
      {"frames_per_video",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.synth.frames_per_video = static_cast<int>(to_int(k, v)); },
        [](const PipelineConfig& c) { return std::to_string(c.synth.frames_per_video); }}},
      {"noise", {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.synth.noise = to_real(k, v); },
                 [](const PipelineConfig& c) { return real_str(c.synth.noise); }}},
      {"distractor_rate",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.synth.distractor_rate = to_real(k, v); },
        [](const PipelineConfig& c) { return real_str(c.synth.distractor_rate); }}},
      {"untrimmed",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.synth.untrimmed = to_bool(k, v); },
        [](const PipelineConfig& c) { return std::string(c.synth.untrimmed ? "true" : "false"); }}},
  };
  return f;
}

}  // namespace

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw std::invalid_argument("empty entry in list '" + text + "'");
    out.push_back(to_real("list", item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

PipelineConfig parse_pipeline_config(const KeyValues& kv) {
  PipelineConfig c;
  for (const auto& [k, v] : kv) {
    const auto it = fields().find(k);
    if (it == fields().end()) throw std::invalid_argument("config: unknown key '" + k + "'");
    it->second.set(c, k, v);
  }
  if (!kv.contains("lr_drop_batches"))
    c.train.lr_drop_batches = static_cast<int>(std::lround(30000.0 * c.batch_scale));
  if (!kv.contains("total_batches"))
    c.train.total_batches = static_cast<int>(std::lround(50000.0 * c.batch_scale));
  c.train.validate();
  if (c.num_classes < 1) throw std::invalid_argument("config: classes must be >= 1");
  if (c.anchor_count < 1) throw std::invalid_argument("config: anchor_count must be >= 1");
  if (c.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  for (double a : c.alphas)
    if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("config: alpha values must lie in (0, 1]");
  const ModelConfig mc = model_preset(c.scale, c.num_classes, c.skip_source);
  c.synth.height = mc.frame_height;
  c.synth.width = mc.frame_width;
  c.synth.num_classes = c.num_classes;
  c.synth.seed = c.seed;
  c.options.seed = c.seed;
  c.options.threads = c.threads;
  c.options.proposals = c.detect;
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(parse_key_values(read_file(path)));
}

KeyValues pipeline_config_values(const PipelineConfig& config) {
  KeyValues kv;
  for (const auto& [k, f] : fields()) kv[k] = f.get(config);
  return kv;
}

}  // namespace tcnn
