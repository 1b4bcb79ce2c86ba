// tcnn: synthetic data, anchors, training, detection, evaluation and
// gradient checks from the command line.
//
// Exit codes: 0 success, 1 failed check or runtime failure, 2 usage or
// configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "tcnn/anchors.hpp"
#include "tcnn/config.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/formats.hpp"
#include "tcnn/gradcheck.hpp"
#include "tcnn/model.hpp"
#include "tcnn/pipeline.hpp"
#include "tcnn/synth.hpp"
#include "tcnn/tensor_io.hpp"
#include "tcnn/training.hpp"

namespace fs = std::filesystem;
using namespace tcnn;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags shared by every subcommand; set values override the config file.
struct CommonFlags {
  std::string config;
  std::optional<long long> seed;
  std::optional<int> threads;
  std::optional<std::string> scale;
  std::optional<std::string> alpha;
  std::optional<long long> k;
  std::optional<std::string> skip_source;
  std::optional<std::string> data, anchors, checkpoints, output;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "key=value configuration file");
  app->add_option("--seed", f.seed, "run seed");
  app->add_option("--threads", f.threads, "worker threads");
  app->add_option("--scale", f.scale, "network preset: paper or desk");
  app->add_option("--alpha", f.alpha, "comma-separated IoU thresholds");
  app->add_option("--skip-source", f.skip_source, "conv1..conv4 or none");
  app->add_option("--data", f.data, "dataset directory");
  app->add_option("--anchors", f.anchors, "anchor file");
  app->add_option("--checkpoints", f.checkpoints, "checkpoint directory");
  app->add_option("--output", f.output, "output path");
}

PipelineConfig resolve(const CommonFlags& f, const std::string& k_key) {
  KeyValues kv;
  if (!f.config.empty()) kv = parse_key_values(read_file(f.config));
  auto set = [&](const char* key, const auto& v) {
    if (v) {
      std::ostringstream s;
      s << *v;
      kv[key] = s.str();
    }
  };
  set("seed", f.seed);
  set("threads", f.threads);
  set("scale", f.scale);
  set("alpha", f.alpha);
  set("skip_source", f.skip_source);
  set("data", f.data);
  set("anchors", f.anchors);
  set("checkpoints", f.checkpoints);
  set("output", f.output);
  if (!k_key.empty()) set(k_key.c_str(), f.k);
  return parse_pipeline_config(kv);
}

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string("missing ") + what + " path (config key or flag)");
}

int cmd_synth(const PipelineConfig& c) {
  require_path(c.data, "data");
  std::vector<LabeledVideo> videos = generate(c.synth, c.synth_first, c.synth_videos);
  save_dataset(c.data, videos);
  std::cout << "wrote " << videos.size() << " videos to " << c.data.string() << "\n";
  return 0;
}

int cmd_anchors(const PipelineConfig& c) {
  require_path(c.data, "data");
  require_path(c.anchors, "anchors");
  std::vector<AnchorBox> boxes;
  for (const VideoAnnotation& v : parse_annotations(read_file(c.data / "annotations.txt")))
    for (const auto& frame : v.frames)
      for (const FrameLabel& l : frame)
        boxes.push_back({l.box.width() / c.synth.width, l.box.height() / c.synth.height});
  const AnchorSet set = kmeans_anchors(boxes, c.anchor_count, c.seed);
  write_file_atomic(c.anchors, format_anchors(set));
  std::cout << "wrote " << set.size() << " anchors to " << c.anchors.string() << "\n";
  return 0;
}

int cmd_train(const PipelineConfig& c) {
  require_path(c.data, "data");
  require_path(c.anchors, "anchors");
  require_path(c.checkpoints, "checkpoints");
  const std::vector<LabeledVideo> data = load_dataset(c.data);
  Model model(model_preset(c.scale, c.num_classes, c.skip_source),
              parse_anchors(read_file(c.anchors)));
  model.initialize(c.seed);
  const TrainResult r = alternate_train(model, data, c.train, c.options);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
  save_checkpoint(model, c.checkpoints);
  write_file_atomic(c.checkpoints / "loss.csv", format_loss_csv(r.losses));
  std::cout << "trained " << r.losses.size() << " batches; checkpoint in " << c.checkpoints.string()
            << "\n";
  return 0;
}

int cmd_detect(const PipelineConfig& c) {
  require_path(c.data, "data");
  require_path(c.checkpoints, "checkpoints");
  require_path(c.output, "output");
  const Model model = load_checkpoint(c.checkpoints);
  std::vector<Video> videos;
  for (LabeledVideo& v : load_dataset(c.data)) videos.push_back(std::move(v.video));
  const std::vector<Detection> dets = detect_all(model, videos, c.detect, c.threads);
  write_file_atomic(c.output, format_detections(dets));
  std::cout << "wrote " << dets.size() << " detections to " << c.output.string() << "\n";
  return 0;
}

int cmd_eval(const PipelineConfig& c, const std::string& detections) {
  require_path(c.data, "data");
  require_path(c.output, "output");
  if (detections.empty()) throw UsageError("missing --detections");
  const std::vector<Detection> dets = parse_detections(read_file(detections));
  const std::vector<VideoAnnotation> anns = parse_annotations(read_file(c.data / "annotations.txt"));
  fs::create_directories(c.output);
  std::string frame_csv = "metric,alpha,class_id,ap,num_ground_truth\n", video_csv = frame_csv;
  std::string roc_csv = "alpha,auc\n";
  for (double a : c.alphas) {
    const MapResult fm = frame_map(dets, anns, a), vm = video_map(dets, anns, a);
    frame_csv += format_map_csv("frame_map", a, fm);
    video_csv += format_map_csv("video_map", a, vm);
    char line[128];
    std::snprintf(line, sizeof line, "%.6f,%.6f\n", a, roc_auc(dets, anns, a).auc);
    roc_csv += line;
    std::printf("alpha %.2f  frame-mAP %.4f  video-mAP %.4f\n", a, fm.mean_ap, vm.mean_ap);
  }
  write_file_atomic(c.output / "frame_map.csv", frame_csv);
  write_file_atomic(c.output / "video_map.csv", video_csv);
  write_file_atomic(c.output / "roc_auc.csv", roc_csv);
  return 0;
}

int cmd_gradcheck(const PipelineConfig& c, int instances, bool corrupt) {
  GradcheckOptions o;
  o.seed = c.seed;
  o.instances = instances;
  o.corrupt_backward = corrupt;
  bool ok = true;
  for (const GradcheckEntry& e : run_gradcheck(o)) {
    std::printf("%-12s instances=%d max_rel_error=%.3e %s\n", e.layer.c_str(), e.instances,
                e.max_relative_error, e.passed ? "ok" : "FAIL");
    ok = ok && e.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube convolutional network for action detection"};
  app.require_subcommand(1);

  CommonFlags synth_f, anchors_f, train_f, detect_f, eval_f, grad_f;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_f);
  auto* anchors = app.add_subcommand("anchors", "cluster ground-truth boxes into anchors");
  add_common(anchors, anchors_f);
  anchors->add_option("--k", anchors_f.k, "number of anchors");
  auto* train = app.add_subcommand("train", "alternating four-stage training");
  add_common(train, train_f);
  auto* detect = app.add_subcommand("detect", "detect action tubes");
  add_common(detect, detect_f);
  detect->add_option("--k", detect_f.k, "linked sequences per video");
  auto* eval = app.add_subcommand("eval", "score detections");
  add_common(eval, eval_f);
  std::string detections;
  eval->add_option("--detections", detections, "detection file");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad, grad_f);
  int instances = 20;
  bool corrupt = false;
  grad->add_option("--instances", instances, "random instances per layer");
  grad->add_flag("--corrupt-backward", corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(resolve(synth_f, ""));
    if (*anchors) return cmd_anchors(resolve(anchors_f, "anchor_count"));
    if (*train) return cmd_train(resolve(train_f, ""));
    if (*detect) return cmd_detect(resolve(detect_f, "k"));
    if (*eval) return cmd_eval(resolve(eval_f, ""), detections);
    if (*grad) return cmd_gradcheck(resolve(grad_f, ""), instances, corrupt);
  } catch (const InsufficientBoxesError& e) {
    std::cerr << "error: insufficient boxes: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
