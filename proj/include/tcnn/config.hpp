#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tcnn/formats.hpp"
#include "tcnn/model.hpp"
#include "tcnn/pipeline.hpp"
#include "tcnn/synth.hpp"
#include "tcnn/training.hpp"

namespace tcnn {

/// Settings shared by the command-line subcommands. Loaded from key=value
/// text; every key is optional and unknown keys are rejected.
struct PipelineConfig {
  std::filesystem::path data;
  std::filesystem::path anchors;
  std::filesystem::path checkpoints;
  std::filesystem::path output;

  Scale scale = Scale::kDesk;
  SkipSource skip_source = SkipSource::kConv2;
  int num_classes = 3;
  int anchor_count = 12;
  std::uint64_t seed = 0;
  int threads = 1;

  DetectConfig detect;
  std::vector<double> alphas{0.5};

  /// Batch counts derive from 30000 (drop) and 50000 (end) times this factor
  /// unless lr_drop_batches / total_batches are given.
  double batch_scale = 0.01;
  /// Desk-sized defaults. TrainConfig's own (lr 1e-3 / 1e-4, factor 1) suit the paper preset.
  TrainConfig train{.lr_initial = 1e-2, .lr_after = 1e-3, .update_tpn_factor = 3};
  TrainOptions options;

  SynthSpec synth;
  int synth_videos = 200;
  int synth_first = 0;
};

PipelineConfig parse_pipeline_config(const KeyValues& kv);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Every key with its current value; parse(format(c)) == c.
KeyValues pipeline_config_values(const PipelineConfig& config);

std::vector<double> parse_real_list(const std::string& text);

}  // namespace tcnn
