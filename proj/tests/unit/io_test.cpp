#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support/tiny_model.hpp"
#include "tcnn/config.hpp"
#include "tcnn/formats.hpp"
#include "tcnn/tensor_io.hpp"

namespace tcnn {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("tcnn_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<VideoAnnotation> sample_annotations() {
  VideoAnnotation a;
  a.video_id = "a";
  a.frames = {{}, {{1, {1.5, 2.25, 10.0, 12.125}}}, {{2, {0, 0, 3, 4}}, {1, {5, 5, 9, 9}}}};
  VideoAnnotation b;
  b.video_id = "b";
  b.frames = {{}, {}};
  return {a, b};
}

TEST(Annotations, RoundTripIsByteIdentical) {
  const std::string text = format_annotations(sample_annotations());
  const auto parsed = parse_annotations(text);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0].frames, sample_annotations()[0].frames);
  EXPECT_EQ(parsed[1].num_frames(), 2);
  EXPECT_EQ(format_annotations(parsed), text);
}

TEST(Annotations, RejectsMalformedLines) {
  EXPECT_THROW(parse_annotations("a 0 1 0 0 1\n"), FormatError);
  EXPECT_THROW(parse_annotations("a 1 -1\n"), FormatError);  // frames start at 0
  EXPECT_THROW(parse_annotations("a 0 1 5 5 1 1\n"), FormatError);  // x2 < x1
  EXPECT_THROW(parse_annotations("a 0 x 0 0 1 1\n"), FormatError);
}

TEST(Anchors, RoundTripIsByteIdentical) {
  AnchorSet s;
  s.anchors = {{0.25, 0.5}, {0.125, 0.375}};
  const std::string text = format_anchors(s);
  EXPECT_EQ(text, "0.250000 0.500000\n0.125000 0.375000\n");
  EXPECT_EQ(format_anchors(parse_anchors(text)), text);
  EXPECT_THROW(parse_anchors("0.5\n"), FormatError);
  EXPECT_THROW(parse_anchors(""), FormatError);
}

TEST(Detections, SortedAndRoundTrip) {
  std::vector<Detection> d(3);
  d[0] = {"b", 1, 0.25, {{0, {0, 0, 1, 1}}}};
  d[1] = {"a", 2, 0.5, {{3, {1, 2, 3, 4}}, {4, {1, 2, 3, 5}}}};
  d[2] = {"b", 2, 0.75, {{1, {0, 0, 2, 2}}}};
  const std::string text = format_detections(d);
  const auto parsed = parse_detections(text);
  ASSERT_EQ(parsed.size(), 3u);
  EXPECT_EQ(parsed[0].video_id, "a");
  EXPECT_EQ(parsed[1].confidence, 0.75);
  EXPECT_EQ(parsed[2].confidence, 0.25);
  EXPECT_EQ(parsed[0].track.size(), 2u);
  EXPECT_EQ(format_detections(parsed), text);
  EXPECT_THROW(parse_detections("a 1 0.5 2\n0 0 0 1 1\n"), FormatError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  const auto videos = generate(testing::tiny_spec(), 0, 3);
  save_dataset(dir.path(), videos);
  const auto loaded = load_dataset(dir.path());
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].video.id, videos[i].video.id);
    EXPECT_EQ(loaded[i].annotation.frames.size(), videos[i].annotation.frames.size());
    ASSERT_EQ(loaded[i].video.frames.shape(), videos[i].video.frames.shape());
    for (std::size_t j = 0; j < videos[i].video.frames.size(); ++j)
      ASSERT_NEAR(loaded[i].video.frames.values()[j], videos[i].video.frames.values()[j], 1e-6);
  }
  save_dataset(dir.path() / "again", loaded);
  EXPECT_EQ(read_file(dir.path() / "annotations.txt"), read_file(dir.path() / "again" / "annotations.txt"));
}

TEST(KeyValues, ParseAndFormat) {
  const KeyValues kv = parse_key_values("# comment\n a = 1 \nb=two # trailing\n\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);
  EXPECT_THROW(parse_key_values("a=1\na=2\n"), FormatError);
  EXPECT_THROW(parse_key_values("novalue\n"), FormatError);
}

TEST(LossCsv, RoundTripIsExact) {
  std::vector<LossRecord> losses{{Stage::kInitTpn, 0, 1e-3, 0.6931471805599453, 0.1, 0.0},
                                 {Stage::kFinalizeRecog, 7, 1e-4, 0.0, 0.0, 1.0 / 3.0}};
  const std::string text = format_loss_csv(losses);
  const auto parsed = parse_loss_csv(text);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0].actionness, losses[0].actionness);
  EXPECT_EQ(parsed[1].classification, losses[1].classification);
  EXPECT_EQ(parsed[1].stage, Stage::kFinalizeRecog);
  EXPECT_EQ(format_loss_csv(parsed), text);
}

TEST(MapCsv, RowsPerClassAndMean) {
  MapResult r;
  r.classes = {{1, 0.5, 3, {}}, {2, 1.0, 1, {}}};
  r.mean_ap = 0.75;
  EXPECT_EQ(format_map_csv("frame_map", 0.5, r),
            "frame_map,0.500000,1,0.500000,3\n"
            "frame_map,0.500000,2,1.000000,1\n"
            "frame_map,0.500000,mean,0.750000,\n");
}

TEST(PipelineConfig, DefaultsAndDerivedBatches) {
  const PipelineConfig c = parse_pipeline_config({});
  EXPECT_EQ(c.scale, Scale::kDesk);
  EXPECT_EQ(c.train.lr_drop_batches, 300);
  EXPECT_EQ(c.train.total_batches, 500);
  EXPECT_EQ(c.train.lr_initial, 1e-2);
  EXPECT_EQ(c.train.lr_after, 1e-3);
  EXPECT_EQ(c.train.update_tpn_factor, 3);
  EXPECT_EQ(c.options.max_grad_norm, 10.0);
  EXPECT_EQ(c.synth.height, 60);
  EXPECT_EQ(c.synth.width, 80);
  const PipelineConfig full = parse_pipeline_config({{"batch_scale", "1"}});
  EXPECT_EQ(full.train.lr_drop_batches, 30000);
  EXPECT_EQ(full.train.total_batches, 50000);
}

TEST(PipelineConfig, RoundTrip) {
  const PipelineConfig c = parse_pipeline_config(
      {{"seed", "42"}, {"classes", "5"}, {"alpha", "0.2,0.5"}, {"mining", "true"}, {"k", "10"},
       {"lr_initial", "0.01"}, {"lr_after", "0.001"}, {"scale", "paper_300x400"}, {"data", "d"}});
  const KeyValues kv = pipeline_config_values(c);
  const PipelineConfig again = parse_pipeline_config(kv);
  EXPECT_EQ(pipeline_config_values(again), kv);
  EXPECT_EQ(again.seed, 42u);
  EXPECT_EQ(again.options.seed, 42u);
  EXPECT_EQ(again.synth.num_classes, 5);
  EXPECT_EQ(again.synth.height, 300);
  EXPECT_EQ(again.alphas, (std::vector<double>{0.2, 0.5}));
  EXPECT_TRUE(again.options.mining);
  EXPECT_EQ(again.options.proposals.k, 10u);
}

TEST(PipelineConfig, RejectsBadValues) {
  EXPECT_THROW(parse_pipeline_config({{"bogus", "1"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"seed", "-1"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"classes", "two"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"alpha", "0"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"scale", "huge"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"lr_after", "1"}}), std::invalid_argument);
  EXPECT_THROW(parse_pipeline_config({{"mining", "maybe"}}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
  TempDir dir;
  const SynthSpec spec = testing::tiny_spec();
  const Model m = testing::tiny_model(generate(spec, 0, 4), spec);
  save_checkpoint(m, dir.path() / "ck");
  const Model back = load_checkpoint(dir.path() / "ck");
  const auto a = m.named_params(), b = back.named_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    ASSERT_EQ(a[i].second->dims, b[i].second->dims);
    for (std::size_t j = 0; j < a[i].second->data.size(); ++j)
      EXPECT_EQ(static_cast<float>(a[i].second->data[j]), b[i].second->data[j]);
  }
  EXPECT_EQ(back.anchors.anchors, m.anchors.anchors);
  EXPECT_EQ(back.config.frame_height, 32);
  EXPECT_EQ(back.config.backbone.channels, m.config.backbone.channels);

  // Saving the reloaded model reproduces the files byte for byte.
  save_checkpoint(back, dir.path() / "ck2");
  for (const auto& e : fs::directory_iterator(dir.path() / "ck"))
    EXPECT_EQ(read_file(e.path()), read_file(dir.path() / "ck2" / e.path().filename()))
        << e.path().filename();
}

TEST(Checkpoint, RejectsCorruptManifest) {
  TempDir dir;
  const SynthSpec spec = testing::tiny_spec();
  save_checkpoint(testing::tiny_model(generate(spec, 0, 4), spec), dir.path());
  std::string manifest = read_file(dir.path() / "manifest.txt");
  write_file_atomic(dir.path() / "manifest.txt", "tcnn-checkpoint 2\n" + manifest.substr(manifest.find('\n') + 1));
  EXPECT_THROW(load_checkpoint(dir.path()), FormatError);
  write_file_atomic(dir.path() / "manifest.txt", manifest + "mystery 1\n");
  EXPECT_THROW(load_checkpoint(dir.path()), FormatError);
}

}  // namespace
}  // namespace tcnn
