#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tcnn/anchors.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/formats.hpp"
#include "tcnn/gradcheck.hpp"
#include "tcnn/linking.hpp"
#include "tcnn/model.hpp"
#include "tcnn/pipeline.hpp"
#include "tcnn/synth.hpp"
#include "tcnn/tensor_io.hpp"
#include "tcnn/toi_pool.hpp"

namespace py = pybind11;
using namespace tcnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoxTuple = std::tuple<double, double, double, double>;

Box2D to_box(const BoxTuple& t) {
  return {std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
}
BoxTuple from_box(const Box2D& b) { return {b.x1, b.y1, b.x2, b.y2}; }

FeatureCube to_cube(const Array& a) {
  if (a.ndim() != 4) throw std::invalid_argument("expected a 4-d array (C, D, H, W)");
  const CubeShape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                    static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3))};
  return FeatureCube(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_cube(const FeatureCube& c) {
  Array out({c.channels(), c.depth(), c.height(), c.width()});
  std::copy(c.values().begin(), c.values().end(), out.mutable_data());
  return out;
}

Track to_track(const std::vector<std::pair<int, BoxTuple>>& t) {
  Track out;
  for (const auto& [f, b] : t) out.push_back({f, to_box(b)});
  return out;
}

py::list from_track(const Track& t) {
  py::list out;
  for (const FrameBox& fb : t) out.append(py::make_tuple(fb.frame, from_box(fb.box)));
  return out;
}

py::dict from_detection(const Detection& d) {
  py::dict o;
  o["video_id"] = d.video_id;
  o["class_id"] = d.class_id;
  o["confidence"] = d.confidence;
  o["track"] = from_track(d.track);
  return o;
}

Detection to_detection(const py::dict& d) {
  Detection o;
  o.video_id = d["video_id"].cast<std::string>();
  o.class_id = d["class_id"].cast<int>();
  o.confidence = d["confidence"].cast<double>();
  o.track = to_track(d["track"].cast<std::vector<std::pair<int, BoxTuple>>>());
  return o;
}

std::vector<Detection> to_detections(const py::list& l) {
  std::vector<Detection> out;
  for (const auto& d : l) out.push_back(to_detection(d.cast<py::dict>()));
  return out;
}

std::vector<VideoAnnotation> read_annotations(const std::filesystem::path& p) {
  return parse_annotations(read_file(p));
}

}  // namespace

PYBIND11_MODULE(_tcnn, m) {
  m.doc() = "Tube convolutional network for action detection";

  m.def("iou", [](const BoxTuple& a, const BoxTuple& b) { return iou(to_box(a), to_box(b)); });

  m.def(
      "toi_pool",
      [](const Array& input, const std::vector<BoxTuple>& boxes, std::tuple<int, int, int> out) {
        TubeOfInterest tube;
        for (const BoxTuple& b : boxes) tube.boxes.push_back(to_box(b));
        const auto [d, h, w] = out;
        return from_cube(toi_pool_forward(to_cube(input), tube, {d, h, w}).output);
      },
      py::arg("input"), py::arg("boxes"), py::arg("output"),
      "Max-pools a (C, D, H, W) cube inside one box per frame to (C, d, h, w).");

  m.def(
      "kmeans_anchors",
      [](const std::vector<std::pair<double, double>>& sizes, int k, std::uint64_t seed) {
        std::vector<AnchorBox> boxes;
        for (const auto& [w, h] : sizes) boxes.push_back({w, h});
        std::vector<std::pair<double, double>> out;
        for (const AnchorBox& a : kmeans_anchors(boxes, k, seed).anchors) out.emplace_back(a.width, a.height);
        return out;
      },
      py::arg("sizes"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "top_k_sequences",
      [](const std::vector<std::vector<std::pair<std::vector<BoxTuple>, double>>>& clips, std::size_t k) {
        std::vector<std::vector<TubeProposal>> cs;
        for (std::size_t c = 0; c < clips.size(); ++c) {
          cs.emplace_back();
          for (const auto& [boxes, score] : clips[c]) {
            if (boxes.size() != static_cast<std::size_t>(kClipLength))
              throw std::invalid_argument("each proposal needs 8 frame boxes");
            TubeProposal p;
            p.clip_index = static_cast<int>(c);
            p.actionness = score;
            for (int f = 0; f < kClipLength; ++f) p.frame_boxes[f] = to_box(boxes[f]);
            cs.back().push_back(p);
          }
        }
        std::vector<std::pair<std::vector<int>, double>> out;
        for (const LinkedSequence& s : top_k_sequences(cs, k)) out.emplace_back(s.tube_indices, s.score);
        return out;
      },
      py::arg("clips"), py::arg("k"),
      "clips: per clip a list of (8 frame boxes, actionness). Returns (indices, score), best first.");

  m.def(
      "sequence_iou",
      [](const std::vector<std::pair<int, BoxTuple>>& a, const std::vector<std::pair<int, BoxTuple>>& b) {
        return sequence_iou(to_track(a), to_track(b));
      });

  m.def(
      "generate",
      [](int num_classes, int frames_per_video, std::uint64_t seed, int first, int count,
         bool untrimmed, double noise, double distractor_rate) {
        SynthSpec spec;
        spec.num_classes = num_classes;
        spec.frames_per_video = frames_per_video;
        spec.seed = seed;
        spec.untrimmed = untrimmed;
        spec.noise = noise;
        spec.distractor_rate = distractor_rate;
        py::list out;
        for (const LabeledVideo& v : generate(spec, first, count)) {
          py::dict d;
          d["id"] = v.video.id;
          d["frames"] = from_cube(v.video.frames);
          py::list boxes;
          for (const auto& frame : v.annotation.frames) {
            py::list fl;
            for (const FrameLabel& l : frame) fl.append(py::make_tuple(l.class_id, from_box(l.box)));
            boxes.append(fl);
          }
          d["boxes"] = boxes;
          out.append(d);
        }
        return out;
      },
      py::arg("num_classes") = 3, py::arg("frames_per_video") = 16, py::arg("seed") = 0,
      py::arg("first") = 0, py::arg("count") = 1, py::arg("untrimmed") = false,
      py::arg("noise") = 0.1, py::arg("distractor_rate") = 0.5,
      "Synthetic 60x80 videos: dicts with id, frames (3, T, H, W) and per-frame [(class, box)].");

  m.def(
      "clip_starts",
      [](int num_frames, bool train) {
        return clip_starts(num_frames, train ? ClipMode::kTrainOverlapping : ClipMode::kTestNonOverlapping);
      },
      py::arg("num_frames"), py::arg("train") = false);

  m.def(
      "read_detections",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const Detection& d : parse_detections(read_file(p))) out.append(from_detection(d));
        return out;
      });

  m.def(
      "evaluate",
      [](const py::list& detections, const std::filesystem::path& annotations, double alpha) {
        const auto dets = to_detections(detections);
        const auto anns = read_annotations(annotations);
        py::dict o;
        o["frame_map"] = frame_map(dets, anns, alpha).mean_ap;
        o["video_map"] = video_map(dets, anns, alpha).mean_ap;
        o["roc_auc"] = roc_auc(dets, anns, alpha).auc;
        return o;
      },
      py::arg("detections"), py::arg("annotations"), py::arg("alpha") = 0.5,
      "frame-mAP, video-mAP and ROC AUC of detections against an annotation file.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int instances) {
        GradcheckOptions o;
        o.seed = seed;
        o.instances = instances;
        py::list out;
        for (const GradcheckEntry& e : run_gradcheck(o)) {
          py::dict d;
          d["layer"] = e.layer;
          d["max_relative_error"] = e.max_relative_error;
          d["passed"] = e.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("instances") = 20);

  py::class_<Model>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("checkpoint_dir"))
      .def_static(
          "create",
          [](const std::string& scale, int num_classes, const std::vector<std::pair<double, double>>& anchors,
             std::uint64_t seed, const std::string& skip) {
            AnchorSet set;
            for (const auto& [w, h] : anchors) set.anchors.push_back({w, h});
            Model model(model_preset(parse_scale(scale), num_classes, parse_skip_source(skip)), set);
            model.initialize(seed);
            return model;
          },
          py::arg("scale") = "desk", py::arg("num_classes") = 3, py::arg("anchors") = std::vector<std::pair<double, double>>{{0.25, 0.35}},
          py::arg("seed") = 0, py::arg("skip_source") = "conv2")
      .def("save", [](const Model& m, const std::filesystem::path& p) { save_checkpoint(m, p); })
      .def_property_readonly("grid", [](const Model& m) {
        const FrameGeometry g = m.geometry();
        return std::make_pair(g.grid_height, g.grid_width);
      })
      .def(
          "detect",
          [](const Model& m, const Array& frames, const std::string& video_id, std::size_t k,
             double actionness_threshold) {
            DetectConfig c;
            c.k = k;
            c.actionness_threshold = actionness_threshold;
            const Video video{video_id, to_cube(frames)};
            std::vector<Detection> dets;
            {
              py::gil_scoped_release release;
              dets = detect_video(m, video, c);
            }
            py::list out;
            for (const Detection& d : dets) out.append(from_detection(d));
            return out;
          },
          py::arg("frames"), py::arg("video_id") = "video", py::arg("k") = 40,
          py::arg("actionness_threshold") = 0.5,
          "Detections for one (3, T, H, W) video, highest confidence first.");
}
