#include "tcnn/formats.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "tcnn/tensor_io.hpp"

namespace tcnn {

namespace {

std::string f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad(const std::string& what, int line_no) {
  throw FormatError(what + " (line " + std::to_string(line_no) + ")");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_annotations(const std::vector<VideoAnnotation>& videos) {
  std::string out;
  for (const VideoAnnotation& v : videos)
    for (int f = 0; f < v.num_frames(); ++f) {
      const std::string prefix = v.video_id + " " + std::to_string(f) + " ";
      if (v.frames[f].empty()) out += prefix + "-1\n";
      for (const FrameLabel& l : v.frames[f])
        out += prefix + std::to_string(l.class_id) + " " + f6(l.box.x1) + " " + f6(l.box.y1) +
               " " + f6(l.box.x2) + " " + f6(l.box.y2) + "\n";
    }
  return out;
}

std::vector<VideoAnnotation> parse_annotations(const std::string& text) {
  std::vector<VideoAnnotation> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream s(line);
    std::string id;
    int frame = 0, cls = 0;
    if (!(s >> id >> frame >> cls)) bad("annotation: expected 'video_id frame_idx class_id'", line_no);
    if (out.empty() || out.back().video_id != id) {
      for (const VideoAnnotation& v : out)
        if (v.video_id == id) bad("annotation: lines of video '" + id + "' are not contiguous", line_no);
      out.push_back({id, {}});
    }
    VideoAnnotation& v = out.back();
    if (frame == v.num_frames()) {
      v.frames.emplace_back();
    } else if (frame != v.num_frames() - 1) {
      bad("annotation: frame indices of '" + id + "' must be contiguous from 0", line_no);
    }
    if (cls == -1) {
      if (!v.frames.back().empty()) bad("annotation: background line on a labeled frame", line_no);
      continue;
    }
    if (cls < 1) bad("annotation: class ids start at 1", line_no);
    Box2D b;
    if (!(s >> b.x1 >> b.y1 >> b.x2 >> b.y2)) bad("annotation: expected four coordinates", line_no);
    if (!(b.x2 >= b.x1 && b.y2 >= b.y1)) bad("annotation: box corners out of order", line_no);
    v.frames.back().push_back({cls, b});
  }
  return out;
}

std::string format_anchors(const AnchorSet& anchors) {
  std::string out;
  for (const AnchorBox& a : anchors.anchors) out += f6(a.width) + " " + f6(a.height) + "\n";
  return out;
}

AnchorSet parse_anchors(const std::string& text) {
  AnchorSet set;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream s(line);
    AnchorBox a;
    if (!(s >> a.width >> a.height)) bad("anchors: expected 'width height'", line_no);
    if (!(a.width > 0.0 && a.height > 0.0)) bad("anchors: sizes must be positive", line_no);
    set.anchors.push_back(a);
  }
  if (set.anchors.empty()) throw FormatError("anchors: file has no anchors");
  return set;
}

std::string format_detections(std::vector<Detection> detections) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return a.confidence > b.confidence;
  });
  std::string out;
  for (const Detection& d : detections) {
    out += d.video_id + " " + std::to_string(d.class_id) + " " + f6(d.confidence) + " " +
           std::to_string(d.track.size()) + "\n";
    for (const FrameBox& fb : d.track)
      out += std::to_string(fb.frame) + " " + f6(fb.box.x1) + " " + f6(fb.box.y1) + " " +
             f6(fb.box.x2) + " " + f6(fb.box.y2) + "\n";
  }
  return out;
}

std::vector<Detection> parse_detections(const std::string& text) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  while (next()) {
    std::istringstream s(line);
    Detection d;
    long n = 0;
    if (!(s >> d.video_id >> d.class_id >> d.confidence >> n) || n < 0)
      bad("detections: expected 'video_id class_id confidence n_frames'", line_no);
    for (long i = 0; i < n; ++i) {
      if (!next()) bad("detections: missing frame lines", line_no);
      std::istringstream fs(line);
      FrameBox fb;
      if (!(fs >> fb.frame >> fb.box.x1 >> fb.box.y1 >> fb.box.x2 >> fb.box.y2))
        bad("detections: expected 'frame x1 y1 x2 y2'", line_no);
      if (!d.track.empty() && fb.frame <= d.track.back().frame)
        bad("detections: frames must increase within a track", line_no);
      d.track.push_back(fb);
    }
    out.push_back(std::move(d));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledVideo>& videos) {
  std::filesystem::create_directories(dir / "videos");
  std::vector<VideoAnnotation> anns;
  for (const LabeledVideo& v : videos) {
    if (v.video.id != v.annotation.video_id)
      throw std::invalid_argument("save_dataset: video and annotation ids differ");
    if (v.video.frames.depth() != v.annotation.num_frames())
      throw std::invalid_argument("save_dataset: frame count differs from annotation");
    write_cube(dir / "videos" / (v.video.id + ".tcnt"), v.video.frames);
    anns.push_back(v.annotation);
  }
  write_file_atomic(dir / "annotations.txt", format_annotations(anns));
}

std::vector<LabeledVideo> load_dataset(const std::filesystem::path& dir) {
  std::vector<LabeledVideo> out;
  for (VideoAnnotation& a : parse_annotations(read_file(dir / "annotations.txt"))) {
    LabeledVideo v;
    v.video.id = a.video_id;
    v.video.frames = read_cube(dir / "videos" / (a.video_id + ".tcnt"));
    if (v.video.frames.depth() != a.num_frames())
      throw FormatError("dataset: video '" + a.video_id + "' has " +
                        std::to_string(v.video.frames.depth()) + " frames, annotation has " +
                        std::to_string(a.num_frames()));
    v.annotation = std::move(a);
    out.push_back(std::move(v));
  }
  return out;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("config: expected key=value", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) bad("config: empty key", line_no);
    if (kv.contains(key)) bad("config: duplicate key '" + key + "'", line_no);
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string format_loss_csv(const std::vector<LossRecord>& losses) {
  std::string out = "stage,batch,lr,actionness,regression,classification,total\n";
  for (const LossRecord& r : losses)
    out += to_string(r.stage) + "," + std::to_string(r.batch) + "," + g17(r.lr) + "," +
           g17(r.actionness) + "," + g17(r.regression) + "," + g17(r.classification) + "," +
           g17(r.total()) + "\n";
  return out;
}

std::vector<LossRecord> parse_loss_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "stage,batch,lr,actionness,regression,classification,total")
    throw FormatError("loss csv: bad header");
  std::vector<LossRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    std::string stage;
    LossRecord r;
    double total = 0.0;
    if (!(s >> stage >> r.batch >> r.lr >> r.actionness >> r.regression >> r.classification >> total))
      bad("loss csv: malformed row", line_no);
    r.stage = parse_stage(stage);
    out.push_back(r);
  }
  return out;
}

std::string format_map_csv(const std::string& metric, double alpha, const MapResult& result) {
  std::string out;
  for (const ClassAp& c : result.classes)
    out += metric + "," + f6(alpha) + "," + std::to_string(c.class_id) + "," + f6(c.ap) + "," +
           std::to_string(c.num_ground_truth) + "\n";
  out += metric + "," + f6(alpha) + ",mean," + f6(result.mean_ap) + ",\n";
  return out;
}

}  // namespace tcnn
