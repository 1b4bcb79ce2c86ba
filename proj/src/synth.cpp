#include "tcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "tcnn/backbone.hpp"
#include "tcnn/rng.hpp"

namespace tcnn {

namespace {

constexpr int kMinBoxW = 14, kMaxBoxW = 24, kMinBoxH = 16, kMaxBoxH = 28;

struct Sprite {
  double w = 0, h = 0;
  int texture = 0;
  double phase = 0;
  std::array<double, 3> color{};
};

// Stripe orientation per texture id: vertical, horizontal, checker, diagonal.
double texture_value(int texture, double u, double v, double phase) {
  constexpr double period = 5.0;
  auto wave = [&](double t) { return std::sin(2.0 * std::numbers::pi * t / period + phase); };
  switch (texture % 4) {
    case 0: return wave(u);
    case 1: return wave(v);
    case 2: return wave(u) * wave(v) > 0 ? 1.0 : -1.0;
    default: return wave(u + v);
  }
}

void draw(FeatureCube& frames, int t, const Sprite& s, const Box2D& b) {
  const int x0 = static_cast<int>(std::floor(b.x1)), x1 = static_cast<int>(std::ceil(b.x2));
  const int y0 = static_cast<int>(std::floor(b.y1)), y1 = static_cast<int>(std::ceil(b.y2));
  for (int y = std::max(0, y0); y < std::min(frames.height(), y1); ++y)
    for (int x = std::max(0, x0); x < std::min(frames.width(), x1); ++x) {
      const double tex = texture_value(s.texture, x - b.x1, y - b.y1, s.phase);
      for (int c = 0; c < 3; ++c) frames.at(c, t, y, x) = s.color[c] * (0.7 + 0.3 * tex);
    }
}

Sprite random_sprite(Rng& rng, int texture) {
  Sprite s;
  s.w = static_cast<double>(kMinBoxW + static_cast<int>(rng.below(kMaxBoxW - kMinBoxW + 1)));
  s.h = static_cast<double>(kMinBoxH + static_cast<int>(rng.below(kMaxBoxH - kMinBoxH + 1)));
  s.texture = texture;
  s.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  // Bright on one channel set, the sign varies so color alone says little.
  for (double& c : s.color) c = rng.bernoulli(0.5) ? rng.uniform(0.6, 1.0) : -rng.uniform(0.6, 1.0);
  return s;
}

// Top-left corner path of a class motion over `n` frames, kept inside the frame.
std::vector<std::pair<double, double>> motion_path(Motion m, int n, double w, double h, int W,
                                                   int H, Rng& rng) {
  const double speed = rng.uniform(1.5, 2.5);
  const double span = speed * std::max(n - 1, 1);
  const double max_x = W - w, max_y = H - h;
  double dx = 0, dy = 0;
  if (m == Motion::kHorizontal) dx = 1;
  if (m == Motion::kVertical) dy = 1;
  if (m == Motion::kDiagonal) dx = dy = 1;
  // Shrink the sweep if the frame is too small for it.
  const double sx = dx > 0 ? std::min(span, max_x) : 0.0;
  const double sy = dy > 0 ? std::min(span, max_y) : 0.0;
  std::vector<std::pair<double, double>> path;
  if (m == Motion::kOscillation) {
    const double amp = std::min(6.0, max_x / 2);
    const double cx = rng.uniform(amp, max_x - amp), y = std::round(rng.uniform(0.0, max_y));
    const double period = rng.uniform(6.0, 9.0);
    for (int t = 0; t < n; ++t)
      path.emplace_back(std::round(cx + amp * std::sin(2.0 * std::numbers::pi * t / period)), y);
    return path;
  }
  const double x0 = rng.uniform(0.0, max_x - sx), y0 = rng.uniform(0.0, max_y - sy);
  for (int t = 0; t < n; ++t) {
    const double f = n > 1 ? static_cast<double>(t) / (n - 1) : 0.0;
    path.emplace_back(std::round(x0 + f * sx), std::round(y0 + f * sy));
  }
  return path;
}

// Random-walk jitter around a fixed spot: motion with no class pattern.
std::vector<std::pair<double, double>> distractor_path(int n, double w, double h, int W, int H,
                                                       Rng& rng) {
  double x = rng.uniform(0.0, W - w), y = rng.uniform(0.0, H - h);
  std::vector<std::pair<double, double>> path;
  for (int t = 0; t < n; ++t) {
    path.emplace_back(std::round(x), std::round(y));
    x = std::clamp(x + rng.uniform(-1.5, 1.5), 0.0, W - w);
    y = std::clamp(y + rng.uniform(-1.5, 1.5), 0.0, H - h);
  }
  return path;
}

void fill_background(FeatureCube& frames, double noise, Rng& rng) {
  // Static coarse blotches plus per-frame noise.
  const int H = frames.height(), W = frames.width();
  std::vector<double> coarse(static_cast<std::size_t>(3 * 4 * 4));
  for (double& v : coarse) v = rng.uniform(-0.25, 0.25);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < frames.depth(); ++t)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int gy = std::min(3, y * 4 / H), gx = std::min(3, x * 4 / W);
          frames.at(c, t, y, x) = coarse[(c * 4 + gy) * 4 + gx] + noise * rng.normal();
        }
}

}  // namespace

Motion class_motion(int class_id) {
  if (class_id < 1) throw std::invalid_argument("class_motion: class ids start at 1");
  return static_cast<Motion>((class_id - 1) % 4);
}

int dataset_class(const SynthSpec& spec, int index) { return 1 + index % spec.num_classes; }

LabeledVideo generate_video(const SynthSpec& spec, int index, int class_id) {
  if (spec.num_classes < 1) throw std::invalid_argument("synth: num_classes must be >= 1");
  if (spec.height < kMaxBoxH + 4 || spec.width < kMaxBoxW + 16)
    throw std::invalid_argument("synth: frame size " + std::to_string(spec.height) + "x" +
                                std::to_string(spec.width) + " is too small for the boxes");
  if (spec.frames_per_video < 1) throw std::invalid_argument("synth: frames_per_video must be >= 1");
  const int T = spec.frames_per_video, H = spec.height, W = spec.width;
  Rng rng(spec.seed, "synth/video/" + std::to_string(index));
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%05d", index);

  LabeledVideo out;
  out.video.id = id;
  out.video.frames = FeatureCube({3, T, H, W});
  out.annotation.video_id = id;
  out.annotation.frames.assign(static_cast<std::size_t>(T), {});
  Rng bg = rng.substream("background");
  fill_background(out.video.frames, spec.noise, bg);

  int first = 0, last = T - 1;
  if (spec.untrimmed && class_id > 0) {
    const int len = std::max(1, std::min(T, static_cast<int>(std::lround(T * rng.uniform(0.4, 0.6)))));
    first = static_cast<int>(rng.below(static_cast<std::uint64_t>(T - len + 1)));
    last = first + len - 1;
  }
  if (class_id > 0) {
    Rng ar = rng.substream("action");
    const Sprite s = random_sprite(ar, class_id - 1);
    const auto path = motion_path(class_motion(class_id), last - first + 1, s.w, s.h, W, H, ar);
    for (int t = first; t <= last; ++t) {
      const auto [x, y] = path[t - first];
      const Box2D b{x, y, x + s.w, y + s.h};
      draw(out.video.frames, t, s, b);
      out.annotation.frames[t].push_back({class_id, b});
    }
  }
  if (spec.untrimmed) {
    // Background segments before and after the action (the whole video when
    // there is none) may each hold a distractor.
    Rng dr = rng.substream("distractor");
    std::vector<std::pair<int, int>> segments;
    if (class_id <= 0) {
      segments.emplace_back(0, T - 1);
    } else {
      if (first > 0) segments.emplace_back(0, first - 1);
      if (last < T - 1) segments.emplace_back(last + 1, T - 1);
    }
    for (const auto& [a, b] : segments) {
      if (!dr.bernoulli(spec.distractor_rate)) continue;
      const Sprite s = random_sprite(dr, static_cast<int>(dr.below(4)));
      const auto path = distractor_path(b - a + 1, s.w, s.h, W, H, dr);
      for (int t = a; t <= b; ++t) {
        const auto [x, y] = path[t - a];
        draw(out.video.frames, t, s, {x, y, x + s.w, y + s.h});
      }
    }
  }
  return out;
}

std::vector<LabeledVideo> generate(const SynthSpec& spec, int first, int count) {
  std::vector<LabeledVideo> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = first; i < first + count; ++i)
    out.push_back(generate_video(spec, i, dataset_class(spec, i)));
  return out;
}

std::vector<int> clip_starts(int num_frames, ClipMode mode) {
  if (num_frames < 1) throw std::invalid_argument("clip_divide: empty video");
  std::vector<int> s;
  if (num_frames < kClipLength) return {0};
  if (mode == ClipMode::kTrainOverlapping) {
    for (int i = 0; i + kClipLength <= num_frames; ++i) s.push_back(i);
  } else {
    for (int i = 0; i < num_frames; i += kClipLength) s.push_back(i);
  }
  return s;
}

FeatureCube extract_clip(const FeatureCube& video, int start) {
  FeatureCube clip({video.channels(), kClipLength, video.height(), video.width()});
  const std::size_t plane = video.shape().plane();
  for (int c = 0; c < video.channels(); ++c)
    for (int f = 0; f < kClipLength && start + f < video.depth(); ++f) {
      const double* src = video.data().data() + video.index(c, start + f, 0, 0);
      std::copy(src, src + plane, clip.data().data() + clip.index(c, f, 0, 0));
    }
  return clip;
}

std::vector<Clip> clip_divide(const FeatureCube& video, ClipMode mode) {
  std::vector<Clip> out;
  for (int s : clip_starts(video.depth(), mode)) out.push_back({s, extract_clip(video, s)});
  return out;
}

}  // namespace tcnn
