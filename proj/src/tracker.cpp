#include "apn/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "apn/error.hpp"
#include "apn/synthetic.hpp"

namespace apn {
namespace {

// Smallest width/height the tracker will report, pixels.
constexpr double kMinTrackSide = 2.0;

std::vector<double> hann(int n) {
  std::vector<double> v(static_cast<std::size_t>(n), 1.0);
  if (n < 2) return v;
  for (int k = 0; k < n; ++k) v[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / (n - 1));
  return v;
}

double positive_prob(const Tensor& logits, int y, int x) {
  const double a = logits.at(0, 0, y, x);
  const double b = logits.at(0, 1, y, x);
  return 1.0 / (1.0 + std::exp(a - b));
}

}  // namespace

void TrackerConfig::validate() const {
  if (!(context >= 0.0)) throw ConfigError("tracker.context: must be >= 0");
  if (!(window_influence >= 0.0 && window_influence <= 1.0)) {
    throw ConfigError("tracker.window_influence: must lie in [0, 1]");
  }
  if (!(alpha1 >= 0.0)) throw ConfigError("tracker.alpha1: must be >= 0");
  if (!(alpha2 >= 0.0)) throw ConfigError("tracker.alpha2: must be >= 0");
  if (!(alpha3 >= 0.0)) throw ConfigError("tracker.alpha3: must be >= 0");
  if (alpha1 == 0.0 && alpha2 == 0.0 && alpha3 == 0.0) {
    throw ConfigError("tracker.alpha1: alpha1, alpha2 and alpha3 must not all be zero");
  }
  if (!(scale_damping >= 0.0 && scale_damping < 1.0)) throw ConfigError("tracker.scale_damping: must lie in [0, 1)");
}

std::vector<double> cosine_window(int w, int h) {
  const auto wx = hann(w);
  const auto wy = hann(h);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) out[static_cast<std::size_t>(j) * w + i] = wy[j] * wx[i];
  }
  return out;
}

std::vector<double> fuse_scores(const Tensor& cls1, const Tensor& cls2, const Tensor& cls3, const TrackerConfig& cfg,
                                std::span<const double> window) {
  const int h = cls3.shape().h;
  const int w = cls3.shape().w;
  if (window.size() != static_cast<std::size_t>(w) * h) throw ShapeError("fuse_scores: window size mismatch");
  std::vector<double> out(window.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      const double s = std::pow(positive_prob(cls1, y, x), cfg.alpha1) *
                       std::pow(positive_prob(cls2, y, x), cfg.alpha2) * std::pow(cls3.at(0, 0, y, x), cfg.alpha3);
      out[k] = s * ((1.0 - cfg.window_influence) + cfg.window_influence * window[k]);
    }
  }
  return out;
}

std::size_t select_peak(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("select_peak: empty score map");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

Tracker::Tracker(const Network& net, TrackerConfig cfg) : net_(net.clone()), cfg_(cfg) {
  cfg_.validate();
  net_.set_trainable(false);
  window_ = cosine_window(net_.grid().w, net_.grid().h);
}

void Tracker::set_window(std::vector<double> window) {
  if (window.size() != static_cast<std::size_t>(net_.grid().count())) {
    throw ShapeError("set_window: expected " + std::to_string(net_.grid().count()) + " values");
  }
  window_ = std::move(window);
}

void Tracker::init(const Image& frame, const CornerBox& box) {
  const double w = box.width(), h = box.height();
  if (!(std::isfinite(box.x1) && std::isfinite(box.y1) && std::isfinite(w) && std::isfinite(h)) || w <= 0.0 ||
      h <= 0.0) {
    throw InitError("tracker init: degenerate box");
  }
  if (box.x2 <= 0.0 || box.y2 <= 0.0 || box.x1 >= frame.width || box.y1 >= frame.height) {
    throw InitError("tracker init: box lies outside the frame");
  }
  const ModelConfig& mc = net_.config();
  state_ = box.to_center();
  frame_w_ = frame.width;
  frame_h_ = frame.height;
  const double side = context_side(w, h, cfg_.context);
  const Image patch = crop_resize(frame, state_.cx, state_.cy, side, mc.template_size);
  templ_ = net_.extract_features(Var::constant(to_tensor(patch)), Branch::Template);
  initialized_ = true;
}

TrackResult Tracker::update(const Image& frame) {
  if (!initialized_) throw UsageError("tracker update before init");
  const ModelConfig& mc = net_.config();
  const double side = context_side(state_.w, state_.h, cfg_.context) * mc.search_size / mc.template_size;
  const Image patch = crop_resize(frame, state_.cx, state_.cy, side, mc.search_size);
  const NetworkOutputs out = net_.forward_search(templ_, Var::constant(to_tensor(patch)));

  last_scores_ = fuse_scores(out.cls1.value(), out.cls2.value(), out.cls3.value(), cfg_, window_);
  last_peak_ = select_peak(last_scores_);
  const double confidence = last_scores_[last_peak_];
  if (!(confidence > 0.0)) return {state_.to_corner(), 0.0};

  const GridGeometry& g = net_.grid();
  const int i = static_cast<int>(last_peak_) % g.w;
  const int j = static_cast<int>(last_peak_) / g.w;
  const Tensor& d = out.anchors.value();
  const Tensor& loc = out.loc.value();
  const CenterBox anchor =
      decode_anchor(g, i, j, {d.at(0, 0, j, i), d.at(0, 1, j, i), d.at(0, 2, j, i), d.at(0, 3, j, i)});
  const CornerBox in_patch =
      apply_refinement(anchor, {loc.at(0, 0, j, i), loc.at(0, 1, j, i), loc.at(0, 2, j, i), loc.at(0, 3, j, i)});

  const double k = side / mc.search_size;
  const double ox = state_.cx - side / 2.0;
  const double oy = state_.cy - side / 2.0;
  const CenterBox found = CornerBox{ox + in_patch.x1 * k, oy + in_patch.y1 * k, ox + in_patch.x2 * k,
                                    oy + in_patch.y2 * k}
                              .to_center();

  const double lam = cfg_.scale_damping;
  CenterBox next;
  next.w = std::clamp(lam * state_.w + (1.0 - lam) * found.w, std::min(kMinTrackSide, double(frame_w_)),
                      double(frame_w_));
  next.h = std::clamp(lam * state_.h + (1.0 - lam) * found.h, std::min(kMinTrackSide, double(frame_h_)),
                      double(frame_h_));
  next.cx = std::clamp(found.cx, next.w / 2.0, frame_w_ - next.w / 2.0);
  next.cy = std::clamp(found.cy, next.h / 2.0, frame_h_ - next.h / 2.0);
  if (!(std::isfinite(next.cx) && std::isfinite(next.cy) && std::isfinite(next.w) && std::isfinite(next.h))) {
    return {state_.to_corner(), 0.0};
  }
  state_ = next;
  return {state_.to_corner(), confidence};
}

PpmDirectory::PpmDirectory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files_.push_back(e.path());
  }
  std::sort(files_.begin(), files_.end());
}

Image PpmDirectory::frame(std::size_t index) const { return read_ppm(files_.at(index)); }

SequenceRun run_sequence(const Network& net, const FrameSource& frames, const CornerBox& init_box,
                         const TrackerConfig& cfg) {
  if (frames.size() == 0) throw UsageError("run_sequence: no frames");
  using Clock = std::chrono::steady_clock;
  auto load = [&](std::size_t k) {
    try {
      return frames.frame(k);
    } catch (const std::exception& e) {
      throw std::runtime_error("frame " + std::to_string(k + 1) + ": " + e.what());
    }
  };

  Tracker tracker(net, cfg);
  SequenceRun run;
  double total = 0.0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Image img = load(k);
    const auto t0 = Clock::now();
    if (k == 0) {
      tracker.init(img, init_box);
      run.boxes.push_back(init_box);
      run.confidences.push_back(1.0);
    } else {
      const TrackResult r = tracker.update(img);
      run.boxes.push_back(r.box);
      run.confidences.push_back(r.confidence);
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    run.frame_seconds.push_back(dt);
    total += dt;
  }
  run.fps = total > 0.0 ? static_cast<double>(frames.size()) / total : 0.0;
  return run;
}

}  // namespace apn
