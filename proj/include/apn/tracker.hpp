#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "apn/geometry.hpp"
#include "apn/image.hpp"
#include "apn/network.hpp"

namespace apn {

struct TrackerConfig {
  double context = 0.5;           // margin c = context * (w + h)
  double window_influence = 0.3;  // weight of the cosine window
  double alpha1 = 1.0;            // exponents of the three score maps
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  double scale_damping = 0.7;     // weight kept on the previous width/height

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Outer product of two Hann windows, row-major (j * w + i).
std::vector<double> cosine_window(int w, int h);

// Per-point fused score of batch entry 0:
// p1^a1 * p2^a2 * p3^a3 * ((1 - w_infl) + w_infl * window).
std::vector<double> fuse_scores(const Tensor& cls1, const Tensor& cls2, const Tensor& cls3, const TrackerConfig& cfg,
                                std::span<const double> window);

// Index of the first maximum.
std::size_t select_peak(std::span<const double> scores);

struct TrackResult {
  CornerBox box;
  double confidence = 0.0;
};

class Tracker {
 public:
  // Keeps a private inference-only copy of the network.
  Tracker(const Network& net, TrackerConfig cfg);

  // Crops the template around box and caches its features. Throws InitError
  // for a degenerate box or one that does not overlap the frame.
  void init(const Image& frame, const CornerBox& box);
  TrackResult update(const Image& frame);

  bool initialized() const { return initialized_; }
  const CenterBox& estimate() const { return state_; }
  const TrackerConfig& config() const { return cfg_; }
  const Network& network() const { return net_; }

  // Replaces the cosine window; size must match the response map.
  void set_window(std::vector<double> window);
  const std::vector<double>& window() const { return window_; }
  // Fused score map and selected index from the latest update.
  const std::vector<double>& last_scores() const { return last_scores_; }
  std::size_t last_peak() const { return last_peak_; }

 private:
  Network net_;
  TrackerConfig cfg_;
  std::vector<double> window_;
  FeaturePair templ_;
  CenterBox state_;
  int frame_w_ = 0;
  int frame_h_ = 0;
  bool initialized_ = false;
  std::vector<double> last_scores_;
  std::size_t last_peak_ = 0;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual Image frame(std::size_t index) const = 0;
};

class MemoryFrames : public FrameSource {
 public:
  explicit MemoryFrames(std::vector<Image> frames) : frames_(std::move(frames)) {}
  std::size_t size() const override { return frames_.size(); }
  Image frame(std::size_t index) const override { return frames_.at(index); }

 private:
  std::vector<Image> frames_;
};

// *.ppm files of a directory in lexicographic order, decoded on demand.
class PpmDirectory : public FrameSource {
 public:
  explicit PpmDirectory(const std::filesystem::path& dir);
  std::size_t size() const override { return files_.size(); }
  Image frame(std::size_t index) const override;

 private:
  std::vector<std::filesystem::path> files_;
};

struct SequenceRun {
  std::vector<CornerBox> boxes;
  std::vector<double> confidences;
  std::vector<double> frame_seconds;
  double fps = 0.0;
};

// One-pass evaluation: init on frame 0, update on every later frame, no
// re-initialization. Frame 0 reports init_box unchanged. A frame that fails
// to decode aborts the run with its index in the message.
SequenceRun run_sequence(const Network& net, const FrameSource& frames, const CornerBox& init_box,
                         const TrackerConfig& cfg);

}  // namespace apn
