#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apn/geometry.hpp"

namespace apn {

// Success thresholds are k / kSuccessSteps for k = 0..kSuccessSteps; precision
// thresholds are 0..kPrecisionMax pixels in steps of one.
inline constexpr int kSuccessSteps = 50;
inline constexpr int kPrecisionMax = 50;
inline constexpr double kPrecisionRank = 20.0;

// Distance between box centers.
double cle(const CornerBox& a, const CornerBox& b);

struct Curve {
  std::vector<double> thresholds;
  std::vector<double> values;
};

// Fraction of frames with IoU > t. Throws UsageError on an empty list.
Curve success_curve(std::span<const double> ious);
// Area under the success curve: mean of the values at t = 0, 0.02, ..., 0.98,
// so perfect tracking scores exactly 1.
double success_auc(const Curve& success);
// Fraction of frames with CLE < t. Throws UsageError on an empty list.
Curve precision_curve(std::span<const double> cles);
// Value at the ranking threshold (20 px unless configured otherwise).
double precision_at_rank(const Curve& precision, double rank_px = kPrecisionRank);

inline const std::vector<std::string>& known_attributes() {
  static const std::vector<std::string> names{"fast-motion", "low-resolution", "partial-occlusion", "full-occlusion",
                                              "none"};
  return names;
}

struct SequenceRecord {
  std::string name;
  std::vector<std::optional<CornerBox>> gt;  // nullopt where the target is absent
  std::vector<std::string> attributes;
};

struct SequenceResult {
  std::string name;
  std::vector<CornerBox> boxes;
  std::optional<double> fps;
};

struct SequenceMetrics {
  std::string name;
  std::size_t frames_scored = 0;
  Curve success;
  Curve precision;
  double auc = 0.0;
  double precision20 = 0.0;  // at the ranking threshold
  std::optional<double> fps;
  std::vector<std::string> attributes;
};

// Per-sequence averages over the member sequences.
struct SliceReport {
  std::string name;
  std::vector<std::string> members;
  Curve success;
  Curve precision;
  double auc = 0.0;
  double precision20 = 0.0;  // at the ranking threshold
  std::optional<double> fps;  // mean over members that report timing
};

struct EvalReport {
  std::vector<SequenceMetrics> sequences;
  SliceReport overall;
  std::map<std::string, SliceReport> attributes;  // only slices with members
};

SequenceMetrics evaluate_sequence(const SequenceResult& result, const SequenceRecord& record,
                                  double rank_px = kPrecisionRank);

// Pairs results with records by name. Throws DataError naming the sequence
// on a missing result or a frame-count mismatch.
EvalReport evaluate(std::span<const SequenceResult> results, std::span<const SequenceRecord> records,
                    double rank_px = kPrecisionRank);

// "x,y,w,h" per line (top-left + size); a line with any NaN marks an absent
// target.
std::vector<std::optional<CornerBox>> read_box_file(const std::filesystem::path& path);
void write_box_file(const std::filesystem::path& path, std::span<const CornerBox> boxes);

// <seq>.txt annotations plus optional <seq>.json {"attributes": [...]}.
std::vector<SequenceRecord> load_annotations(const std::filesystem::path& dir);
// <seq>.txt results plus optional <seq>.timing.json {"fps": ...}.
std::vector<SequenceResult> load_results(const std::filesystem::path& dir);
void write_timing(const std::filesystem::path& path, double fps, std::span<const double> frame_seconds);

// overall.csv, attr_<name>.csv, success.svg, precision.svg.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace apn
