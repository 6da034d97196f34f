#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bistream/image_io.hpp"

namespace bistream {

/// Real-valued prediction in [0, 1]; the constructor rejects anything
/// outside that range.
class SaliencyMap {
 public:
  SaliencyMap(std::size_t height, std::size_t width, std::vector<double> values);
  /// Rescales 8-bit pixels to [0, 1] by dividing by 255.
  static SaliencyMap from_image(const GrayImage& image);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::span<const double> values() const { return {values_.data(), values_.size()}; }
  double at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }

 private:
  std::size_t height_, width_;
  std::vector<double> values_;
};

/// Binary annotation; every entry is 0 or 1.
class GroundTruthMask {
 public:
  GroundTruthMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);
  /// Binarises 8-bit pixels at 128: v >= 128 is foreground.
  static GroundTruthMask from_image(const GrayImage& image);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::span<const std::uint8_t> values() const { return {values_.data(), values_.size()}; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  std::size_t foreground_count() const;

 private:
  std::size_t height_, width_;
  std::vector<std::uint8_t> values_;
};

/// One prediction with its annotation; extents must agree.
struct EvalPair {
  SaliencyMap pred;
  GroundTruthMask gt;
};

/// Mean absolute difference over all pixels. Extents must agree.
double mae(const SaliencyMap& pred, const GroundTruthMask& gt);

struct PrPoint {
  double precision;
  double recall;
};

/// Precision/recall over the 256 thresholds t/255, t = 0..255, binarising
/// the prediction at S >= t/255. Precision counts 0 when nothing is
/// predicted; recall counts 0 when the annotation is empty. Multi-image
/// input yields the dataset mean of each point (curve-first aggregation).
std::vector<PrPoint> pr_curve(std::span<const EvalPair> pairs);

/// Weighted harmonic mean (1 + b2) P R / (b2 P + R), or 0 when the
/// denominator vanishes. The default weight emphasises precision.
double f_measure(double precision, double recall, double beta2 = 0.3);

struct FScores {
  double max_f;
  double avg_f;
};

/// Maximum and mean of the f_measure along the dataset-mean curve,
/// aggregated over the nontrivial thresholds t = 1..255 (t = 0 predicts
/// everything regardless of the map and carries no information).
FScores max_avg_f(std::span<const EvalPair> pairs);

/// Boundary-aware F-measure with equal precision/recall weight. Errors on
/// background pixels are substituted from the nearest foreground pixel,
/// smoothed with a normalised 7x7 Gaussian (sigma 5, zero padding, kept
/// on foreground only where smoothing lowers the error) and background
/// errors are discounted by B = 2 - exp(ln(0.5)/5 * d) with d the
/// distance to the foreground. An empty annotation scores 1 against an
/// all-zero map and 0 otherwise.
double weighted_f(const SaliencyMap& pred, const GroundTruthMask& gt);

/// Structural similarity score: the even blend of an object-aware term
/// (foreground/background means and dispersions) and a region-aware term
/// (SSIM over the four quadrants around the annotation centroid, weighted
/// by area). Degenerate annotations fall back to 1 - mean(S) when empty
/// and mean(S) when full. The result is clamped to [0, 1].
double s_measure(const SaliencyMap& pred, const GroundTruthMask& gt);

struct PerImageMetrics {
  std::string name;
  double mae;
  double max_f;
  double avg_f;
  double weighted_f;
  double s_measure;
};

struct MetricReport {
  double mae = 0.0;
  double max_f = 0.0;
  double avg_f = 0.0;
  double weighted_f = 0.0;
  double s_measure = 0.0;
  std::vector<PrPoint> pr_points;           // dataset-mean curve, 256 points
  std::vector<PerImageMetrics> per_image;   // sorted by file name
  std::vector<std::string> errors;          // skipped files with reasons
};

/// Pairs every prediction in pred_dir with the ground-truth file of the
/// same name in gt_dir (.pgm or .png), evaluates all metrics and
/// aggregates. Files that cannot be paired or decoded are recorded in
/// `errors` and skipped; zero usable pairs is a hard error. `threads`
/// only distributes the per-image work, the result is identical for any
/// value.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              unsigned threads = 1);

/// JSON object {"aggregate": {...}, "per_image": [...]}.
void write_report_json(std::ostream& out, const MetricReport& report);

/// CSV "threshold,precision,recall,f" with one row per threshold.
void write_curve_csv(std::ostream& out, const MetricReport& report);

}  // namespace bistream
