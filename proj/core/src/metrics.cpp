#include "bistream/metrics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace bistream {

namespace {

constexpr double kEps = 1e-8;

void check_extents(const char* what, const SaliencyMap& pred, const GroundTruthMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument(std::string(what) + ": prediction is " + std::to_string(pred.height()) + "x" +
                                std::to_string(pred.width()) + ", annotation is " + std::to_string(gt.height()) +
                                "x" + std::to_string(gt.width()));
  }
}

}  // namespace

SaliencyMap::SaliencyMap(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height_ == 0 || width_ == 0) throw std::invalid_argument("saliency map: empty extents");
  if (values_.size() != height_ * width_) {
    throw std::invalid_argument("saliency map: expected " + std::to_string(height_ * width_) + " values, got " +
                                std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("saliency map: value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

SaliencyMap SaliencyMap::from_image(const GrayImage& image) {
  std::vector<double> values(image.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = image.pixels[i] / 255.0;
  return {image.height, image.width, std::move(values)};
}

GroundTruthMask::GroundTruthMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height_ == 0 || width_ == 0) throw std::invalid_argument("annotation: empty extents");
  if (values_.size() != height_ * width_) {
    throw std::invalid_argument("annotation: expected " + std::to_string(height_ * width_) + " values, got " +
                                std::to_string(values_.size()));
  }
  for (std::uint8_t v : values_) {
    if (v > 1) throw std::invalid_argument("annotation: value " + std::to_string(v) + " is not binary");
  }
}

GroundTruthMask GroundTruthMask::from_image(const GrayImage& image) {
  std::vector<std::uint8_t> values(image.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = image.pixels[i] >= 128 ? 1 : 0;
  return {image.height, image.width, std::move(values)};
}

std::size_t GroundTruthMask::foreground_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : values_) n += v;
  return n;
}

double mae(const SaliencyMap& pred, const GroundTruthMask& gt) {
  check_extents("mae", pred, gt);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    acc += std::abs(pred.values()[i] - static_cast<double>(gt.values()[i]));
  }
  return acc / static_cast<double>(pred.values().size());
}

namespace {

// Precision/recall of one image at every threshold t/255, t = 0..255.
struct ImageCurve {
  std::array<double, 256> precision;
  std::array<double, 256> recall;
};

ImageCurve image_curve(const SaliencyMap& pred, const GroundTruthMask& gt) {
  check_extents("pr_curve", pred, gt);
  ImageCurve curve;
  const std::size_t n = pred.values().size();
  const std::size_t positives = gt.foreground_count();
  for (int t = 0; t < 256; ++t) {
    const double threshold = t / 255.0;
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred.values()[i] >= threshold) {
        ++predicted;
        tp += gt.values()[i];
      }
    }
    curve.precision[t] = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    curve.recall[t] = positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0;
  }
  return curve;
}

FScores curve_scores(const std::array<double, 256>& precision, const std::array<double, 256>& recall) {
  FScores scores{0.0, 0.0};
  double total = 0.0;
  for (int t = 1; t < 256; ++t) {
    const double f = f_measure(precision[t], recall[t]);
    scores.max_f = std::max(scores.max_f, f);
    total += f;
  }
  scores.avg_f = total / 255.0;
  return scores;
}

}  // namespace

std::vector<PrPoint> pr_curve(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("pr_curve: no image pairs");
  std::array<double, 256> precision{}, recall{};
  for (const EvalPair& pair : pairs) {
    const ImageCurve curve = image_curve(pair.pred, pair.gt);
    for (int t = 0; t < 256; ++t) {
      precision[t] += curve.precision[t];
      recall[t] += curve.recall[t];
    }
  }
  std::vector<PrPoint> points(256);
  for (int t = 0; t < 256; ++t) {
    points[t] = {precision[t] / static_cast<double>(pairs.size()), recall[t] / static_cast<double>(pairs.size())};
  }
  return points;
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

FScores max_avg_f(std::span<const EvalPair> pairs) {
  const std::vector<PrPoint> points = pr_curve(pairs);
  std::array<double, 256> precision, recall;
  for (int t = 0; t < 256; ++t) {
    precision[t] = points[t].precision;
    recall[t] = points[t].recall;
  }
  return curve_scores(precision, recall);
}

// --- boundary-aware weighted F ------------------------------------------

namespace {

// Exact nearest-foreground search. For every pixel it yields the squared
// Euclidean distance to the closest foreground pixel and that pixel's
// linear index; among equally close candidates the smallest row wins,
// then the smallest column. Requires at least one foreground pixel.
void nearest_foreground(const GroundTruthMask& gt, std::vector<double>& dist2, std::vector<std::size_t>& nearest) {
  const std::size_t h = gt.height(), w = gt.width();
  dist2.assign(h * w, 0.0);
  nearest.assign(h * w, 0);

  // Nearest foreground column within each row (-1 when the row is empty);
  // ties inside a row go to the smaller column.
  std::vector<long long> row_nearest(h * w, -1);
  for (std::size_t y = 0; y < h; ++y) {
    long long last = -1;
    for (std::size_t x = 0; x < w; ++x) {
      if (gt.at(y, x)) last = static_cast<long long>(x);
      row_nearest[y * w + x] = last;
    }
    long long next = -1;
    for (std::size_t x = w; x-- > 0;) {
      if (gt.at(y, x)) next = static_cast<long long>(x);
      const long long left = row_nearest[y * w + x];
      if (left < 0) {
        row_nearest[y * w + x] = next;
      } else if (next >= 0) {
        const long long dl = static_cast<long long>(x) - left;
        const long long dr = next - static_cast<long long>(x);
        if (dr < dl) row_nearest[y * w + x] = next;  // tie keeps the left (smaller) column
      }
    }
  }

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      long long best_d2 = std::numeric_limits<long long>::max();
      std::size_t best_row = 0, best_col = 0;
      const auto consider = [&](std::size_t row) {
        const long long col = row_nearest[row * w + x];
        if (col < 0) return;
        const long long dy = static_cast<long long>(row) - static_cast<long long>(y);
        const long long dx = col - static_cast<long long>(x);
        const long long d2 = dy * dy + dx * dx;
        const std::size_t ucol = static_cast<std::size_t>(col);
        if (d2 < best_d2 || (d2 == best_d2 && (row < best_row || (row == best_row && ucol < best_col)))) {
          best_d2 = d2;
          best_row = row;
          best_col = ucol;
        }
      };
      for (std::size_t dy = 0;; ++dy) {
        const long long dy2 = static_cast<long long>(dy) * static_cast<long long>(dy);
        if (dy2 > best_d2) break;  // no remaining row can match, even on a tie
        bool any = false;
        if (dy <= y) {
          consider(y - dy);
          any = true;
        }
        if (y + dy < h) {
          if (dy > 0 || !any) consider(y + dy);
          any = true;
        }
        if (!any) break;
      }
      dist2[y * w + x] = static_cast<double>(best_d2);
      nearest[y * w + x] = best_row * w + best_col;
    }
  }
}

// Normalised 7x7 Gaussian (sigma 5) applied with zero padding, separably.
std::vector<double> gaussian7(const std::vector<double>& src, std::size_t h, std::size_t w) {
  double kernel[7];
  double total = 0.0;
  for (int i = 0; i < 7; ++i) {
    kernel[i] = std::exp(-static_cast<double>((i - 3) * (i - 3)) / (2.0 * 25.0));
    total += kernel[i];
  }
  for (double& k : kernel) k /= total;

  std::vector<double> tmp(h * w, 0.0), out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k) {
        const long long xx = static_cast<long long>(x) + k;
        if (xx < 0 || xx >= static_cast<long long>(w)) continue;
        acc += kernel[k + 3] * src[y * w + static_cast<std::size_t>(xx)];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k) {
        const long long yy = static_cast<long long>(y) + k;
        if (yy < 0 || yy >= static_cast<long long>(h)) continue;
        acc += kernel[k + 3] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

double weighted_f(const SaliencyMap& pred, const GroundTruthMask& gt) {
  check_extents("weighted_f", pred, gt);
  const std::size_t n = pred.values().size();
  const std::size_t fg = gt.foreground_count();
  if (fg == 0) {
    const bool silent = std::all_of(pred.values().begin(), pred.values().end(), [](double v) { return v == 0.0; });
    return silent ? 1.0 : 0.0;
  }

  std::vector<double> error(n);
  for (std::size_t i = 0; i < n; ++i) error[i] = std::abs(pred.values()[i] - static_cast<double>(gt.values()[i]));

  std::vector<double> dist2;
  std::vector<std::size_t> nearest;
  nearest_foreground(gt, dist2, nearest);

  // Background errors borrow the error of the nearest foreground pixel
  // before smoothing, so dependencies stay within the annotated object.
  std::vector<double> substituted(n);
  for (std::size_t i = 0; i < n; ++i) substituted[i] = gt.values()[i] ? error[i] : error[nearest[i]];
  const std::vector<double> smoothed = gaussian7(substituted, gt.height(), gt.width());

  double fg_error = 0.0, bg_error = 0.0;
  constexpr double kDecay = -0.13862943611198906;  // ln(0.5) / 5
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.values()[i]) {
      // Smoothing only ever helps the foreground score.
      fg_error += std::min(error[i], smoothed[i]);
    } else {
      const double weight = 2.0 - std::exp(kDecay * std::sqrt(dist2[i]));
      bg_error += error[i] * weight;
    }
  }

  const double tp = static_cast<double>(fg) - fg_error;
  const double fp = bg_error;
  const double recall = 1.0 - fg_error / static_cast<double>(fg);
  const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// --- structural similarity ----------------------------------------------

namespace {

struct RegionStats {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;  // sample variance, denominator n - 1 + eps
};

double object_term(const std::vector<double>& values) {
  const std::size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = n > 1 ? std::sqrt(var / (static_cast<double>(n) - 1.0)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

// SSIM between prediction and annotation over one rectangular region.
double region_ssim(const SaliencyMap& pred, const GroundTruthMask& gt, std::size_t y0, std::size_t y1,
                   std::size_t x0, std::size_t x1) {
  const double n = static_cast<double>((y1 - y0) * (x1 - x0));
  double mx = 0.0, my = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      mx += pred.at(y, x);
      my += gt.at(y, x);
    }
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      const double dx = pred.at(y, x) - mx;
      const double dy = gt.at(y, x) - my;
      vx += dx * dx;
      vy += dy * dy;
      cov += dx * dy;
    }
  }
  const double denom = n - 1.0 + kEps;
  vx /= denom;
  vy /= denom;
  cov /= denom;

  const double alpha = 4.0 * mx * my * cov;
  const double beta = (mx * mx + my * my) * (vx + vy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

double object_score(const SaliencyMap& pred, const GroundTruthMask& gt, double mu) {
  std::vector<double> fg_values, bg_values;
  fg_values.reserve(pred.values().size());
  bg_values.reserve(pred.values().size());
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    if (gt.values()[i]) {
      fg_values.push_back(pred.values()[i]);
    } else {
      bg_values.push_back(1.0 - pred.values()[i]);
    }
  }
  return mu * object_term(fg_values) + (1.0 - mu) * object_term(bg_values);
}

double region_score(const SaliencyMap& pred, const GroundTruthMask& gt) {
  const std::size_t h = gt.height(), w = gt.width();
  // Centroid in 1-based coordinates, truncated; splits the map into the
  // four quadrants whose SSIM scores are blended by area.
  std::size_t sum_x = 0, sum_y = 0, fg = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (gt.at(y, x)) {
        sum_x += x + 1;
        sum_y += y + 1;
        ++fg;
      }
    }
  }
  const std::size_t cx = sum_x / fg;
  const std::size_t cy = sum_y / fg;

  const double total = static_cast<double>(h * w);
  struct Quadrant {
    std::size_t y0, y1, x0, x1;
  };
  const Quadrant quadrants[4] = {
      {0, cy, 0, cx},
      {0, cy, cx, w},
      {cy, h, 0, cx},
      {cy, h, cx, w},
  };
  double score = 0.0;
  for (const Quadrant& q : quadrants) {
    const std::size_t count = (q.y1 - q.y0) * (q.x1 - q.x0);
    if (count == 0) continue;
    const double weight = static_cast<double>(count) / total;
    score += weight * region_ssim(pred, gt, q.y0, q.y1, q.x0, q.x1);
  }
  return score;
}

}  // namespace

double s_measure(const SaliencyMap& pred, const GroundTruthMask& gt) {
  check_extents("s_measure", pred, gt);
  const std::size_t n = pred.values().size();
  const std::size_t fg = gt.foreground_count();
  double mean_pred = 0.0;
  for (double v : pred.values()) mean_pred += v;
  mean_pred /= static_cast<double>(n);

  if (fg == 0) return 1.0 - mean_pred;
  if (fg == n) return mean_pred;

  const double mu = static_cast<double>(fg) / static_cast<double>(n);
  const double score = 0.5 * object_score(pred, gt, mu) + 0.5 * region_score(pred, gt);
  return std::clamp(score, 0.0, 1.0);
}

// --- dataset evaluation ---------------------------------------------------

namespace {

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".png";
}

struct ImageSlot {
  bool ok = false;
  std::string error;
  PerImageMetrics metrics;
  ImageCurve curve;
};

void evaluate_one(const std::filesystem::path& pred_path, const std::filesystem::path& gt_dir, ImageSlot& slot) {
  const std::string name = pred_path.filename().string();
  try {
    const std::filesystem::path gt_path = gt_dir / pred_path.filename();
    if (!std::filesystem::exists(gt_path)) throw std::invalid_argument("missing ground truth");
    const SaliencyMap pred = SaliencyMap::from_image(read_gray_image(pred_path));
    const GroundTruthMask gt = GroundTruthMask::from_image(read_gray_image(gt_path));
    check_extents("evaluate", pred, gt);

    slot.curve = image_curve(pred, gt);
    const FScores f = curve_scores(slot.curve.precision, slot.curve.recall);
    slot.metrics = {name, mae(pred, gt), f.max_f, f.avg_f, weighted_f(pred, gt), s_measure(pred, gt)};
    slot.ok = true;
  } catch (const std::exception& e) {
    slot.error = name + ": " + e.what();
  }
}

}  // namespace

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              unsigned threads) {
  if (!std::filesystem::is_directory(pred_dir)) {
    throw std::invalid_argument("prediction directory " + pred_dir.string() + " does not exist");
  }
  if (!std::filesystem::is_directory(gt_dir)) {
    throw std::invalid_argument("ground-truth directory " + gt_dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(pred_dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  if (files.empty()) throw std::invalid_argument("no .pgm or .png predictions in " + pred_dir.string());

  std::vector<ImageSlot> slots(files.size());
  const unsigned worker_count = std::max(1u, threads);
  if (worker_count == 1) {
    for (std::size_t i = 0; i < files.size(); ++i) evaluate_one(files[i], gt_dir, slots[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(worker_count);
    for (unsigned t = 0; t < worker_count; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1)) {
          evaluate_one(files[i], gt_dir, slots[i]);
        }
      });
    }
    for (std::thread& worker : workers) worker.join();
  }

  // Aggregation stays sequential and in file-name order so the report is
  // identical for every thread count.
  MetricReport report;
  std::array<double, 256> precision{}, recall{};
  std::size_t ok = 0;
  for (const ImageSlot& slot : slots) {
    if (!slot.ok) {
      report.errors.push_back(slot.error);
      continue;
    }
    ++ok;
    report.per_image.push_back(slot.metrics);
    report.mae += slot.metrics.mae;
    report.weighted_f += slot.metrics.weighted_f;
    report.s_measure += slot.metrics.s_measure;
    for (int t = 0; t < 256; ++t) {
      precision[t] += slot.curve.precision[t];
      recall[t] += slot.curve.recall[t];
    }
  }
  if (ok == 0) throw std::runtime_error("no usable image pairs under " + pred_dir.string());

  report.mae /= static_cast<double>(ok);
  report.weighted_f /= static_cast<double>(ok);
  report.s_measure /= static_cast<double>(ok);
  report.pr_points.resize(256);
  for (int t = 0; t < 256; ++t) {
    precision[t] /= static_cast<double>(ok);
    recall[t] /= static_cast<double>(ok);
    report.pr_points[t] = {precision[t], recall[t]};
  }
  const FScores f = curve_scores(precision, recall);
  report.max_f = f.max_f;
  report.avg_f = f.avg_f;
  return report;
}

void write_report_json(std::ostream& out, const MetricReport& report) {
  nlohmann::ordered_json j;
  j["aggregate"] = {{"mae", report.mae},
                    {"max_f", report.max_f},
                    {"avg_f", report.avg_f},
                    {"weighted_f", report.weighted_f},
                    {"s_measure", report.s_measure}};
  j["per_image"] = nlohmann::ordered_json::array();
  for (const PerImageMetrics& m : report.per_image) {
    j["per_image"].push_back({{"name", m.name},
                              {"mae", m.mae},
                              {"max_f", m.max_f},
                              {"avg_f", m.avg_f},
                              {"weighted_f", m.weighted_f},
                              {"s_measure", m.s_measure}});
  }
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("report write failed");
}

void write_curve_csv(std::ostream& out, const MetricReport& report) {
  if (report.pr_points.size() != 256) throw std::invalid_argument("curve CSV needs the 256-point curve");
  out << "threshold,precision,recall,f\n";
  const auto old_precision = out.precision(17);
  for (int t = 0; t < 256; ++t) {
    const PrPoint& p = report.pr_points[t];
    out << t << ',' << p.precision << ',' << p.recall << ',' << f_measure(p.precision, p.recall) << '\n';
  }
  out.precision(old_precision);
  if (!out) throw std::runtime_error("curve write failed");
}

}  // namespace bistream
