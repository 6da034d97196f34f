// Independent reference implementations of the evaluation metrics, written
// as plain brute-force loops (full-image nearest-neighbour scans, direct 2D
// convolution, per-threshold recounting). The tests compare the library
// against these; none of the library code is reused here.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

struct Frame {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> pred;       // in [0, 1]
  std::vector<std::uint8_t> gt;   // 0 or 1
};

inline double mae(const Frame& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.pred.size(); ++i) acc += std::abs(f.pred[i] - double(f.gt[i]));
  return acc / double(f.pred.size());
}

struct Curve {
  double precision[256];
  double recall[256];
};

inline Curve curve(const Frame& f) {
  Curve c{};
  std::size_t positives = 0;
  for (auto v : f.gt) positives += v;
  for (int t = 0; t < 256; ++t) {
    std::size_t tp = 0, pp = 0;
    for (std::size_t i = 0; i < f.pred.size(); ++i) {
      if (f.pred[i] >= t / 255.0) {
        ++pp;
        if (f.gt[i]) ++tp;
      }
    }
    c.precision[t] = pp == 0 ? 0.0 : double(tp) / double(pp);
    c.recall[t] = positives == 0 ? 0.0 : double(tp) / double(positives);
  }
  return c;
}

inline double fbeta(double p, double r, double b2 = 0.3) {
  const double d = b2 * p + r;
  return d <= 0.0 ? 0.0 : (1.0 + b2) * p * r / d;
}

// Dataset-mean curve; F statistics over thresholds 1..255.
struct FStats {
  double max_f;
  double avg_f;
};

inline FStats f_stats(const std::vector<Frame>& frames) {
  Curve mean{};
  for (const Frame& f : frames) {
    const Curve c = curve(f);
    for (int t = 0; t < 256; ++t) {
      mean.precision[t] += c.precision[t] / double(frames.size());
      mean.recall[t] += c.recall[t] / double(frames.size());
    }
  }
  FStats s{0.0, 0.0};
  for (int t = 1; t < 256; ++t) {
    const double f = fbeta(mean.precision[t], mean.recall[t]);
    s.max_f = std::max(s.max_f, f);
    s.avg_f += f / 255.0;
  }
  return s;
}

// Exhaustive nearest-foreground search: every pixel against every
// foreground pixel, ties resolved by smaller (distance^2, row, column).
inline void nearest_fg(const Frame& f, std::vector<double>& dist, std::vector<std::size_t>& index) {
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < f.gt.size(); ++i) {
    if (f.gt[i]) fg.push_back(i);
  }
  dist.assign(f.gt.size(), 0.0);
  index.assign(f.gt.size(), 0);
  for (std::size_t y = 0; y < f.h; ++y) {
    for (std::size_t x = 0; x < f.w; ++x) {
      long long best = std::numeric_limits<long long>::max();
      std::size_t best_i = 0;
      for (std::size_t i : fg) {  // row-major order = (row, column) order
        const long long dy = (long long)(i / f.w) - (long long)y;
        const long long dx = (long long)(i % f.w) - (long long)x;
        const long long d2 = dy * dy + dx * dx;
        if (d2 < best) {
          best = d2;
          best_i = i;
        }
      }
      dist[y * f.w + x] = std::sqrt(double(best));
      index[y * f.w + x] = best_i;
    }
  }
}

// Direct 2D convolution with the normalised 7x7 Gaussian (sigma 5), zero
// padding at the borders.
inline std::vector<double> blur7(const std::vector<double>& src, std::size_t h, std::size_t w) {
  double k[7][7];
  double total = 0.0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      k[dy + 3][dx + 3] = std::exp(-(dy * dy + dx * dx) / 50.0);
      total += k[dy + 3][dx + 3];
    }
  }
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -3; dy <= 3; ++dy) {
        for (int dx = -3; dx <= 3; ++dx) {
          const long long yy = (long long)y + dy;
          const long long xx = (long long)x + dx;
          if (yy < 0 || xx < 0 || yy >= (long long)h || xx >= (long long)w) continue;
          acc += k[dy + 3][dx + 3] * src[std::size_t(yy) * w + std::size_t(xx)];
        }
      }
      out[y * w + x] = acc / total;
    }
  }
  return out;
}

inline double weighted_f(const Frame& f) {
  std::size_t fg = 0;
  for (auto v : f.gt) fg += v;
  if (fg == 0) {
    for (double v : f.pred) {
      if (v != 0.0) return 0.0;
    }
    return 1.0;
  }

  const std::size_t n = f.pred.size();
  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(f.pred[i] - double(f.gt[i]));

  std::vector<double> dist;
  std::vector<std::size_t> index;
  nearest_fg(f, dist, index);

  std::vector<double> moved(n);
  for (std::size_t i = 0; i < n; ++i) moved[i] = f.gt[i] ? err[i] : err[index[i]];
  const std::vector<double> smooth = blur7(moved, f.h, f.w);

  double err_fg = 0.0, err_bg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (f.gt[i]) {
      err_fg += std::min(err[i], smooth[i]);
    } else {
      err_bg += err[i] * (2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]));
    }
  }
  const double tp = double(fg) - err_fg;
  const double recall = 1.0 - err_fg / double(fg);
  const double precision = tp + err_bg > 0.0 ? tp / (tp + err_bg) : 0.0;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline double dispersion_score(const std::vector<double>& xs) {
  const double n = double(xs.size());
  double mean = 0.0;
  for (double v : xs) mean += v / n;
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sd + 1e-8);
}

inline double ssim_block(const Frame& f, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  const double n = double((y1 - y0) * (x1 - x0));
  double mp = 0.0, mg = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      mp += f.pred[y * f.w + x] / n;
      mg += double(f.gt[y * f.w + x]) / n;
    }
  }
  double vp = 0.0, vg = 0.0, cov = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      const double a = f.pred[y * f.w + x] - mp;
      const double b = double(f.gt[y * f.w + x]) - mg;
      vp += a * a;
      vg += b * b;
      cov += a * b;
    }
  }
  const double d = n - 1.0 + 1e-8;
  vp /= d;
  vg /= d;
  cov /= d;
  const double alpha = 4.0 * mp * mg * cov;
  const double beta = (mp * mp + mg * mg) * (vp + vg);
  if (alpha != 0.0) return alpha / (beta + 1e-8);
  return beta == 0.0 ? 1.0 : 0.0;
}

inline double s_measure(const Frame& f) {
  const std::size_t n = f.pred.size();
  std::size_t fg = 0;
  for (auto v : f.gt) fg += v;
  double mean = 0.0;
  for (double v : f.pred) mean += v / double(n);
  if (fg == 0) return 1.0 - mean;
  if (fg == n) return mean;

  // Object part: foreground uses S, background uses 1 - S.
  std::vector<double> on, off;
  for (std::size_t i = 0; i < n; ++i) {
    (f.gt[i] ? on : off).push_back(f.gt[i] ? f.pred[i] : 1.0 - f.pred[i]);
  }
  const double mu = double(fg) / double(n);
  const double object = mu * dispersion_score(on) + (1.0 - mu) * dispersion_score(off);

  // Region part: quadrants around the truncated 1-based centroid.
  std::size_t sx = 0, sy = 0;
  for (std::size_t y = 0; y < f.h; ++y) {
    for (std::size_t x = 0; x < f.w; ++x) {
      if (f.gt[y * f.w + x]) {
        sx += x + 1;
        sy += y + 1;
      }
    }
  }
  const std::size_t cx = sx / fg, cy = sy / fg;
  double region = 0.0;
  const std::size_t ys[3] = {0, cy, f.h};
  const std::size_t xs[3] = {0, cx, f.w};
  for (int qy = 0; qy < 2; ++qy) {
    for (int qx = 0; qx < 2; ++qx) {
      const std::size_t count = (ys[qy + 1] - ys[qy]) * (xs[qx + 1] - xs[qx]);
      if (count == 0) continue;
      region += double(count) / double(n) * ssim_block(f, ys[qy], ys[qy + 1], xs[qx], xs[qx + 1]);
    }
  }
  return std::clamp(0.5 * object + 0.5 * region, 0.0, 1.0);
}

}  // namespace oracle
