// Command-line front end: dataset curation, metric evaluation, gradient
// reports, toy training and inference. Exit codes: 0 success, 1 invalid
// flags or inputs, 2 runtime failure. Diagnostics go to stderr; results go
// to files or stdout. Every command is deterministic, so equal invocations
// produce byte-identical artifacts.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "bistream/check_suite.hpp"
#include "bistream/curation.hpp"
#include "bistream/fusion.hpp"
#include "bistream/image_io.hpp"
#include "bistream/metrics.hpp"
#include "bistream/model.hpp"
#include "bistream/tensor.hpp"

namespace {

namespace fs = std::filesystem;
using namespace bistream;

Tensor image_to_input(const GrayImage& image) {
  // The network expects three channels; grey input is replicated.
  const std::size_t plane = image.width * image.height;
  std::vector<double> values(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double v = image.pixels[i] / 255.0;
    values[i] = v;
    values[plane + i] = v;
    values[2 * plane + i] = v;
  }
  return Tensor::from({3, image.height, image.width}, std::move(values));
}

GrayImage map_to_image(std::span<const double> values, std::size_t height, std::size_t width) {
  GrayImage image{width, height, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    image.pixels[i] = static_cast<std::uint8_t>(std::lround(values[i] * 255.0));
  }
  return image;
}

GrayImage feature_to_image(const Tensor& map) {
  // Branch projections are unbounded; stretch to [0, 1] for inspection.
  double lo = map[0], hi = map[0];
  for (double v : map.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> scaled(map.values().begin(), map.values().end());
  for (double& v : scaled) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return map_to_image(scaled, map.extent(1), map.extent(2));
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::vector<TrainSample> load_dataset(const fs::path& image_dir, const fs::path& mask_dir) {
  std::vector<TrainSample> samples;
  for (const fs::path& path : list_images(image_dir)) {
    const fs::path mask_path = mask_dir / path.filename();
    if (!fs::exists(mask_path)) {
      throw std::invalid_argument("no mask for " + path.filename().string() + " in " + mask_dir.string());
    }
    const GrayImage image = read_gray_image(path);
    const GroundTruthMask mask = GroundTruthMask::from_image(read_gray_image(mask_path));
    std::vector<double> target(mask.values().begin(), mask.values().end());
    samples.push_back({image_to_input(image), Tensor::from({1, mask.height(), mask.width()}, std::move(target))});
  }
  if (samples.empty()) throw std::invalid_argument("no .pgm or .png images in " + image_dir.string());
  return samples;
}

std::vector<double> parse_range(const std::string& text) {
  // start:stop:step, inclusive start, exclusive stop.
  const auto first = text.find(':');
  const auto second = text.find(':', first + 1);
  if (first == std::string::npos || second == std::string::npos || text.find(':', second + 1) != std::string::npos) {
    throw std::invalid_argument("range must be start:stop:step, got '" + text + "'");
  }
  double start = 0.0, stop = 0.0, step = 0.0;
  try {
    std::size_t a = 0, b = 0, c = 0;
    start = std::stod(text.substr(0, first), &a);
    stop = std::stod(text.substr(first + 1, second - first - 1), &b);
    step = std::stod(text.substr(second + 1), &c);
    if (a != first || b != second - first - 1 || c != text.size() - second - 1) {
      throw std::invalid_argument("trailing characters");
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("range must be three numbers start:stop:step, got '" + text + "'");
  }
  if (!(step > 0.0)) throw std::invalid_argument("range step must be positive");
  if (!(stop > start)) throw std::invalid_argument("range stop must exceed start");
  std::vector<double> xs;
  for (std::size_t i = 0;; ++i) {
    const double x = start + static_cast<double>(i) * step;
    if (x >= stop) break;
    xs.push_back(x);
  }
  return xs;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot create " + path);
  return out;
}

struct CurateOpts {
  std::string manifest, out;
  std::size_t k_top = 50, quota_top = 40, quota_rest = 20;
  std::uint64_t seed = 0;
};

void add_curate(CLI::App& app) {
  auto* cmd = app.add_subcommand("curate", "Clean a manifest and draw a category-balanced subset");
  auto opts = std::make_shared<CurateOpts>();
  cmd->add_option("--manifest", opts->manifest, "Input manifest CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--k-top", opts->k_top, "Number of head categories")->capture_default_str();
  cmd->add_option("--quota-top", opts->quota_top, "Per-category cap for head categories")->capture_default_str();
  cmd->add_option("--quota-rest", opts->quota_rest, "Per-category cap for tail categories")->capture_default_str();
  cmd->add_option("--seed", opts->seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--out", opts->out, "Balanced manifest destination")->required();
  cmd->callback([opts] {
    const std::vector<ManifestRecord> cleaned = clean(load_manifest(opts->manifest));
    const SamplingPlan plan{opts->k_top, opts->quota_top, opts->quota_rest, opts->seed};
    const std::vector<ManifestRecord> selected = balanced_sample(cleaned, plan);
    write_manifest(fs::path(opts->out), selected);
    const CategoryDistribution dist = histogram(cleaned);
    std::cout << "top-" << opts->k_top << " coverage: ";
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.4f", pareto_report(dist, opts->k_top));
    std::cout << buffer << '\n';
    std::cout << "selected " << selected.size() << " of " << cleaned.size() << " clean records\n";
  });
}

struct EvalOpts {
  std::string pred, gt, out, curve;
  unsigned threads = 1;
};

void add_eval(CLI::App& app, bool curves_only) {
  auto* cmd = curves_only
                  ? app.add_subcommand("curves", "Emit the precision/recall curve of a prediction directory")
                  : app.add_subcommand("eval", "Score a prediction directory against ground truth");
  auto opts = std::make_shared<EvalOpts>();
  cmd->add_option("--pred", opts->pred, "Directory of predicted maps")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--gt", opts->gt, "Directory of ground-truth masks")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--out", opts->out, curves_only ? "Curve CSV destination" : "Report JSON destination")->required();
  if (!curves_only) cmd->add_option("--curve", opts->curve, "Also write the curve CSV here");
  cmd->add_option("--threads", opts->threads, "Worker threads (result is identical for any value)")
      ->capture_default_str();
  cmd->callback([opts, curves_only] {
    const MetricReport report = evaluate_dataset(opts->pred, opts->gt, opts->threads);
    for (const std::string& error : report.errors) std::cerr << "skipped " << error << '\n';
    if (curves_only) {
      auto out = open_output(opts->out);
      write_curve_csv(out, report);
      return;
    }
    auto out = open_output(opts->out);
    write_report_json(out, report);
    if (!opts->curve.empty()) {
      auto curve = open_output(opts->curve);
      write_curve_csv(curve, report);
    }
  });
}

struct GradcheckOpts {
  std::uint64_t seed = 1;
  std::string out;
};

void add_gradcheck(CLI::App& app) {
  auto* cmd = app.add_subcommand("gradcheck", "Run the analytic-vs-finite-difference gradient suite");
  auto opts = std::make_shared<GradcheckOpts>();
  cmd->add_option("--seed", opts->seed, "Seed for the random probe inputs")->capture_default_str();
  cmd->add_option("--out", opts->out, "Write the table here instead of stdout");
  cmd->callback([opts] {
    const std::vector<CheckResult> results = run_gradient_checks(opts->seed);
    if (opts->out.empty()) {
      write_check_table(std::cout, results);
    } else {
      auto out = open_output(opts->out);
      write_check_table(out, results);
    }
    std::size_t failures = 0;
    for (const CheckResult& r : results) failures += r.pass ? 0 : 1;
    if (failures > 0) throw std::runtime_error(std::to_string(failures) + " gradient checks failed");
  });
}

struct GateReportOpts {
  std::string xs, out;
};

void add_gatereport(CLI::App& app) {
  auto* cmd = app.add_subcommand("gatereport", "Tabulate the gate derivative comparison over a range of inputs");
  auto opts = std::make_shared<GateReportOpts>();
  cmd->add_option("--xs", opts->xs, "Sample range start:stop:step (inclusive start, exclusive stop)")->required();
  cmd->add_option("--out", opts->out, "CSV destination")->required();
  cmd->callback([opts] {
    const std::vector<double> xs = parse_range(opts->xs);
    const std::vector<GateGradientRow> rows = gate_gradient_report(xs);
    auto out = open_output(opts->out);
    write_gate_gradient_csv(out, rows);
  });
}

struct TrainOpts {
  std::string images, masks, out, loss_out;
  std::size_t synthetic = 4, size = 64;
  TrainConfig cfg;
};

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train the toy two-branch network");
  auto opts = std::make_shared<TrainOpts>();
  cmd->add_option("--images", opts->images, "Directory of training images (default: synthetic blobs)")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--masks", opts->masks, "Directory of masks matching --images")->check(CLI::ExistingDirectory);
  cmd->add_option("--synthetic", opts->synthetic, "Synthetic sample count")->capture_default_str();
  cmd->add_option("--size", opts->size, "Synthetic image size (multiple of 16)")->capture_default_str();
  cmd->add_option("--iters", opts->cfg.iterations, "Training iterations")->capture_default_str();
  cmd->add_option("--batch", opts->cfg.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", opts->cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--momentum", opts->cfg.momentum, "Momentum coefficient")->capture_default_str();
  cmd->add_option("--weight-decay", opts->cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--seed", opts->cfg.seed, "Seed for initialisation and the shuffle schedule")
      ->capture_default_str();
  cmd->add_option("--out", opts->out, "Checkpoint destination")->required();
  cmd->add_option("--loss-out", opts->loss_out, "Loss history CSV destination");
  cmd->callback([opts] {
    if (opts->images.empty() != opts->masks.empty()) {
      throw std::invalid_argument("--images and --masks must be given together");
    }
    const std::vector<TrainSample> dataset = opts->images.empty()
                                                 ? make_blob_dataset(opts->synthetic, opts->size, opts->cfg.seed)
                                                 : load_dataset(opts->images, opts->masks);
    BiStreamNet net = build(opts->cfg.seed);
    const TrainResult result = train(net, dataset, opts->cfg);
    save_checkpoint(fs::path(opts->out), net);
    if (!opts->loss_out.empty()) {
      auto out = open_output(opts->loss_out);
      write_loss_csv(out, result.loss_history);
    }
    std::cout.precision(17);
    std::cout << "loss " << result.loss_history.front() << " -> " << result.loss_history.back() << " over "
              << result.loss_history.size() << " iterations\n";
  });
}

struct InferOpts {
  std::string checkpoint, image, out, plain_out, residual_out;
};

void add_infer(CLI::App& app) {
  auto* cmd = app.add_subcommand("infer", "Predict a saliency map with a trained checkpoint");
  auto opts = std::make_shared<InferOpts>();
  cmd->add_option("--checkpoint", opts->checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--image", opts->image, "Input image (.pgm or .png)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", opts->out, "Predicted map destination (PGM)")->required();
  cmd->add_option("--plain-out", opts->plain_out, "Plain-branch stage-5 projection (PGM)");
  cmd->add_option("--residual-out", opts->residual_out, "Residual-branch stage-5 projection (PGM)");
  cmd->callback([opts] {
    const BiStreamNet net = load_checkpoint(fs::path(opts->checkpoint));
    const Tensor input = image_to_input(read_gray_image(opts->image));
    const InferenceResult result = infer(net, input);
    write_pgm(fs::path(opts->out),
              map_to_image(result.saliency.values(), result.saliency.height(), result.saliency.width()));
    if (!opts->plain_out.empty()) write_pgm(fs::path(opts->plain_out), feature_to_image(result.plain_stage5));
    if (!opts->residual_out.empty()) {
      write_pgm(fs::path(opts->residual_out), feature_to_image(result.residual_stage5));
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated bi-stream saliency toolkit"};
  app.require_subcommand(1);
  add_curate(app);
  add_eval(app, /*curves_only=*/false);
  add_eval(app, /*curves_only=*/true);
  add_gradcheck(app);
  add_gatereport(app);
  add_train(app);
  add_infer(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
