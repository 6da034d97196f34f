#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bistream {

enum class SourceDataset { Msra10k, DutsTr, Other };

/// One manifest row: a labelled training image and its dirty flag
/// (inaccurate annotation, occlusion or other defect worth excluding).
struct ManifestRecord {
  std::string image_id;
  SourceDataset source = SourceDataset::Other;
  std::string category;
  bool dirty = false;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct CategoryCount {
  std::string category;
  std::size_t count;

  friend bool operator==(const CategoryCount&, const CategoryCount&) = default;
};

/// Category histogram ordered by descending count; equal counts order
/// lexicographically by name.
struct CategoryDistribution {
  std::vector<CategoryCount> ordered;
  std::size_t total = 0;
};

/// Quotas for category-balanced subsampling: the quota_top cap applies to
/// the k_top most frequent categories, quota_rest to the remainder.
/// k_top must not exceed the number of categories and all three counts
/// must be positive.
struct SamplingPlan {
  std::size_t k_top = 50;
  std::size_t quota_top = 40;
  std::size_t quota_rest = 20;
  std::uint64_t seed = 0;
};

/// Parses the manifest CSV "image_id,source,category,dirty". Sources are
/// MSRA10K, DUTS-TR (DUTS_TR is accepted) or OTHER; dirty is 0 or 1.
/// Duplicate ids, empty fields and malformed rows raise invalid_argument
/// naming the offending line. An empty stream is an empty manifest.
std::vector<ManifestRecord> parse_manifest(std::istream& in);
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);

/// Writes the same CSV layout, sources in canonical spelling.
void write_manifest(std::ostream& out, std::span<const ManifestRecord> records);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

/// Drops every record whose dirty flag is set; order is preserved.
std::vector<ManifestRecord> clean(std::vector<ManifestRecord> records);

/// Counts records per category.
CategoryDistribution histogram(std::span<const ManifestRecord> records);

/// Fraction of all records covered by the k most frequent categories;
/// k must satisfy 1 <= k <= category count.
double pareto_report(const CategoryDistribution& distribution, std::size_t k);

/// Draws up to quota records per category, uniformly without replacement,
/// seeded by the plan. Categories are visited in histogram order and each
/// is shuffled by an in-place Fisher-Yates pass driven by one mt19937_64
/// stream, so equal seeds reproduce the exact same subset on any
/// platform. Categories smaller than their quota contribute everything
/// they have. The result preserves the input order.
std::vector<ManifestRecord> balanced_sample(std::span<const ManifestRecord> records, const SamplingPlan& plan);

std::string to_string(SourceDataset source);

}  // namespace bistream
