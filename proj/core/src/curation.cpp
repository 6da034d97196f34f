#include "bistream/curation.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace bistream {

namespace {

constexpr const char* kHeader = "image_id,source,category,dirty";

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw std::invalid_argument("manifest line " + std::to_string(line) + ": " + what);
}

SourceDataset parse_source(std::size_t line, const std::string& text) {
  if (text == "MSRA10K") return SourceDataset::Msra10k;
  if (text == "DUTS-TR" || text == "DUTS_TR") return SourceDataset::DutsTr;
  if (text == "OTHER") return SourceDataset::Other;
  parse_error(line, "unknown source '" + text + "'");
}

std::vector<std::string> split_fields(const std::string& row) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : row) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string to_string(SourceDataset source) {
  switch (source) {
    case SourceDataset::Msra10k: return "MSRA10K";
    case SourceDataset::DutsTr: return "DUTS-TR";
    case SourceDataset::Other: return "OTHER";
  }
  throw std::invalid_argument("unknown source dataset");
}

std::vector<ManifestRecord> parse_manifest(std::istream& in) {
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (!have_header) {
      if (line != kHeader) parse_error(line_no, "expected header \"" + std::string(kHeader) + "\"");
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != 4) parse_error(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    ManifestRecord record;
    record.image_id = fields[0];
    if (record.image_id.empty()) parse_error(line_no, "empty image_id");
    if (!seen.insert(record.image_id).second) parse_error(line_no, "duplicate image_id '" + record.image_id + "'");
    record.source = parse_source(line_no, fields[1]);
    record.category = fields[2];
    if (record.category.empty()) parse_error(line_no, "empty category");
    if (fields[3] == "0") {
      record.dirty = false;
    } else if (fields[3] == "1") {
      record.dirty = true;
    } else {
      parse_error(line_no, "dirty flag must be 0 or 1, got '" + fields[3] + "'");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, std::span<const ManifestRecord> records) {
  out << kHeader << '\n';
  for (const ManifestRecord& r : records) {
    out << r.image_id << ',' << to_string(r.source) << ',' << r.category << ',' << (r.dirty ? '1' : '0') << '\n';
  }
  if (!out) throw std::runtime_error("manifest write failed");
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot create " + path.string());
  write_manifest(out, records);
}

std::vector<ManifestRecord> clean(std::vector<ManifestRecord> records) {
  std::erase_if(records, [](const ManifestRecord& r) { return r.dirty; });
  return records;
}

CategoryDistribution histogram(std::span<const ManifestRecord> records) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const ManifestRecord& r : records) ++counts[r.category];
  CategoryDistribution dist;
  dist.total = records.size();
  dist.ordered.reserve(counts.size());
  for (auto& [category, count] : counts) dist.ordered.push_back({category, count});
  std::sort(dist.ordered.begin(), dist.ordered.end(), [](const CategoryCount& a, const CategoryCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.category < b.category;
  });
  return dist;
}

double pareto_report(const CategoryDistribution& distribution, std::size_t k) {
  if (k < 1 || k > distribution.ordered.size()) {
    throw std::invalid_argument("pareto_report: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(distribution.ordered.size()) + "]");
  }
  std::size_t covered = 0;
  for (std::size_t i = 0; i < k; ++i) covered += distribution.ordered[i].count;
  return static_cast<double>(covered) / static_cast<double>(distribution.total);
}

std::vector<ManifestRecord> balanced_sample(std::span<const ManifestRecord> records, const SamplingPlan& plan) {
  if (records.empty()) throw std::invalid_argument("balanced_sample: empty manifest");
  if (plan.k_top == 0 || plan.quota_top == 0 || plan.quota_rest == 0) {
    throw std::invalid_argument("balanced_sample: k_top and quotas must be positive");
  }
  const CategoryDistribution dist = histogram(records);
  if (plan.k_top > dist.ordered.size()) {
    throw std::invalid_argument("balanced_sample: k_top = " + std::to_string(plan.k_top) + " exceeds the " +
                                std::to_string(dist.ordered.size()) + " categories present");
  }

  std::unordered_map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) members[records[i].category].push_back(i);

  // One generator drives every category shuffle in histogram order, so
  // the draw is a pure function of (records, plan).
  std::mt19937_64 rng(plan.seed);
  std::vector<bool> selected(records.size(), false);
  for (std::size_t c = 0; c < dist.ordered.size(); ++c) {
    const std::size_t quota = c < plan.k_top ? plan.quota_top : plan.quota_rest;
    std::vector<std::size_t>& pool = members[dist.ordered[c].category];
    // Explicit Fisher-Yates rather than std::shuffle: the exact swap
    // sequence is part of the reproducibility contract.
    for (std::size_t i = pool.size(); i-- > 1;) {
      const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(pool[i], pool[j]);
    }
    const std::size_t take = std::min(quota, pool.size());
    for (std::size_t i = 0; i < take; ++i) selected[pool[i]] = true;
  }

  std::vector<ManifestRecord> result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (selected[i]) result.push_back(records[i]);
  }
  return result;
}

}  // namespace bistream
