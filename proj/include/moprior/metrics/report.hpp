#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moprior/metrics/ssim.hpp"
#include "moprior/prior/prior.hpp"

namespace moprior {

/// Five-number summary plus the mean. Quantiles use linear interpolation on
/// the sorted values, so the median of an odd-length list is the middle one.
struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;

  static double quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double f = h - static_cast<double>(lo);
    return (1.0 - f) * sorted[lo] + f * sorted[hi];
  }

  static Summary of(std::vector<double> values) {
    if (values.empty()) throw ConfigError("Summary: empty value list");
    Summary s;
    double acc = 0.0;
    for (const double v : values) acc += v;
    s.mean = acc / static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    s.median = quantile(values, 0.5);
    s.q1 = quantile(values, 0.25);
    s.q3 = quantile(values, 0.75);
    return s;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"mean", mean}, {"median", median}, {"q1", q1},
                          {"q3", q3},     {"min", min},       {"max", max}};
  }

  static Summary from_json(const nlohmann::json& j) {
    Summary s;
    s.mean = j.at("mean").get<double>();
    s.median = j.at("median").get<double>();
    s.q1 = j.at("q1").get<double>();
    s.q3 = j.at("q3").get<double>();
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    return s;
  }
};

/// Per-slice SSIM lists for one method: input-vs-truth and output-vs-truth,
/// with aggregates recomputable from the lists.
struct EvalReport {
  std::string method;
  std::vector<std::string> sample_ids;
  std::vector<double> ssim_corrupted;
  std::vector<double> ssim_output;

  Summary corrupted_summary() const { return Summary::of(ssim_corrupted); }
  Summary output_summary() const { return Summary::of(ssim_output); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"method", method},
                          {"sample_ids", sample_ids},
                          {"ssim_corrupted", ssim_corrupted},
                          {"ssim_output", ssim_output},
                          {"corrupted_summary", corrupted_summary().to_json()},
                          {"output_summary", output_summary().to_json()}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    r.ssim_corrupted = j.at("ssim_corrupted").get<std::vector<double>>();
    r.ssim_output = j.at("ssim_output").get<std::vector<double>>();
    if (r.ssim_corrupted.size() != r.ssim_output.size() ||
        r.sample_ids.size() != r.ssim_output.size())
      throw ConfigError("EvalReport: list length mismatch");
    return r;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::write_failed, path.string());
    out << to_json().dump(2) << "\n";
  }
};

using Predictor = std::function<Image2D<float>(const SliceSample&)>;

inline Predictor identity_predictor() {
  return [](const SliceSample& s) { return s.corrupted; };
}

/// Evaluates one predictor over a sample list: per slice, SSIM of the raw
/// corrupted input against the truth and of the prediction against the truth.
inline EvalReport evaluate(const Predictor& predict, const std::vector<SliceSample>& samples,
                           const SsimParams& params, std::string label) {
  if (samples.empty()) throw ConfigError("evaluate: sample list must be non-empty");
  EvalReport r;
  r.method = std::move(label);
  for (const SliceSample& s : samples) {
    r.sample_ids.push_back(s.subject_id + "#" + std::to_string(s.slice_index));
    r.ssim_corrupted.push_back(ssim_mean(s.corrupted, s.target, params));
    const Image2D<float> pred = predict(s);
    r.ssim_output.push_back(ssim_mean(pred, s.target, params));
  }
  return r;
}

struct ComparisonRow {
  std::string method;
  Summary output;
};

struct MedianDiff {
  std::string method_a;
  std::string method_b;
  double diff = 0.0; // median(a) - median(b)
};

/// Per-method five-number summaries plus pairwise median differences.
/// All reports must cover the same sample set.
struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<MedianDiff> median_diffs;
};

inline Comparison aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("aggregate: no reports");
  for (const EvalReport& r : reports)
    if (r.sample_ids != reports.front().sample_ids)
      throw ConfigError("aggregate: reports cover different sample sets");

  Comparison c;
  for (const EvalReport& r : reports)
    c.rows.push_back(ComparisonRow{r.method, r.output_summary()});
  for (std::size_t a = 0; a < c.rows.size(); ++a)
    for (std::size_t b = a + 1; b < c.rows.size(); ++b)
      c.median_diffs.push_back(MedianDiff{c.rows[a].method, c.rows[b].method,
                                          c.rows[a].output.median - c.rows[b].output.median});
  return c;
}

inline void write_comparison_csv(const Comparison& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, path.string());
  out << "method,mean,median,q1,q3,min,max\n";
  char buf[256];
  for (const ComparisonRow& r : c.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.method.c_str(),
                  r.output.mean, r.output.median, r.output.q1, r.output.q3, r.output.min,
                  r.output.max);
    out << buf;
  }
}

inline Comparison read_comparison_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrc::unreadable, path.string());
  Comparison c;
  std::string line;
  std::getline(in, line); // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ComparisonRow r;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) throw IoError(IoErrc::unreadable, "bad comparison row");
    r.method = line.substr(0, comma);
    if (std::sscanf(line.c_str() + comma + 1, "%lf,%lf,%lf,%lf,%lf,%lf", &r.output.mean,
                    &r.output.median, &r.output.q1, &r.output.q3, &r.output.min,
                    &r.output.max) != 6)
      throw IoError(IoErrc::unreadable, "bad comparison row: " + line);
    c.rows.push_back(std::move(r));
  }
  return c;
}

inline void write_median_diffs_csv(const Comparison& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, path.string());
  out << "method_a,method_b,median_diff\n";
  char buf[256];
  for (const MedianDiff& d : c.median_diffs) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9g\n", d.method_a.c_str(), d.method_b.c_str(), d.diff);
    out << buf;
  }
}

} // namespace moprior
