#pragma once

// Per-stage latency and FLOP accounting, emitted as aligned tables or CSV.
//
// Stage boundaries per sample:
//   contour_extract = decode + grayscale + Otsu + denoise (threshold_ms)
//                     + tracing + main-contour selection + approximation
//   matc            = thickness, cover, detection, simplification, optimisation
//   inference       = normalisation + one eval forward pass at batch size 1
// threshold_ms is a sub-column of contour_extract_ms, not a fourth stage.

#include "polygonet/pipeline.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace polygonet {

struct StageStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double std_ms = 0.0;
};

struct TimingRow {
  std::string dataset;
  std::string pipeline;
  double contour_extract_ms = 0.0;
  double matc_ms = 0.0;
  double inference_ms = 0.0;
  double total_ms = 0.0;  // exactly contour_extract_ms + matc_ms + inference_ms
  std::size_t samples = 0;
  double mean_points = 0.0;
  StageStats threshold, contour_extract, matc, inference;
};

struct ResultRow {
  std::string dataset;
  std::string method;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::uint64_t flops = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Times every image `repeats` times, discarding the first pass. Means are
/// rounded to whole nanoseconds so the emitted decimals add up exactly.
/// Images whose extraction fails are left out of every pass.
TimingRow time_pipeline(const std::vector<RawSample>& samples, Representation rep, const PreprocessParams& params,
                        Model<float>& model, int repeats, const std::string& dataset = "");

struct RunSummary {
  std::string dataset;
  std::string method;
  Metrics metrics;
  ModelConfig config;
  double mean_points = 0.0;
};

/// Sorted by (dataset, method); flops from count_flops_at(config, mean_points).
std::vector<ResultRow> result_table(const std::vector<RunSummary>& runs);

enum class ReportFormat { Table, Csv };
ReportFormat parse_report_format(const std::string& name);

/// Byte-identical output for identical rows. CSV fields never contain commas;
/// labels with a comma are rejected. Empty rows throw Precondition.
void emit_report(std::ostream& out, const std::vector<TimingRow>& rows, ReportFormat format);
void emit_report(std::ostream& out, const std::vector<ResultRow>& rows, ReportFormat format);
void emit_report(const std::string& path, const std::vector<TimingRow>& rows, ReportFormat format);
void emit_report(const std::string& path, const std::vector<ResultRow>& rows, ReportFormat format);

std::vector<ResultRow> read_result_csv(std::istream& in);

}  // namespace polygonet
