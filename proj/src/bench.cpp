#include "polygonet/bench.hpp"
#include "polygonet/error.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

namespace polygonet {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Keeps the compiler from sinking work across a clock read.
void fence() { std::atomic_signal_fence(std::memory_order_seq_cst); }

double round_ns(double ms) { return static_cast<double>(std::llround(ms * 1e6)) / 1e6; }

StageStats stats(std::vector<double> v) {
  StageStats s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  const double median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  s.mean_ms = round_ns(mean);
  s.median_ms = round_ns(median);
  s.std_ms = round_ns(v.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0);
  return s;
}

// Milliseconds with six decimals, formatted from whole nanoseconds so sums of
// printed values equal printed sums.
std::string fixed_ms(double ms) {
  const long long ns = std::llround(ms * 1e6);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%06lld", ns < 0 ? "-" : "", std::llabs(ns) / 1000000, std::llabs(ns) % 1000000);
  return buf;
}

std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// Up to four decimals without trailing zeros, for the aligned table.
std::string short_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

void check_label(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos)
    throw Error(ErrorCode::Config, "report label contains a comma or newline: " + s);
}

void write_table(std::ostream& out, const std::vector<std::vector<std::string>>& cells, std::size_t text_columns) {
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      const std::string pad(width[c] - row[c].size(), ' ');
      line += c < text_columns ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

void write_csv(std::ostream& out, const std::vector<std::vector<std::string>>& cells) {
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
}

template <class Row>
void emit_to_path(const std::string& path, const std::vector<Row>& rows, ReportFormat format) {
  std::ostringstream buf;
  emit_report(buf, rows, format);
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << buf.str()) || !out.flush()) throw Error(ErrorCode::Io, "cannot write report " + path);
}

}  // namespace

TimingRow time_pipeline(const std::vector<RawSample>& samples, Representation rep, const PreprocessParams& params,
                        Model<float>& model, int repeats, const std::string& dataset) {
  if (samples.empty()) throw Error(ErrorCode::Config, "timing needs at least one sample");
  if (repeats < 3) throw Error(ErrorCode::Config, "timing needs at least 3 repeats");
  const bool dominant = rep == Representation::DominantPoints;

  std::vector<double> threshold, extract, matc, inference;
  std::vector<bool> usable(samples.size(), true);
  double points_total = 0.0;
  std::size_t points_count = 0;

  for (int pass = 0; pass < repeats; ++pass) {
    const bool warmup = pass == 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!usable[i]) continue;
      PointList points;
      int width = 0, height = 0;
      Clock::time_point t0, t1, t2, t3, t4;
      try {
        t0 = Clock::now();
        fence();
        const Image img = samples[i].load();
        const BinaryImage mask = foreground_mask(img, params.matc);
        fence();
        t1 = Clock::now();
        fence();
        const Contour contour = main_contour(mask, params.matc);
        if (!dominant) points = approximate(contour, approx_mode(rep), params.tc89).points;
        fence();
        t2 = Clock::now();
        fence();
        if (dominant) points = dominant_points_from_contour(contour, params.matc).points;
        fence();
        t3 = Clock::now();
        width = img.width;
        height = img.height;
      } catch (const Error&) {
        if (!warmup) throw;
        usable[i] = false;
        continue;
      }
      if (points.size() < 3) {
        usable[i] = false;
        continue;
      }
      fence();
      PointSequence seq{normalize_points(points, width, height), samples[i].label};
      const Matrix<float> logits = model.forward(make_batch<float>(std::span<const PointSequence>(&seq, 1)), Mode::Eval);
      fence();
      t4 = Clock::now();
      if (!std::isfinite(logits(0, 0))) throw Error(ErrorCode::Precondition, "non-finite logits while timing");
      if (warmup) {
        points_total += static_cast<double>(points.size());
        ++points_count;
        continue;
      }
      threshold.push_back(elapsed_ms(t0, t1));
      extract.push_back(elapsed_ms(t0, t2));
      matc.push_back(dominant ? elapsed_ms(t2, t3) : 0.0);
      inference.push_back(elapsed_ms(t3, t4));
    }
  }
  if (extract.empty()) throw Error(ErrorCode::EmptyDataset, "no sample could be timed");

  TimingRow row;
  row.dataset = dataset;
  row.pipeline = to_string(rep);
  row.samples = extract.size();
  row.mean_points = points_total / static_cast<double>(points_count);
  row.threshold = stats(std::move(threshold));
  row.contour_extract = stats(std::move(extract));
  row.matc = stats(std::move(matc));
  row.inference = stats(std::move(inference));
  row.contour_extract_ms = row.contour_extract.mean_ms;
  row.matc_ms = row.matc.mean_ms;
  row.inference_ms = row.inference.mean_ms;
  row.total_ms = row.contour_extract_ms + row.matc_ms + row.inference_ms;
  return row;
}

std::vector<ResultRow> result_table(const std::vector<RunSummary>& runs) {
  std::vector<ResultRow> rows;
  for (const auto& r : runs) {
    rows.push_back({r.dataset, r.method, r.metrics.macro_f1, r.metrics.accuracy,
                    static_cast<std::uint64_t>(std::llround(count_flops_at(r.config, r.mean_points)))});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.dataset, a.method) < std::tie(b.dataset, b.method);
  });
  return rows;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "table") return ReportFormat::Table;
  if (name == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::Config, "unknown report format '" + name + "' (expected table or csv)");
}

void emit_report(std::ostream& out, const std::vector<TimingRow>& rows, ReportFormat format) {
  if (rows.empty()) throw Error(ErrorCode::Precondition, "no timing rows to report");
  std::vector<std::vector<std::string>> cells;
  if (format == ReportFormat::Csv) {
    cells.push_back({"dataset", "pipeline", "samples", "mean_points", "contour_extract_ms", "matc_ms", "inference_ms",
                     "total_ms", "threshold_ms", "contour_extract_median_ms", "matc_median_ms",
                     "inference_median_ms", "contour_extract_std_ms", "matc_std_ms", "inference_std_ms",
                     "threshold_std_ms"});
  } else {
    cells.push_back({"Dataset", "Pipeline", "Samples", "Points", "Contour Extract (ms)", "MATC (ms)",
                     "Inference (ms)", "Total Time (ms)", "of which threshold (ms)"});
  }
  for (const auto& r : rows) {
    check_label(r.dataset);
    check_label(r.pipeline);
    if (format == ReportFormat::Csv) {
      cells.push_back({r.dataset, r.pipeline, std::to_string(r.samples), shortest(r.mean_points),
                       fixed_ms(r.contour_extract_ms), fixed_ms(r.matc_ms), fixed_ms(r.inference_ms),
                       fixed_ms(r.total_ms), fixed_ms(r.threshold.mean_ms), fixed_ms(r.contour_extract.median_ms),
                       fixed_ms(r.matc.median_ms), fixed_ms(r.inference.median_ms),
                       fixed_ms(r.contour_extract.std_ms), fixed_ms(r.matc.std_ms), fixed_ms(r.inference.std_ms),
                       fixed_ms(r.threshold.std_ms)});
    } else {
      char pts[32];
      std::snprintf(pts, sizeof pts, "%.1f", r.mean_points);
      auto cell = [](const StageStats& s) { return fixed_ms(s.mean_ms) + " +- " + fixed_ms(s.std_ms); };
      cells.push_back({r.dataset, r.pipeline, std::to_string(r.samples), pts, cell(r.contour_extract), cell(r.matc),
                       cell(r.inference), fixed_ms(r.total_ms), fixed_ms(r.threshold.mean_ms)});
    }
  }
  if (format == ReportFormat::Csv)
    write_csv(out, cells);
  else
    write_table(out, cells, 2);
}

void emit_report(std::ostream& out, const std::vector<ResultRow>& rows, ReportFormat format) {
  if (rows.empty()) throw Error(ErrorCode::Precondition, "no result rows to report");
  std::vector<std::vector<std::string>> cells;
  cells.push_back(format == ReportFormat::Csv
                      ? std::vector<std::string>{"dataset", "method", "f1", "accuracy", "flops"}
                      : std::vector<std::string>{"Dataset", "Method", "F1-score", "Accuracy", "FLOPs"});
  for (const auto& r : rows) {
    check_label(r.dataset);
    check_label(r.method);
    const bool csv = format == ReportFormat::Csv;
    cells.push_back({r.dataset, r.method, csv ? shortest(r.f1) : short_metric(r.f1),
                     csv ? shortest(r.accuracy) : short_metric(r.accuracy), std::to_string(r.flops)});
  }
  if (format == ReportFormat::Csv)
    write_csv(out, cells);
  else
    write_table(out, cells, 2);
}

void emit_report(const std::string& path, const std::vector<TimingRow>& rows, ReportFormat format) {
  emit_to_path(path, rows, format);
}

void emit_report(const std::string& path, const std::vector<ResultRow>& rows, ReportFormat format) {
  emit_to_path(path, rows, format);
}

std::vector<ResultRow> read_result_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != "dataset,method,f1,accuracy,flops")
    throw Error(ErrorCode::Decode, "result CSV header mismatch");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
    if (f.size() != 5) throw Error(ErrorCode::Decode, "result CSV row needs 5 fields: " + line);
    ResultRow r{f[0], f[1]};
    auto parse = [&](const std::string& s, auto& v) {
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::Decode, "bad number '" + s + "' in result CSV");
    };
    parse(f[2], r.f1);
    parse(f[3], r.accuracy);
    parse(f[4], r.flops);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace polygonet
