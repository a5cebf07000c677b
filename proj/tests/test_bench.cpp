#include <doctest.h>

#include "polygonet/bench.hpp"
#include "polygonet/error.hpp"

#include <sstream>

using namespace polygonet;

namespace {

// Hollow dark square on white; `side` in pixels, centred in a 28x28 image.
Image square_image(int side) {
  Image img{28, 28, 1, std::vector<std::uint8_t>(28 * 28, 230)};
  const int lo = (28 - side) / 2;
  for (int y = lo; y < lo + side; ++y)
    for (int x = lo; x < lo + side; ++x) img.pixels[static_cast<std::size_t>(y) * 28 + x] = 20;
  return img;
}

std::vector<RawSample> samples() {
  std::vector<RawSample> out;
  for (int side : {10, 14, 18, 22}) {
    RawSample s;
    s.source = "square" + std::to_string(side);
    s.image = square_image(side);
    out.push_back(std::move(s));
  }
  RawSample blank;
  blank.image = Image{28, 28, 1, std::vector<std::uint8_t>(28 * 28, 0)};
  out.push_back(std::move(blank));
  return out;
}

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 8;
  c.num_heads = 2;
  c.conv_channels = {8};
  c.num_classes = 3;
  return c;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
  return out;
}

long long decimal_ns(const std::string& s) {
  const auto dot = s.find('.');
  REQUIRE(dot != std::string::npos);
  REQUIRE(s.size() - dot == 7);
  return std::stoll(s.substr(0, dot)) * 1000000 + std::stoll(s.substr(dot + 1));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("timing rows add up and skip absent stages") {
  Model<float> model(tiny(), 1);
  const auto data = samples();
  const TimingRow contours = time_pipeline(data, Representation::ContoursSimple, {}, model, 3, "squares");
  CHECK(contours.matc_ms == 0.0);
  CHECK(contours.matc.std_ms == 0.0);
  CHECK(contours.total_ms == contours.contour_extract_ms + contours.matc_ms + contours.inference_ms);
  CHECK(contours.samples == 8);  // blank image dropped; two timed passes
  CHECK(contours.mean_points == 4.0);
  CHECK(contours.pipeline == "contours-simple");
  CHECK(contours.threshold.mean_ms <= contours.contour_extract_ms);
  CHECK(contours.contour_extract_ms > 0.0);

  const TimingRow dominant = time_pipeline(data, Representation::DominantPoints, {}, model, 4, "squares");
  CHECK(dominant.matc_ms > 0.0);
  CHECK(dominant.total_ms == dominant.contour_extract_ms + dominant.matc_ms + dominant.inference_ms);
  CHECK(dominant.samples == 12);

  CHECK(code_of([&] { time_pipeline({}, Representation::ContoursNone, {}, model, 3); }) == ErrorCode::Config);
  CHECK(code_of([&] { time_pipeline(data, Representation::ContoursNone, {}, model, 2); }) == ErrorCode::Config);

  std::ostringstream csv;
  emit_report(csv, std::vector<TimingRow>{contours, dominant}, ReportFormat::Csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  const auto header = split(line, ',');
  CHECK(header[4] == "contour_extract_ms");
  CHECK(header[7] == "total_ms");
  int rows = 0;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    REQUIRE(f.size() == header.size());
    CHECK(decimal_ns(f[4]) + decimal_ns(f[5]) + decimal_ns(f[6]) == decimal_ns(f[7]));
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("result table") {
  Metrics m;
  m.accuracy = 0.83;
  m.macro_f1 = 0.91;
  ModelConfig cfg;
  std::vector<RunSummary> runs{{"fmnist", "polygonet-dp", m, cfg, 12.0},
                               {"flavia", "polygonet-contours", m, cfg, 60.0},
                               {"fmnist", "polygonet-contours", m, cfg, 20.5}};
  const auto rows = result_table(runs);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].dataset == "flavia");
  CHECK(rows[1].method == "polygonet-contours");
  CHECK(rows[2].method == "polygonet-dp");
  CHECK(rows[0].flops == count_flops(cfg, 60));
  CHECK(rows[2].flops == count_flops(cfg, 12));
  CHECK(rows[1].flops == static_cast<std::uint64_t>(std::llround(count_flops_at(cfg, 20.5))));

  std::ostringstream table;
  emit_report(table, rows, ReportFormat::Table);
  std::istringstream tin(table.str());
  std::string header, first;
  std::getline(tin, header);
  std::getline(tin, first);
  std::istringstream words(first);
  std::vector<std::string> w{std::istream_iterator<std::string>(words), {}};
  CHECK(w == std::vector<std::string>{"flavia", "polygonet-contours", "0.91", "0.83", std::to_string(rows[0].flops)});

  std::stringstream csv;
  emit_report(csv, rows, ReportFormat::Csv);
  CHECK(read_result_csv(csv) == rows);

  std::ostringstream a, b;
  emit_report(a, rows, ReportFormat::Csv);
  emit_report(b, rows, ReportFormat::Csv);
  CHECK(a.str() == b.str());
}

TEST_CASE("report errors") {
  CHECK(code_of([] {
          std::ostringstream out;
          emit_report(out, std::vector<ResultRow>{}, ReportFormat::Csv);
        }) == ErrorCode::Precondition);
  CHECK(code_of([] {
          std::ostringstream out;
          emit_report(out, std::vector<TimingRow>{}, ReportFormat::Table);
        }) == ErrorCode::Precondition);
  const std::vector<ResultRow> rows{{"a", "b", 0.5, 0.5, 10}};
  CHECK(code_of([&] { emit_report("/nonexistent-dir/report.csv", rows, ReportFormat::Csv); }) == ErrorCode::Io);
  const std::vector<ResultRow> comma{{"a,b", "c", 0.5, 0.5, 10}};
  CHECK(code_of([&] {
          std::ostringstream out;
          emit_report(out, comma, ReportFormat::Csv);
        }) == ErrorCode::Config);
  CHECK(parse_report_format("csv") == ReportFormat::Csv);
  CHECK(code_of([] { parse_report_format("xml"); }) == ErrorCode::Config);
}
