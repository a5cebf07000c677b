// Command-line front end: preprocess, train, eval, bench, inspect.
//
// Every option lives on the root command so one flat key=value file serves
// all subcommands. Precedence: command line, then POLYGONET_OUTPUT_ROOT (for
// --output only), then the --config file, then built-in defaults.

#include "polygonet/bench.hpp"
#include "polygonet/error.hpp"
#include "polygonet/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace polygonet;
using json = nlohmann::json;

namespace {

struct RunConfig {
  std::string dataset_kind = "idx";
  std::string images, labels, folder;
  std::string name = "dataset";
  std::size_t limit = 0;  // 0 keeps every image
  std::string representation = "dominant-points";

  std::string polarity = "auto";
  std::string nu_mode = "adaptive";
  double fixed_nu = 1.4;
  std::vector<double> ladder{1.0, 1.5, 2.0, 2.5, 3.0};
  double min_separation = 2.0;
  int denoise_radius = -1;
  unsigned threads = 0;

  int d_model = 64;
  int heads = 4;
  std::vector<int> channels{64, 128, 256, 512, 1024};
  int kernel_size = 3;
  double dropout = 0.1;

  double lr = 1e-5;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 300;
  int patience = 25;
  bool augment = true;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  std::string output = "runs";
  std::string cache, val_cache, eval_cache, checkpoint;

  int repeats = 3;
  std::size_t bench_samples = 100;
  std::vector<std::string> bench_representations{"dominant-points", "contours-none", "contours-simple",
                                                 "contours-tc89l1", "contours-tc89kcos"};
  std::vector<std::string> runs;
  std::string format = "table";
  int count = 8;

  fs::path out() const { return output; }
  std::string cache_path() const { return cache.empty() ? (out() / "points.jsonl").string() : cache; }
  std::string checkpoint_path() const { return checkpoint.empty() ? (out() / "model.ckpt").string() : checkpoint; }

  PreprocessParams preprocess() const {
    PreprocessParams p;
    if (nu_mode == "adaptive")
      p.matc.nu_mode = NuMode::Adaptive;
    else if (nu_mode == "fixed")
      p.matc.nu_mode = NuMode::Fixed;
    else
      throw Error(ErrorCode::Config, "nu-mode must be fixed or adaptive, got '" + nu_mode + "'");
    p.matc.polarity = parse_polarity(polarity);
    p.matc.fixed_nu = fixed_nu;
    p.matc.thickness_ladder = ladder;
    p.matc.min_separation = min_separation;
    p.matc.denoise_radius = denoise_radius;
    p.threads = threads;
    return p;
  }

  ModelConfig model(int num_classes) const {
    ModelConfig m;
    m.d_model = d_model;
    m.num_heads = heads;
    m.conv_channels = channels;
    m.kernel_size = kernel_size;
    m.dropout_rate = dropout;
    m.num_classes = num_classes;
    m.validate();
    return m;
  }

  TrainConfig training() const {
    TrainConfig t;
    t.adam.lr = lr;
    t.adam.weight_decay = weight_decay;
    t.batch_size = batch_size;
    t.max_epochs = epochs;
    t.patience = patience;
    t.augment = augment;
    t.seed = seed;
    return t;
  }

  void require_file(const std::string& path, const char* what) const {
    if (path.empty()) throw Error(ErrorCode::Config, std::string(what) + " path is not set");
    if (!fs::exists(path)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + path);
  }

  RawDataset load_raw() const {
    RawDataset raw;
    if (dataset_kind == "idx") {
      require_file(images, "IDX images");
      require_file(labels, "IDX labels");
      raw = load_idx(images, labels, limit ? limit : static_cast<std::size_t>(-1));
    } else if (dataset_kind == "folder") {
      require_file(folder, "image folder");
      raw = load_image_folder(folder, &std::cerr);
      if (limit && raw.samples.size() > limit) raw.samples.resize(limit);
    } else {
      throw Error(ErrorCode::Config, "dataset-kind must be idx or folder, got '" + dataset_kind + "'");
    }
    return raw;
  }
};

void echo_config(const CLI::App& app, const RunConfig& cfg, const std::string& sub) {
  fs::create_directories(cfg.out());
  const fs::path path = cfg.out() / ("effective-" + sub + ".ini");
  std::ofstream out(path);
  out << app.config_to_str(true, false);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

// Training data and the validation set it was selected against. Both train
// and eval derive the split from the same seed, so eval sees the same rows.
std::pair<Dataset, Dataset> train_and_val(const RunConfig& cfg) {
  Dataset data = read_cache(cfg.cache_path());
  if (!cfg.val_cache.empty()) return {std::move(data), read_cache(cfg.val_cache)};
  return stratified_split(data, cfg.val_fraction, cfg.seed);
}

void print_metrics(std::ostream& os, const Metrics& m, const std::vector<std::string>& names) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy %.6f  macro_f1 %.6f\n", m.accuracy, m.macro_f1);
  os << buf;
  for (std::size_t k = 0; k < m.f1.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  %-20s precision %.4f  recall %.4f  f1 %.4f\n",
                  k < names.size() ? names[k].c_str() : std::to_string(k).c_str(), m.precision[k], m.recall[k],
                  m.f1[k]);
    os << buf;
  }
}

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"f1", m.f1}, {"confusion", m.confusion}};
}

int cmd_preprocess(const RunConfig& cfg) {
  const Representation rep = parse_representation(cfg.representation);
  const RawDataset raw = cfg.load_raw();
  PreprocessReport report;
  const auto start = std::chrono::steady_clock::now();
  const Dataset data = preprocess_dataset(raw, rep, cfg.preprocess(), &report, &std::cerr);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fs::path cache = cfg.cache_path();
  if (cache.has_parent_path()) fs::create_directories(cache.parent_path());
  write_cache(cache.string(), data);
  std::printf("processed %zu skipped %zu mean_points %.2f seconds %.1f -> %s\n", report.processed, report.skipped,
              data.mean_points(), secs, cache.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  auto [train_set, val_set] = train_and_val(cfg);
  const ModelConfig mc = cfg.model(train_set.num_classes());
  Model<float> model(mc, cfg.seed);
  std::printf("train %zu val %zu classes %d parameters %zu mean_points %.2f\n", train_set.size(), val_set.size(),
              mc.num_classes, model.parameter_count(), train_set.mean_points());

  fs::create_directories(cfg.out());
  std::ofstream history(cfg.out() / "history.csv");
  history << "epoch,train_loss,val_accuracy,seconds\n";
  const TrainResult result = train(model, train_set, val_set, cfg.training(), [&](const EpochRecord& e) {
    std::printf("epoch %3d  loss %.5f  val_acc %.4f  %.1fs\n", e.epoch, e.train_loss, e.val_accuracy, e.seconds);
    std::fflush(stdout);
    history << e.epoch << ',' << e.train_loss << ',' << e.val_accuracy << ',' << e.seconds << '\n';
  });
  if (!history.flush()) throw Error(ErrorCode::Io, "cannot write history.csv");

  save_checkpoint(cfg.checkpoint_path(), model);
  const Metrics best = evaluate(model, val_set);
  json summary = {{"dataset", cfg.name},
                  {"method", to_string(train_set.representation)},
                  {"best_epoch", result.best_epoch},
                  {"epochs_run", result.history.size()},
                  {"best_val_accuracy", result.best_val_accuracy},
                  {"mean_points", train_set.mean_points()},
                  {"val", metrics_json(best)}};
  std::ofstream(cfg.out() / "summary.json") << summary.dump(2) << '\n';
  std::printf("best epoch %d  val_acc %.6f  checkpoint %s\n", result.best_epoch, result.best_val_accuracy,
              cfg.checkpoint_path().c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  Model<float> model = load_checkpoint<float>(cfg.checkpoint_path());
  Dataset data = cfg.eval_cache.empty() ? train_and_val(cfg).second : read_cache(cfg.eval_cache);
  if (data.num_classes() != model.config().num_classes)
    throw Error(ErrorCode::Config, "cache has " + std::to_string(data.num_classes()) + " classes, checkpoint " +
                                       std::to_string(model.config().num_classes));
  const Metrics m = evaluate(model, data);
  std::printf("samples %zu\n", data.size());
  print_metrics(std::cout, m, data.class_names);
  fs::create_directories(cfg.out());
  std::ofstream(cfg.out() / "eval.json") << metrics_json(m).dump(2) << '\n';
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const ReportFormat format = parse_report_format(cfg.format);
  RawDataset raw = cfg.load_raw();
  if (raw.samples.size() > cfg.bench_samples) raw.samples.resize(cfg.bench_samples);
  const std::string ckpt = cfg.checkpoint_path();
  Model<float> model = fs::exists(ckpt) ? load_checkpoint<float>(ckpt)
                                        : Model<float>(cfg.model(static_cast<int>(raw.class_names.size())), cfg.seed);

  fs::create_directories(cfg.out());
  std::vector<TimingRow> timing;
  for (const auto& name : cfg.bench_representations) {
    timing.push_back(time_pipeline(raw.samples, parse_representation(name), cfg.preprocess(), model, cfg.repeats,
                                   cfg.name));
    std::fprintf(stderr, "timed %s\n", name.c_str());
  }
  emit_report((cfg.out() / "timing.csv").string(), timing, ReportFormat::Csv);
  emit_report((cfg.out() / "timing.txt").string(), timing, ReportFormat::Table);
  emit_report(std::cout, timing, format);

  if (!cfg.runs.empty()) {
    std::vector<RunSummary> runs;
    for (const auto& dir : cfg.runs) {
      const fs::path path = fs::path(dir) / "summary.json";
      std::ifstream in(path);
      if (!in) throw Error(ErrorCode::Io, "cannot open run summary " + path.string());
      const json s = json::parse(in, nullptr, false);
      if (s.is_discarded()) throw Error(ErrorCode::Decode, "malformed run summary " + path.string());
      RunSummary r;
      r.dataset = s.at("dataset").get<std::string>();
      r.method = s.at("method").get<std::string>();
      r.metrics.accuracy = s.at("val").at("accuracy").get<double>();
      r.metrics.macro_f1 = s.at("val").at("macro_f1").get<double>();
      r.mean_points = s.at("mean_points").get<double>();
      r.config = read_checkpoint_config((fs::path(dir) / "model.ckpt").string());
      runs.push_back(std::move(r));
    }
    const auto rows = result_table(runs);
    emit_report((cfg.out() / "results.csv").string(), rows, ReportFormat::Csv);
    emit_report((cfg.out() / "results.txt").string(), rows, ReportFormat::Table);
    std::cout << '\n';
    emit_report(std::cout, rows, format);
  }
  return 0;
}

int cmd_inspect(const RunConfig& cfg) {
  const Representation rep = parse_representation(cfg.representation);
  const PreprocessParams params = cfg.preprocess();
  RawDataset raw = cfg.load_raw();
  const fs::path dir = cfg.out() / "inspect";
  fs::create_directories(dir);
  int written = 0;
  for (std::size_t i = 0; i < raw.samples.size() && written < cfg.count; ++i) {
    const Image img = raw.samples[i].load();
    try {
      const Contour contour = extract_main_contour(img, params.matc);
      const PointList pts = rep == Representation::DominantPoints
                                ? dominant_points_from_contour(contour, params.matc).points
                                : approximate(contour, approx_mode(rep), params.tc89).points;
      char file[64];
      std::snprintf(file, sizeof file, "%04zu_label%d.svg", i, raw.samples[i].label);
      std::ofstream(dir / file) << overlay_svg(contour, pts, img.width, img.height);
      std::printf("%s  contour %zu  points %zu\n", file, contour.size(), pts.size());
      ++written;
    } catch (const Error& e) {
      std::fprintf(stderr, "skipping %s: %s\n", raw.samples[i].source.c_str(), e.what());
    }
  }
  std::printf("wrote %d overlays to %s\n", written, dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-sequence image classification: preprocessing, training, evaluation and timing."};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.require_subcommand(1, 1);
  RunConfig cfg;

  auto* data = app.add_option_group("Dataset");
  data->add_option("--dataset-kind", cfg.dataset_kind, "idx or folder")->capture_default_str();
  data->add_option("--images", cfg.images, "IDX image file (.gz accepted)");
  data->add_option("--labels", cfg.labels, "IDX label file (.gz accepted)");
  data->add_option("--folder", cfg.folder, "root with one subdirectory per class");
  data->add_option("--name", cfg.name, "dataset label used in reports")->capture_default_str();
  data->add_option("--limit", cfg.limit, "keep at most this many images (0 = all)")->capture_default_str();
  data->add_option("--representation", cfg.representation,
                   "dominant-points, contours-none, contours-simple, contours-tc89l1 or contours-tc89kcos")
      ->capture_default_str();

  auto* pre = app.add_option_group("Preprocessing");
  pre->add_option("--polarity", cfg.polarity, "foreground side: auto (minority), dark or light")
      ->capture_default_str();
  pre->add_option("--nu-mode", cfg.nu_mode, "fixed or adaptive blurred-segment width")->capture_default_str();
  pre->add_option("--fixed-nu", cfg.fixed_nu, "width used when nu-mode=fixed")->capture_default_str();
  pre->add_option("--ladder", cfg.ladder, "thickness ladder for adaptive mode")->delimiter(',')->capture_default_str();
  pre->add_option("--min-separation", cfg.min_separation, "minimum vertex spacing in pixels")->capture_default_str();
  pre->add_option("--denoise-radius", cfg.denoise_radius, "open/close radius (-1 = size-based default)")
      ->capture_default_str();
  pre->add_option("--threads", cfg.threads, "preprocessing workers (0 = all cores)")->capture_default_str();

  auto* model = app.add_option_group("Model");
  model->add_option("--d-model", cfg.d_model)->capture_default_str();
  model->add_option("--heads", cfg.heads)->capture_default_str();
  model->add_option("--channels", cfg.channels, "conv block widths")->delimiter(',')->capture_default_str();
  model->add_option("--kernel-size", cfg.kernel_size)->capture_default_str();
  model->add_option("--dropout", cfg.dropout)->capture_default_str();

  auto* tr = app.add_option_group("Training");
  tr->add_option("--lr", cfg.lr)->capture_default_str();
  tr->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
  tr->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  tr->add_option("--epochs", cfg.epochs, "maximum epochs")->capture_default_str();
  tr->add_option("--patience", cfg.patience, "early-stopping patience")->capture_default_str();
  tr->add_option("--augment", cfg.augment, "rotation and flip augmentation")->capture_default_str();
  tr->add_option("--val-fraction", cfg.val_fraction, "stratified validation share when no val-cache is given")
      ->capture_default_str();
  tr->add_option("--seed", cfg.seed)->capture_default_str();

  auto* files = app.add_option_group("Files");
  files->add_option("--output", cfg.output, "output directory")->envname("POLYGONET_OUTPUT_ROOT")->capture_default_str();
  files->add_option("--cache", cfg.cache, "points cache (default <output>/points.jsonl)");
  files->add_option("--val-cache", cfg.val_cache, "separate validation cache");
  files->add_option("--eval-cache", cfg.eval_cache, "cache evaluated by eval instead of the validation split");
  files->add_option("--checkpoint", cfg.checkpoint, "model file (default <output>/model.ckpt)");

  auto* bench = app.add_option_group("Bench and inspect");
  bench->add_option("--repeats", cfg.repeats, "timing passes, the first one discarded")->capture_default_str();
  bench->add_option("--bench-samples", cfg.bench_samples, "images timed per representation")->capture_default_str();
  bench->add_option("--bench-representations", cfg.bench_representations)->delimiter(',')->capture_default_str();
  bench->add_option("--runs", cfg.runs, "training output directories to tabulate")->delimiter(',');
  bench->add_option("--format", cfg.format, "table or csv")->capture_default_str();
  bench->add_option("--count", cfg.count, "overlays written by inspect")->capture_default_str();

  const std::pair<const char*, const char*> subs[] = {
      {"preprocess", "extract point sequences and write the points cache"},
      {"train", "train from a points cache; writes checkpoint, history and summary"},
      {"eval", "evaluate a checkpoint and print metrics"},
      {"bench", "time each pipeline stage and tabulate trained runs"},
      {"inspect", "write contour and polygon SVG overlays"},
  };
  for (const auto& [name, help] : subs) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto extra = app.remaining();
    if (!extra.empty())
      std::cerr << "polygonet: unknown subcommand or argument '" << extra.front() << "'\n";
    else
      std::cerr << "polygonet: " << e.what() << '\n';
    std::cerr << "Run with --help for usage.\n";
    return 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    echo_config(app, cfg, sub);
    if (sub == "preprocess") return cmd_preprocess(cfg);
    if (sub == "train") return cmd_train(cfg);
    if (sub == "eval") return cmd_eval(cfg);
    if (sub == "bench") return cmd_bench(cfg);
    return cmd_inspect(cfg);
  } catch (const Error& e) {
    std::cerr << "polygonet: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "polygonet: " << e.what() << '\n';
    return 1;
  }
}
