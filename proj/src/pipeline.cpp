#include "polygonet/pipeline.hpp"
#include "polygonet/error.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace polygonet {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

class GzFile {
 public:
  explicit GzFile(const std::string& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw Error(ErrorCode::Io, "cannot open " + path);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
  ~GzFile() { gzclose(f_); }

  /// Reads exactly n bytes or throws Truncated.
  void read(void* dst, std::size_t n, const char* what) {
    auto* out = static_cast<std::uint8_t*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(f_, out, chunk);
      if (got < 0) throw Error(ErrorCode::Decode, path_ + ": gzip stream error");
      if (got == 0) throw Error(ErrorCode::Truncated, path_ + ": truncated " + what);
      out += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t u32(const char* what) {
    std::uint8_t b[4];
    read(b, 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

 private:
  std::string path_;
  gzFile f_;
};

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

struct Extracted {
  std::optional<Sample> sample;
  std::string error;
};

Extracted extract_sample(const RawSample& raw, Representation rep, const PreprocessParams& params) {
  Extracted out;
  try {
    const Image img = raw.load();
    const PointList pts = extract_points(img, rep, params);
    if (pts.size() < 3) {
      out.error = "only " + std::to_string(pts.size()) + " points";
      return out;
    }
    Sample s;
    s.source = raw.source;
    s.width = img.width;
    s.height = img.height;
    s.points.label = raw.label;
    s.points.coords = normalize_points(pts, img.width, img.height);
    out.sample = std::move(s);
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

const char* to_string(Representation r) noexcept {
  switch (r) {
    case Representation::DominantPoints: return "dominant-points";
    case Representation::ContoursNone: return "contours-none";
    case Representation::ContoursSimple: return "contours-simple";
    case Representation::ContoursTc89L1: return "contours-tc89l1";
    case Representation::ContoursTc89Kcos: return "contours-tc89kcos";
  }
  return "unknown";
}

Representation parse_representation(const std::string& name) {
  for (auto r : {Representation::DominantPoints, Representation::ContoursNone, Representation::ContoursSimple,
                 Representation::ContoursTc89L1, Representation::ContoursTc89Kcos}) {
    if (name == to_string(r)) return r;
  }
  throw Error(ErrorCode::Config, "unknown representation '" + name + "'");
}

ApproxMode approx_mode(Representation r) {
  switch (r) {
    case Representation::ContoursNone: return ApproxMode::None;
    case Representation::ContoursSimple: return ApproxMode::Simple;
    case Representation::ContoursTc89L1: return ApproxMode::Tc89L1;
    case Representation::ContoursTc89Kcos: return ApproxMode::Tc89Kcos;
    case Representation::DominantPoints: break;
  }
  throw Error(ErrorCode::Precondition, "dominant-points has no contour approximation mode");
}

Image RawSample::load() const { return image ? *image : read_image(path); }

RawDataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit) {
  GzFile images(images_path);
  GzFile labels(labels_path);
  const std::uint32_t im_magic = images.u32("header");
  if (im_magic != kIdxImages) throw Error(ErrorCode::MagicMismatch, images_path + ": not an IDX image file");
  const std::uint32_t lb_magic = labels.u32("header");
  if (lb_magic != kIdxLabels) throw Error(ErrorCode::MagicMismatch, labels_path + ": not an IDX label file");
  const std::uint32_t n = images.u32("header");
  const std::uint32_t rows = images.u32("header");
  const std::uint32_t cols = images.u32("header");
  const std::uint32_t n_labels = labels.u32("header");
  if (n != n_labels) {
    throw Error(ErrorCode::CountMismatch,
                "image count " + std::to_string(n) + " differs from label count " + std::to_string(n_labels));
  }
  const std::size_t keep = std::min<std::size_t>(n, limit);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<std::uint8_t> label_bytes(keep);
  labels.read(label_bytes.data(), keep, "label payload");

  RawDataset out;
  out.samples.reserve(keep);
  int max_label = -1;
  for (std::size_t i = 0; i < keep; ++i) {
    RawSample s;
    s.source = images_path + "#" + std::to_string(i);
    s.label = label_bytes[i];
    Image img{static_cast<int>(cols), static_cast<int>(rows), 1, std::vector<std::uint8_t>(pixels)};
    images.read(img.pixels.data(), pixels, "image payload");
    s.image = std::move(img);
    max_label = std::max(max_label, s.label);
    out.samples.push_back(std::move(s));
  }
  for (int k = 0; k <= max_label; ++k) out.class_names.push_back(std::to_string(k));
  return out;
}

RawDataset load_image_folder(const std::filesystem::path& root, std::ostream* log) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw Error(ErrorCode::EmptyDataset, root.string() + " has no class subdirectories");

  RawDataset out;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k])) {
      if (!e.is_regular_file()) continue;
      if (has_image_extension(e.path())) {
        files.push_back(e.path());
      } else if (log) {
        *log << "warning: skipping non-image file " << e.path().string() << "\n";
      }
    }
    if (files.empty()) throw Error(ErrorCode::EmptyDataset, "class folder " + classes[k].string() + " has no images");
    std::sort(files.begin(), files.end());
    out.class_names.push_back(classes[k].filename().string());
    for (auto& f : files) {
      RawSample s;
      s.source = f.string();
      s.label = static_cast<int>(k);
      s.path = std::move(f);
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

double Dataset::mean_points() const {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += static_cast<double>(s.points.size());
  return total / static_cast<double>(samples.size());
}

PointList extract_points(const Image& image, Representation rep, const PreprocessParams& params) {
  const Contour contour = extract_main_contour(image, params.matc);
  if (rep == Representation::DominantPoints) return dominant_points_from_contour(contour, params.matc).points;
  return approximate(contour, approx_mode(rep), params.tc89).points;
}

Dataset preprocess_dataset(const RawDataset& raw, Representation rep, const PreprocessParams& params,
                           PreprocessReport* report, std::ostream* log) {
  const std::size_t n = raw.samples.size();
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "no images to preprocess");
  std::vector<Extracted> results(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = extract_sample(raw.samples[i], rep, params);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Dataset out;
  out.class_names = raw.class_names;
  out.representation = rep;
  PreprocessReport local;
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i].sample) {
      out.samples.push_back(std::move(*results[i].sample));
      ++local.processed;
    } else {
      ++local.skipped;
      local.skip_reasons.push_back(raw.samples[i].source + ": " + results[i].error);
      if (log) *log << "skipped " << raw.samples[i].source << ": " << results[i].error << "\n";
    }
  }
  if (report) *report = local;
  if (static_cast<double>(local.skipped) > params.max_skip_fraction * static_cast<double>(n)) {
    throw Error(ErrorCode::DatasetQuality, std::to_string(local.skipped) + " of " + std::to_string(n) +
                                               " images yielded no usable contour");
  }
  return out;
}

std::vector<Eigen::Vector2d> normalize_points(const PointList& points, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::Precondition, "image size must be positive");
  std::vector<Eigen::Vector2d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.emplace_back(static_cast<double>(p.x()) / width, static_cast<double>(p.y()) / height);
  return out;
}

void write_cache(std::ostream& out, const Dataset& data) {
  for (const auto& s : data.samples) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& c : s.points.coords) pts.push_back({c.x(), c.y()});
    const int label = s.points.label;
    nlohmann::json rec{
        {"source", s.source},
        {"label", label},
        {"class_name", label >= 0 && label < data.num_classes() ? data.class_names[static_cast<std::size_t>(label)]
                                                                : std::to_string(label)},
        {"representation", to_string(data.representation)},
        {"width", s.width},
        {"height", s.height},
        {"points", std::move(pts)},
    };
    out << rec.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "cache write failed");
}

void write_cache(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_cache(out, data);
}

Dataset read_cache(std::istream& in) {
  Dataset out;
  std::map<int, std::string> names;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Sample s;
      s.source = rec.at("source").get<std::string>();
      s.width = rec.at("width").get<int>();
      s.height = rec.at("height").get<int>();
      s.points.label = rec.at("label").get<int>();
      for (const auto& p : rec.at("points")) s.points.coords.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      const auto rep = parse_representation(rec.at("representation").get<std::string>());
      if (first) out.representation = rep;
      else if (rep != out.representation) throw Error(ErrorCode::Config, "mixed representations in cache");
      first = false;
      if (s.points.label < 0) throw Error(ErrorCode::Config, "negative label");
      names[s.points.label] = rec.value("class_name", std::to_string(s.points.label));
      out.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Decode, "cache line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  const int classes = names.empty() ? 0 : names.rbegin()->first + 1;
  for (int k = 0; k < classes; ++k) out.class_names.push_back(names.count(k) ? names[k] : std::to_string(k));
  return out;
}

Dataset read_cache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open cache " + path);
  return read_cache(in);
}

std::vector<Eigen::Vector2d> transform_points(const std::vector<Eigen::Vector2d>& points, double theta, bool hflip,
                                              bool vflip) {
  if (points.empty()) return {};
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  const double c = std::cos(theta), s = std::sin(theta);
  std::vector<Eigen::Vector2d> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector2d d = p - centroid;
    Eigen::Vector2d q(c * d.x() - s * d.y(), s * d.x() + c * d.y());
    if (hflip) q.x() = -q.x();
    if (vflip) q.y() = -q.y();
    q += centroid;
    out.emplace_back(std::clamp(q.x(), 0.0, 1.0), std::clamp(q.y(), 0.0, 1.0));
  }
  return out;
}

std::vector<Eigen::Vector2d> augment(const std::vector<Eigen::Vector2d>& points, Rng& rng, const AugmentPolicy& policy) {
  const double max_theta = policy.max_rotation_deg * M_PI / 180.0;
  const double theta = (2.0 * uniform01(rng) - 1.0) * max_theta;
  const bool h = uniform01(rng) < policy.hflip_probability;
  const bool v = uniform01(rng) < policy.vflip_probability;
  return transform_points(points, theta, h, v);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(p[i - 1], p[std::min(j, i - 1)]);
  }
  return p;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double fraction, std::uint64_t seed) {
  Rng rng(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.samples.size(); ++i) by_class[data.samples[i].points.label].push_back(i);
  std::vector<std::uint8_t> second(data.samples.size(), 0);
  for (auto& [label, idx] : by_class) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    const auto perm = permutation(idx.size(), rng);
    for (std::size_t k = 0; k < take; ++k) second[idx[perm[k]]] = 1;
  }
  Dataset a, b;
  a.class_names = b.class_names = data.class_names;
  a.representation = b.representation = data.representation;
  for (std::size_t i = 0; i < data.samples.size(); ++i) (second[i] ? b : a).samples.push_back(data.samples[i]);
  return {std::move(a), std::move(b)};
}

Dataset head(const Dataset& data, std::size_t count) {
  Dataset out;
  out.class_names = data.class_names;
  out.representation = data.representation;
  out.samples.assign(data.samples.begin(),
                     data.samples.begin() + static_cast<std::ptrdiff_t>(std::min(count, data.samples.size())));
  return out;
}

bool EarlyStopping::update(double metric) {
  ++epoch_;
  improved_ = metric > best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (train_set.samples.empty()) throw Error(ErrorCode::Config, "training split is empty");
  if (val_set.samples.empty()) throw Error(ErrorCode::Config, "validation split is empty");
  if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1)
    throw Error(ErrorCode::Config, "batch_size, max_epochs and patience must be positive");
  const int classes = model.config().num_classes;
  for (const auto* set : {&train_set, &val_set})
    for (const auto& s : set->samples)
      if (s.points.label < 0 || s.points.label >= classes)
        throw Error(ErrorCode::Config, "label " + std::to_string(s.points.label) + " outside the model's classes");

  Rng rng(config.seed);
  Adam<float> opt(config.adam, model.parameters());
  EarlyStopping stopper(config.patience);
  auto best_params = model.parameters();
  auto best_buffers = model.buffers();
  TrainResult result;
  const std::size_t n = train_set.samples.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = permutation(n, rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const std::size_t end = std::min(n, begin + bs);
      std::vector<PointSequence> seqs;
      seqs.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const PointSequence& src = train_set.samples[order[i]].points;
        PointSequence s;
        s.label = src.label;
        s.coords = config.augment ? augment(src.coords, rng, config.policy) : src.coords;
        seqs.push_back(std::move(s));
      }
      const Batch<float> batch = make_batch<float>(std::span<const PointSequence>(seqs));
      loss_sum += static_cast<double>(model.loss_and_backward(batch, rng)) * static_cast<double>(end - begin);
      opt.step(model.parameters(), model.gradients());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_accuracy = evaluate(model, val_set).accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    const bool stop = stopper.update(rec.val_accuracy);
    if (stopper.improved()) {
      best_params = model.parameters();
      best_buffers = model.buffers();
    }
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  model.parameters() = std::move(best_params);
  model.buffers() = std::move(best_buffers);
  result.best_epoch = stopper.best_epoch();
  result.best_val_accuracy = stopper.best();
  return result;
}

Metrics metrics_from_confusion(const std::vector<std::vector<std::int64_t>>& confusion) {
  const std::size_t k = confusion.size();
  Metrics m;
  m.confusion = confusion;
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  std::int64_t total = 0, correct = 0;
  std::vector<std::int64_t> predicted(k, 0), support(k, 0);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) {
      total += confusion[t][p];
      support[t] += confusion[t][p];
      predicted[p] += confusion[t][p];
    }
    correct += confusion[t][t];
  }
  m.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  double f1_sum = 0.0;
  int counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    if (predicted[c] > 0) m.precision[c] = tp / static_cast<double>(predicted[c]);
    if (support[c] > 0) m.recall[c] = tp / static_cast<double>(support[c]);
    const double pr = m.precision[c] + m.recall[c];
    if (pr > 0.0) m.f1[c] = 2.0 * m.precision[c] * m.recall[c] / pr;
    if (support[c] > 0) {
      f1_sum += m.f1[c];
      ++counted;
    }
  }
  m.macro_f1 = counted > 0 ? f1_sum / counted : 0.0;
  return m;
}

std::vector<int> predict(Model<float>& model, const Dataset& data, int batch_size) {
  std::vector<int> out;
  out.reserve(data.samples.size());
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t begin = 0; begin < data.samples.size(); begin += bs) {
    const std::size_t end = std::min(data.samples.size(), begin + bs);
    std::vector<const PointSequence*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&data.samples[i].points);
    const Matrix<float> logits =
        model.forward(make_batch<float>(std::span<const PointSequence* const>(ptrs)), Mode::Eval);
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
      Eigen::Index arg = 0;
      for (Eigen::Index c = 1; c < logits.cols(); ++c)
        if (logits(b, c) > logits(b, arg)) arg = c;
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

Metrics evaluate(Model<float>& model, const Dataset& data, int batch_size) {
  const auto k = static_cast<std::size_t>(model.config().num_classes);
  std::vector<std::vector<std::int64_t>> confusion(k, std::vector<std::int64_t>(k, 0));
  const auto pred = predict(model, data, batch_size);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int t = data.samples[i].points.label;
    if (t < 0 || static_cast<std::size_t>(t) >= k) throw Error(ErrorCode::Config, "label outside the model's classes");
    ++confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(pred[i])];
  }
  return metrics_from_confusion(confusion);
}

}  // namespace polygonet
