#pragma once

// Dataset ingestion, point caching, augmentation, training and evaluation.

#include "polygonet/contour.hpp"
#include "polygonet/image.hpp"
#include "polygonet/matc.hpp"
#include "polygonet/model.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace polygonet {

enum class Representation { DominantPoints, ContoursNone, ContoursSimple, ContoursTc89L1, ContoursTc89Kcos };

/// "dominant-points", "contours-none", "contours-simple", "contours-tc89l1", "contours-tc89kcos".
const char* to_string(Representation r) noexcept;
Representation parse_representation(const std::string& name);

/// Approximation mode of a contour representation.
ApproxMode approx_mode(Representation r);

/// One image, either held in memory or read from `path` on demand.
struct RawSample {
  std::string source;
  int label = 0;
  std::optional<Image> image;
  std::filesystem::path path;

  Image load() const;
};

struct RawDataset {
  std::vector<RawSample> samples;
  std::vector<std::string> class_names;
};

/// IDX image/label pair, gzip or plain. At most `limit` samples are kept.
RawDataset load_idx(const std::string& images_path, const std::string& labels_path,
                    std::size_t limit = static_cast<std::size_t>(-1));

/// One subdirectory per class, sorted by name; files sorted by name. Files
/// without a .png/.pgm/.ppm/.pnm extension are skipped with a warning.
RawDataset load_image_folder(const std::filesystem::path& root, std::ostream* log = nullptr);

struct Sample {
  std::string source;
  int width = 0;
  int height = 0;
  PointSequence points;  // normalised, carries the label
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  Representation representation = Representation::DominantPoints;

  std::size_t size() const { return samples.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  double mean_points() const;
};

struct PreprocessParams {
  MatcParams matc;
  Tc89Params tc89;
  /// Worker threads; 0 picks the hardware concurrency.
  unsigned threads = 0;
  double max_skip_fraction = 0.10;
};

struct PreprocessReport {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;  // "source: message"
};

/// Pixel coordinates of the representation before normalisation.
PointList extract_points(const Image& image, Representation rep, const PreprocessParams& params);

/// Runs extraction on every image. Samples that fail or end with fewer than
/// 3 points are skipped and reported; more than max_skip_fraction skipped
/// throws DatasetQuality. Output order follows input order.
Dataset preprocess_dataset(const RawDataset& raw, Representation rep, const PreprocessParams& params,
                           PreprocessReport* report = nullptr, std::ostream* log = nullptr);

/// (x, y) -> (x / W, y / H).
std::vector<Eigen::Vector2d> normalize_points(const PointList& points, int width, int height);

/// One JSON object per line:
///   {"source","label","class_name","representation","width","height","points":[[x,y],...]}
void write_cache(std::ostream& out, const Dataset& data);
void write_cache(const std::string& path, const Dataset& data);
Dataset read_cache(std::istream& in);
Dataset read_cache(const std::string& path);

struct AugmentPolicy {
  double max_rotation_deg = 30.0;
  double hflip_probability = 0.5;
  double vflip_probability = 0.5;
};

/// Rotation by theta (radians) about the centroid, then optional mirror
/// flips about the centroid axes, then clamping to [0, 1]^2.
std::vector<Eigen::Vector2d> transform_points(const std::vector<Eigen::Vector2d>& points, double theta, bool hflip,
                                              bool vflip);

std::vector<Eigen::Vector2d> augment(const std::vector<Eigen::Vector2d>& points, Rng& rng,
                                     const AugmentPolicy& policy = {});

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Per class, a seeded `fraction` of the samples goes to the second part.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double fraction, std::uint64_t seed);

/// First `count` samples of `data`.
Dataset head(const Dataset& data, std::size_t count);

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 64;
  int max_epochs = 300;
  int patience = 25;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentPolicy policy;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
};

/// Stops once `patience` consecutive epochs fail to beat the best metric.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one epoch's metric; true when training should stop.
  bool update(double metric);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = -1.0;
  bool improved_ = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` in place and leaves it holding the best-validation weights.
TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

/// Per-class scores; macro F1 averages over classes with nonzero support.
Metrics metrics_from_confusion(const std::vector<std::vector<std::int64_t>>& confusion);

/// Eval-mode argmax predictions, ties to the smaller class index.
std::vector<int> predict(Model<float>& model, const Dataset& data, int batch_size = 256);

Metrics evaluate(Model<float>& model, const Dataset& data, int batch_size = 256);

}  // namespace polygonet
