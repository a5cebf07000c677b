#pragma once

// Point-sequence classifier: input projection, sinusoidal position encoding,
// one pre-norm multi-head self-attention block with a residual, a stack of
// Conv1D + BatchNorm + ReLU blocks, masked mean pooling and a linear head.
//
// Activations are packed: only unmasked positions are materialised, one row
// each, in batch order. Convolution neighbours are looked up through the
// padded layout, so a masked neighbour reads as zero input exactly as if the
// padded tensor were convolved.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace polygonet {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; independent of the standard
/// library's distribution implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ModelConfig {
  int d_model = 64;
  int num_heads = 4;
  std::vector<int> conv_channels{64, 128, 256, 512, 1024};
  int kernel_size = 3;
  double dropout_rate = 0.10;
  int num_classes = 10;
  int max_len = 2048;

  int pooled_width() const { return conv_channels.empty() ? d_model : conv_channels.back(); }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Normalised (x, y) coordinates of one sample.
struct PointSequence {
  std::vector<Eigen::Vector2d> coords;
  int label = -1;

  std::size_t size() const { return coords.size(); }
  friend bool operator==(const PointSequence&, const PointSequence&) = default;
};

/// Padded batch: row b * length + i of `x` is position i of sample b.
template <typename T>
struct Batch {
  int size = 0;
  int length = 0;
  Matrix<T> x;
  std::vector<std::uint8_t> mask;
  std::vector<int> labels;

  bool valid(int b, int i) const { return mask[static_cast<std::size_t>(b) * length + i] != 0; }
};

/// Pads to the longest sequence (at least `min_length`).
template <typename T>
Batch<T> make_batch(std::span<const PointSequence* const> samples, int min_length = 0);

template <typename T>
Batch<T> make_batch(std::span<const PointSequence> samples, int min_length = 0);

template <typename T>
Matrix<T> positional_encoding(int n, int d, int max_len = 2048);

enum class Mode { Train, Eval };

/// Weights of one attention block; projections act on row vectors (x W + b).
template <typename T>
struct AttentionWeights {
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  int heads = 1;
};

/// Multi-head softmax(Q K^T / sqrt(d_head)) V over the unmasked keys of one
/// sequence x (N, d), concatenated and output-projected. Masked query rows
/// are zero.
template <typename T>
Matrix<T> self_attention(const Matrix<T>& x, std::span<const std::uint8_t> mask, const AttentionWeights<T>& w);

/// weight is (kernel * C_in, C_out) with row (o * C_in + c) the tap at offset
/// o - kernel / 2 of input channel c.
template <typename T>
struct ConvWeights {
  Matrix<T> weight, bias, gamma, beta, running_mean, running_var;
  int kernel = 3;
};

/// Same-padded convolution, batch norm and ReLU over one sequence x (N, C_in).
/// Train mode normalises with the statistics of the unmasked rows. Masked rows
/// of the result are zero.
template <typename T>
Matrix<T> conv_block(const Matrix<T>& x, std::span<const std::uint8_t> mask, const ConvWeights<T>& w, Mode mode);

template <typename T>
struct Tensor {
  std::string name;
  Matrix<T> value;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  /// Batch-norm running statistics.
  std::vector<Tensor<T>>& buffers() { return buffers_; }
  const std::vector<Tensor<T>>& buffers() const { return buffers_; }
  /// Gradients from the last loss_and_backward, aligned with parameters().
  const std::vector<Matrix<T>>& gradients() const { return grads_; }

  std::size_t parameter_count() const;

  /// Logits (B, num_classes). Train mode uses batch statistics, updates the
  /// running statistics and draws dropout masks from `rng`.
  Matrix<T> forward(const Batch<T>& batch, Mode mode, Rng* rng = nullptr);

  /// Mean softmax cross-entropy of a train-mode forward pass; fills gradients().
  T loss_and_backward(const Batch<T>& batch, Rng& rng);

  /// Converts parameters and buffers from a model of another scalar type with
  /// the same configuration.
  template <typename U>
  void assign_from(const Model<U>& other);

 private:
  struct Tape;

  Matrix<T> run(const Batch<T>& batch, Mode mode, Rng* rng, Tape* tape);
  void init(std::uint64_t seed);

  ModelConfig config_;
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> buffers_;
  std::vector<Matrix<T>> grads_;
};

template <typename T>
template <typename U>
void Model<T>::assign_from(const Model<U>& other) {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = other.parameters()[i].value.template cast<T>();
  for (std::size_t i = 0; i < buffers_.size(); ++i) buffers_[i].value = other.buffers()[i].value.template cast<T>();
}

/// Mean cross-entropy and its gradient with respect to the logits.
template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> labels, Matrix<T>* grad = nullptr);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with bias correction and decoupled weight decay applied first.
template <typename T>
class Adam {
 public:
  Adam(const AdamConfig& config, const std::vector<Tensor<T>>& params);

  void step(std::vector<Tensor<T>>& params, const std::vector<Matrix<T>>& grads);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::int64_t t_ = 0;
};

/// Analytic forward-pass FLOPs, one multiply-accumulate = 2 FLOPs:
///   projection    4 N d
///   attention     2 (3 N d^2 + 2 N^2 d + N d^2)
///   each conv     2 N k C_in C_out, plus 2 N C for batch norm and 2 N C for ReLU
///   pooling       2 N C_last
///   head          2 C_last K
std::uint64_t count_flops(const ModelConfig& config, std::uint64_t n);

/// The same polynomial at a fractional mean length.
double count_flops_at(const ModelConfig& config, double mean_n);

/// Checkpoint layout (little-endian):
///   "PGNT" | u32 version = 1 | u32 scalar bytes (4 or 8)
///   config: i32 d_model, num_heads, kernel_size, num_classes, max_len,
///           f64 dropout_rate, u32 C, then C x i32 conv channels
///   u32 tensor count, then per tensor:
///           u32 name length, name bytes, u32 rows, u32 cols,
///           rows * cols scalars in row-major order
/// Parameters come first in parameters() order, then buffers().
template <typename T>
void save_checkpoint(std::ostream& out, const Model<T>& model);

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model);

/// Scalar width is converted if the file differs from T.
template <typename T>
Model<T> load_checkpoint(std::istream& in);

template <typename T>
Model<T> load_checkpoint(const std::string& path);

ModelConfig read_checkpoint_config(const std::string& path);

}  // namespace polygonet
