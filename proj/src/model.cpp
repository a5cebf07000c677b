#include "polygonet/model.hpp"
#include "polygonet/error.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace polygonet {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Fixed parameter slots; conv layer l occupies kConv0 + 4l .. kConv0 + 4l + 3.
enum Slot : std::size_t {
  kProjW, kProjB, kNormGamma, kNormBeta,
  kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
  kConv0,
};

std::size_t conv_slot(std::size_t layer) { return kConv0 + 4 * layer; }

template <typename T>
Matrix<T> uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  return m;
}

template <typename T>
Matrix<T> filled(Eigen::Index rows, Eigen::Index cols, double value) {
  return Matrix<T>::Constant(rows, cols, static_cast<T>(value));
}

// Packed convolution input: row r holds the kernel taps of row r side by side.
template <typename T>
Matrix<T> im2col(const Matrix<T>& act, const std::vector<int>& nbr, int ksize) {
  const auto cin = act.cols();
  const auto rows = act.rows();
  Matrix<T> col = Matrix<T>::Zero(rows, ksize * cin);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int off = 0; off < ksize; ++off) {
      const int nb = nbr[static_cast<std::size_t>(r) * ksize + off];
      if (nb >= 0) col.block(r, off * cin, 1, cin) = act.row(nb);
    }
  }
  return col;
}

// Per-sequence, per-head softmax attention on packed rows; `probs` receives
// the attention matrices in (sequence, head) order.
template <typename T>
Matrix<T> attend(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, const std::vector<int>& start, int heads,
                 std::vector<Matrix<T>>* probs) {
  const auto d = q.cols();
  const auto dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Matrix<T> o(q.rows(), d);
  for (std::size_t b = 0; b + 1 < start.size(); ++b) {
    const int s = start[b], n = start[b + 1] - start[b];
    for (int hd = 0; hd < heads; ++hd) {
      Matrix<T> p = (q.block(s, hd * dh, n, dh) * k.block(s, hd * dh, n, dh).transpose()) * scale;
      for (int i = 0; i < n; ++i) {
        auto row = p.row(i).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
      }
      o.block(s, hd * dh, n, dh).noalias() = p * v.block(s, hd * dh, n, dh);
      if (probs) probs->push_back(std::move(p));
    }
  }
  return o;
}

template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Packed rows of one masked sequence plus the neighbour table.
struct Packing {
  std::vector<int> rows;       // padded index of each packed row
  std::vector<int> neighbours; // packed row of each tap, -1 for zero input
};

Packing pack_sequence(std::span<const std::uint8_t> mask, int ksize) {
  Packing p;
  std::vector<int> packed(mask.size(), -1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    packed[i] = static_cast<int>(p.rows.size());
    p.rows.push_back(static_cast<int>(i));
  }
  if (p.rows.empty()) throw Error(ErrorCode::EmptySequence, "sequence has no unmasked positions");
  const int half = ksize / 2;
  for (int r : p.rows) {
    for (int off = 0; off < ksize; ++off) {
      const int i = r + off - half;
      p.neighbours.push_back(i >= 0 && i < static_cast<int>(mask.size()) ? packed[static_cast<std::size_t>(i)] : -1);
    }
  }
  return p;
}

}  // namespace

template <typename T>
Matrix<T> self_attention(const Matrix<T>& x, std::span<const std::uint8_t> mask, const AttentionWeights<T>& w) {
  if (static_cast<Eigen::Index>(mask.size()) != x.rows()) throw Error(ErrorCode::Precondition, "mask length mismatch");
  const Packing p = pack_sequence(mask, 1);
  Matrix<T> packed(static_cast<Eigen::Index>(p.rows.size()), x.cols());
  for (std::size_t r = 0; r < p.rows.size(); ++r) packed.row(static_cast<Eigen::Index>(r)) = x.row(p.rows[r]);
  const std::vector<int> start{0, static_cast<int>(p.rows.size())};
  const Matrix<T> o = attend<T>(affine(packed, w.wq, w.bq), affine(packed, w.wk, w.bk), affine(packed, w.wv, w.bv),
                                start, w.heads, nullptr);
  const Matrix<T> y = affine(o, w.wo, w.bo);
  Matrix<T> out = Matrix<T>::Zero(x.rows(), y.cols());
  for (std::size_t r = 0; r < p.rows.size(); ++r) out.row(p.rows[r]) = y.row(static_cast<Eigen::Index>(r));
  return out;
}

template <typename T>
Matrix<T> conv_block(const Matrix<T>& x, std::span<const std::uint8_t> mask, const ConvWeights<T>& w, Mode mode) {
  if (static_cast<Eigen::Index>(mask.size()) != x.rows()) throw Error(ErrorCode::Precondition, "mask length mismatch");
  const Packing p = pack_sequence(mask, w.kernel);
  Matrix<T> packed(static_cast<Eigen::Index>(p.rows.size()), x.cols());
  for (std::size_t r = 0; r < p.rows.size(); ++r) packed.row(static_cast<Eigen::Index>(r)) = x.row(p.rows[r]);
  const Matrix<T> y = affine(im2col(packed, p.neighbours, w.kernel), w.weight, w.bias);
  Matrix<T> mean, var;
  if (mode == Mode::Train) {
    mean = y.colwise().mean();
    var = (y.rowwise() - mean.row(0)).array().square().colwise().mean();
  } else {
    mean = w.running_mean;
    var = w.running_var;
  }
  const Matrix<T> inv = (var.array() + static_cast<T>(kNormEps)).rsqrt();
  Matrix<T> bn = ((y.rowwise() - mean.row(0)).array().rowwise() * (inv.array() * w.gamma.array()).row(0)).matrix();
  bn.rowwise() += w.beta.row(0);
  Matrix<T> out = Matrix<T>::Zero(x.rows(), y.cols());
  for (std::size_t r = 0; r < p.rows.size(); ++r) out.row(p.rows[r]) = bn.row(static_cast<Eigen::Index>(r)).cwiseMax(T(0));
  return out;
}

void ModelConfig::validate() const {
  if (d_model <= 0 || num_heads <= 0 || d_model % num_heads != 0)
    throw Error(ErrorCode::Config, "d_model must be a positive multiple of num_heads");
  if (kernel_size <= 0 || kernel_size % 2 == 0) throw Error(ErrorCode::Config, "kernel_size must be odd");
  if (num_classes <= 0) throw Error(ErrorCode::Config, "num_classes must be positive");
  if (max_len <= 0) throw Error(ErrorCode::Config, "max_len must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw Error(ErrorCode::Config, "dropout_rate must be in [0, 1)");
  for (int c : conv_channels)
    if (c <= 0) throw Error(ErrorCode::Config, "conv channels must be positive");
}

template <typename T>
Batch<T> make_batch(std::span<const PointSequence* const> samples, int min_length) {
  Batch<T> batch;
  batch.size = static_cast<int>(samples.size());
  batch.length = min_length;
  for (const auto* s : samples) batch.length = std::max(batch.length, static_cast<int>(s->size()));
  batch.x = Matrix<T>::Zero(static_cast<Eigen::Index>(batch.size) * batch.length, 2);
  batch.mask.assign(static_cast<std::size_t>(batch.size) * batch.length, 0);
  for (int b = 0; b < batch.size; ++b) {
    const auto& s = *samples[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(b) * batch.length + i;
      batch.x(static_cast<Eigen::Index>(row), 0) = static_cast<T>(s.coords[i].x());
      batch.x(static_cast<Eigen::Index>(row), 1) = static_cast<T>(s.coords[i].y());
      batch.mask[row] = 1;
    }
    batch.labels.push_back(s.label);
  }
  return batch;
}

template <typename T>
Batch<T> make_batch(std::span<const PointSequence> samples, int min_length) {
  std::vector<const PointSequence*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch<T>(std::span<const PointSequence* const>(ptrs), min_length);
}

template <typename T>
Matrix<T> positional_encoding(int n, int d, int max_len) {
  if (n > max_len) {
    throw Error(ErrorCode::SequenceTooLong,
                "sequence of length " + std::to_string(n) + " exceeds max_len " + std::to_string(max_len));
  }
  Matrix<T> pe(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int j = 0; j < d; ++j) {
      const int pair = j - j % 2;
      const double angle = pos / std::pow(10000.0, static_cast<double>(pair) / d);
      pe(pos, j) = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
struct Model<T>::Tape {
  std::vector<int> seq_start;  // packed row range of each sample
  std::vector<int> neighbours; // rows x kernel packed indices, -1 for zero input
  Matrix<T> x, h0, norm_hat, z, q, k, v, o;
  std::vector<T> norm_inv;
  std::vector<Matrix<T>> probs;  // per (sample, head)
  std::vector<Matrix<T>> cols, bn_hat, act, drop;
  std::vector<Matrix<T>> bn_inv;
  Matrix<T> pooled;
};

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  init(seed);
}

template <typename T>
void Model<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  const int d = config_.d_model;
  const int k = config_.kernel_size;
  auto add = [&](std::string name, Matrix<T> value) { params_.push_back({std::move(name), std::move(value)}); };

  add("proj.weight", uniform<T>(rng, 2, d, 1.0 / std::sqrt(2.0)));
  add("proj.bias", uniform<T>(rng, 1, d, 1.0 / std::sqrt(2.0)));
  add("norm.gamma", filled<T>(1, d, 1.0));
  add("norm.beta", filled<T>(1, d, 0.0));
  const double xavier = std::sqrt(6.0 / (4.0 * d));
  for (const char* n : {"q", "k", "v"}) {
    add(std::string("attn.w") + n, uniform<T>(rng, d, d, xavier));
    add(std::string("attn.b") + n, filled<T>(1, d, 0.0));
  }
  add("attn.wo", uniform<T>(rng, d, d, 1.0 / std::sqrt(d)));
  add("attn.bo", filled<T>(1, d, 0.0));

  int cin = d;
  for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
    const int cout = config_.conv_channels[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k);
    const std::string p = "conv" + std::to_string(l);
    add(p + ".weight", uniform<T>(rng, static_cast<Eigen::Index>(k) * cin, cout, bound));
    add(p + ".bias", uniform<T>(rng, 1, cout, bound));
    add(p + ".bn_gamma", filled<T>(1, cout, 1.0));
    add(p + ".bn_beta", filled<T>(1, cout, 0.0));
    buffers_.push_back({p + ".bn_mean", filled<T>(1, cout, 0.0)});
    buffers_.push_back({p + ".bn_var", filled<T>(1, cout, 1.0)});
    cin = cout;
  }
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(cin));
  add("head.weight", uniform<T>(rng, cin, config_.num_classes, head_bound));
  add("head.bias", uniform<T>(rng, 1, config_.num_classes, head_bound));

  for (const auto& p : params_) grads_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

template <typename T>
Matrix<T> Model<T>::forward(const Batch<T>& batch, Mode mode, Rng* rng) {
  return run(batch, mode, rng, nullptr);
}

template <typename T>
Matrix<T> Model<T>::run(const Batch<T>& batch, Mode mode, Rng* rng, Tape* tape) {
  const int B = batch.size;
  const int L = batch.length;
  const int d = config_.d_model;
  const int heads = config_.num_heads;
  const int ksize = config_.kernel_size;
  const int half = ksize / 2;
  const bool train = mode == Mode::Train;
  if (B == 0) throw Error(ErrorCode::EmptySequence, "empty batch");
  if (L > config_.max_len) {
    throw Error(ErrorCode::SequenceTooLong,
                "sequence of length " + std::to_string(L) + " exceeds max_len " + std::to_string(config_.max_len));
  }
  if (train && config_.dropout_rate > 0.0 && rng == nullptr)
    throw Error(ErrorCode::Precondition, "train mode with dropout needs an rng");

  // Pack unmasked positions.
  std::vector<int> packed(static_cast<std::size_t>(B) * L, -1);
  std::vector<int> start(static_cast<std::size_t>(B) + 1, 0);
  std::vector<int> pos;
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < L; ++i) {
      if (!batch.valid(b, i)) continue;
      packed[static_cast<std::size_t>(b) * L + i] = static_cast<int>(pos.size());
      pos.push_back(i);
    }
    start[static_cast<std::size_t>(b) + 1] = static_cast<int>(pos.size());
    if (start[b + 1] == start[b])
      throw Error(ErrorCode::EmptySequence, "sample " + std::to_string(b) + " has no unmasked positions");
  }
  const auto R = static_cast<Eigen::Index>(pos.size());
  std::vector<int> nbr(static_cast<std::size_t>(R) * ksize, -1);
  for (int b = 0; b < B; ++b) {
    for (int r = start[b]; r < start[b + 1]; ++r) {
      for (int o = 0; o < ksize; ++o) {
        const int i = pos[r] + o - half;
        if (i >= 0 && i < L) nbr[static_cast<std::size_t>(r) * ksize + o] = packed[static_cast<std::size_t>(b) * L + i];
      }
    }
  }

  Matrix<T> x(R, 2);
  for (int b = 0; b < B; ++b)
    for (int r = start[b]; r < start[b + 1]; ++r) x.row(r) = batch.x.row(static_cast<Eigen::Index>(b) * L + pos[r]);

  const Matrix<T> pe = positional_encoding<T>(L, d, config_.max_len);
  Matrix<T> h = affine(x, params_[kProjW].value, params_[kProjB].value);
  for (Eigen::Index r = 0; r < R; ++r) h.row(r) += pe.row(pos[r]);

  // Pre-norm attention with residual.
  Matrix<T> norm_hat(R, d);
  std::vector<T> norm_inv(static_cast<std::size_t>(R));
  for (Eigen::Index r = 0; r < R; ++r) {
    const T mean = h.row(r).mean();
    const T var = (h.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    norm_inv[static_cast<std::size_t>(r)] = inv;
    norm_hat.row(r) = (h.row(r).array() - mean) * inv;
  }
  Matrix<T> z = norm_hat.array().rowwise() * params_[kNormGamma].value.row(0).array();
  z.rowwise() += params_[kNormBeta].value.row(0);

  Matrix<T> q = affine(z, params_[kWq].value, params_[kBq].value);
  Matrix<T> k = affine(z, params_[kWk].value, params_[kBk].value);
  Matrix<T> v = affine(z, params_[kWv].value, params_[kBv].value);
  std::vector<Matrix<T>> probs;
  Matrix<T> o = attend<T>(q, k, v, start, heads, tape ? &probs : nullptr);
  Matrix<T> act = h + affine(o, params_[kWo].value, params_[kBo].value);

  if (tape) {
    tape->seq_start = start;
    tape->neighbours = nbr;
    tape->x = std::move(x);
    tape->h0 = std::move(h);
    tape->norm_hat = std::move(norm_hat);
    tape->norm_inv = std::move(norm_inv);
    tape->z = std::move(z);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->o = std::move(o);
    tape->probs = std::move(probs);
  }

  for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
    const std::size_t slot = conv_slot(l);
    Matrix<T> col = im2col(act, nbr, ksize);
    Matrix<T> y = affine(col, params_[slot].value, params_[slot + 1].value);

    Matrix<T> mean, inv;
    auto& run_mean = buffers_[2 * l].value;
    auto& run_var = buffers_[2 * l + 1].value;
    if (train) {
      mean = y.colwise().mean();
      Matrix<T> var = (y.rowwise() - mean.row(0)).array().square().colwise().mean();
      inv = (var.array() + static_cast<T>(kNormEps)).rsqrt();
      const T unbias = R > 1 ? static_cast<T>(R) / static_cast<T>(R - 1) : T(1);
      run_mean = run_mean * static_cast<T>(1.0 - kBnMomentum) + mean * static_cast<T>(kBnMomentum);
      run_var = run_var * static_cast<T>(1.0 - kBnMomentum) + var * (static_cast<T>(kBnMomentum) * unbias);
    } else {
      mean = run_mean;
      inv = (run_var.array() + static_cast<T>(kNormEps)).rsqrt();
    }
    Matrix<T> hat = (y.rowwise() - mean.row(0)).array().rowwise() * inv.row(0).array();
    Matrix<T> out = hat.array().rowwise() * params_[slot + 2].value.row(0).array();
    out.rowwise() += params_[slot + 3].value.row(0);
    out = out.cwiseMax(T(0));

    Matrix<T> drop;
    if (l == 0 && train && config_.dropout_rate > 0.0) {
      const double p = config_.dropout_rate;
      const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
      drop.resize(R, out.cols());
      for (Eigen::Index i = 0; i < drop.size(); ++i) drop.data()[i] = uniform01(*rng) < p ? T(0) : keep_scale;
    }
    if (tape) {
      tape->cols.push_back(std::move(col));
      tape->bn_hat.push_back(std::move(hat));
      tape->bn_inv.push_back(std::move(inv));
      tape->act.push_back(out);
      tape->drop.push_back(drop);
    }
    act = drop.size() > 0 ? Matrix<T>(out.cwiseProduct(drop)) : std::move(out);
  }

  Matrix<T> pooled(B, act.cols());
  for (int b = 0; b < B; ++b) pooled.row(b) = act.middleRows(start[b], start[b + 1] - start[b]).colwise().mean();
  const std::size_t head = conv_slot(config_.conv_channels.size());
  Matrix<T> logits = affine(pooled, params_[head].value, params_[head + 1].value);
  if (tape) tape->pooled = std::move(pooled);
  return logits;
}

template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> labels, Matrix<T>* grad) {
  const auto B = logits.rows();
  if (static_cast<std::size_t>(B) != labels.size()) throw Error(ErrorCode::Precondition, "label count mismatch");
  T loss = 0;
  if (grad) grad->resize(B, logits.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= logits.cols()) throw Error(ErrorCode::Precondition, "label out of range");
    const T mx = logits.row(b).maxCoeff();
    const auto e = (logits.row(b).array() - mx).exp();
    const T sum = e.sum();
    loss += std::log(sum) + mx - logits(b, y);
    if (grad) {
      grad->row(b) = e / (sum * static_cast<T>(B));
      (*grad)(b, y) -= T(1) / static_cast<T>(B);
    }
  }
  return loss / static_cast<T>(B);
}

template <typename T>
T Model<T>::loss_and_backward(const Batch<T>& batch, Rng& rng) {
  Tape tape;
  const Matrix<T> logits = run(batch, Mode::Train, &rng, &tape);
  Matrix<T> dlogits;
  const T loss = softmax_cross_entropy<T>(logits, batch.labels, &dlogits);

  const int B = batch.size;
  const int d = config_.d_model;
  const int heads = config_.num_heads;
  const int dh = d / heads;
  const int ksize = config_.kernel_size;
  const auto& start = tape.seq_start;
  const Eigen::Index R = tape.x.rows();
  const std::size_t nconv = config_.conv_channels.size();
  const std::size_t head = conv_slot(nconv);

  grads_[head].noalias() = tape.pooled.transpose() * dlogits;
  grads_[head + 1] = dlogits.colwise().sum();
  const Matrix<T> dpooled = dlogits * params_[head].value.transpose();

  Matrix<T> dact(R, dpooled.cols());
  for (int b = 0; b < B; ++b) {
    const int n = start[b + 1] - start[b];
    dact.middleRows(start[b], n).rowwise() = dpooled.row(b) / static_cast<T>(n);
  }

  for (std::size_t l = nconv; l-- > 0;) {
    const std::size_t slot = conv_slot(l);
    if (tape.drop[l].size() > 0) dact = dact.cwiseProduct(tape.drop[l]);
    Matrix<T> dy = (tape.act[l].array() > T(0)).select(dact, T(0));
    const Matrix<T>& hat = tape.bn_hat[l];
    grads_[slot + 2] = dy.cwiseProduct(hat).colwise().sum();
    grads_[slot + 3] = dy.colwise().sum();
    Matrix<T> dhat = dy.array().rowwise() * params_[slot + 2].value.row(0).array();
    const Matrix<T> sum_dhat = dhat.colwise().sum();
    const Matrix<T> sum_dhat_hat = dhat.cwiseProduct(hat).colwise().sum();
    const T rn = static_cast<T>(R);
    Matrix<T> dpre = (dhat * rn).rowwise() - sum_dhat.row(0);
    dpre -= (hat.array().rowwise() * sum_dhat_hat.row(0).array()).matrix();
    dpre = dpre.array().rowwise() * (tape.bn_inv[l].row(0).array() / rn);

    grads_[slot].noalias() = tape.cols[l].transpose() * dpre;
    grads_[slot + 1] = dpre.colwise().sum();
    const Matrix<T> dcol = dpre * params_[slot].value.transpose();
    const auto cin = dcol.cols() / ksize;
    Matrix<T> dprev = Matrix<T>::Zero(R, cin);
    for (Eigen::Index r = 0; r < R; ++r) {
      for (int off = 0; off < ksize; ++off) {
        const int nb = tape.neighbours[static_cast<std::size_t>(r) * ksize + off];
        if (nb >= 0) dprev.row(nb) += dcol.block(r, off * cin, 1, cin);
      }
    }
    dact = std::move(dprev);
  }

  // Residual: dh0 collects the skip path and the attention path.
  Matrix<T> dh0 = dact;
  grads_[kWo].noalias() = tape.o.transpose() * dact;
  grads_[kBo] = dact.colwise().sum();
  const Matrix<T> dout = dact * params_[kWo].value.transpose();

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Matrix<T> dq = Matrix<T>::Zero(R, d), dk = Matrix<T>::Zero(R, d), dv = Matrix<T>::Zero(R, d);
  std::size_t pi = 0;
  for (int b = 0; b < B; ++b) {
    const int s = start[b], n = start[b + 1] - start[b];
    for (int hd = 0; hd < heads; ++hd, ++pi) {
      const Matrix<T>& p = tape.probs[pi];
      const Matrix<T> dob = dout.block(s, hd * dh, n, dh);
      dv.block(s, hd * dh, n, dh).noalias() = p.transpose() * dob;
      const Matrix<T> dp = dob * tape.v.block(s, hd * dh, n, dh).transpose();
      Matrix<T> ds = dp;
      for (int i = 0; i < n; ++i) {
        const T dot = dp.row(i).dot(p.row(i));
        ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
      }
      dq.block(s, hd * dh, n, dh).noalias() = ds * tape.k.block(s, hd * dh, n, dh) * scale;
      dk.block(s, hd * dh, n, dh).noalias() = ds.transpose() * tape.q.block(s, hd * dh, n, dh) * scale;
    }
  }
  grads_[kWq].noalias() = tape.z.transpose() * dq;
  grads_[kWk].noalias() = tape.z.transpose() * dk;
  grads_[kWv].noalias() = tape.z.transpose() * dv;
  grads_[kBq] = dq.colwise().sum();
  grads_[kBk] = dk.colwise().sum();
  grads_[kBv] = dv.colwise().sum();
  Matrix<T> dz = dq * params_[kWq].value.transpose();
  dz.noalias() += dk * params_[kWk].value.transpose();
  dz.noalias() += dv * params_[kWv].value.transpose();

  grads_[kNormGamma] = dz.cwiseProduct(tape.norm_hat).colwise().sum();
  grads_[kNormBeta] = dz.colwise().sum();
  const Matrix<T> dhat = dz.array().rowwise() * params_[kNormGamma].value.row(0).array();
  const T dn = static_cast<T>(d);
  for (Eigen::Index r = 0; r < R; ++r) {
    const T s1 = dhat.row(r).sum();
    const T s2 = dhat.row(r).dot(tape.norm_hat.row(r));
    dh0.row(r).array() += (dhat.row(r).array() * dn - s1 - tape.norm_hat.row(r).array() * s2) *
                          (tape.norm_inv[static_cast<std::size_t>(r)] / dn);
  }

  grads_[kProjW].noalias() = tape.x.transpose() * dh0;
  grads_[kProjB] = dh0.colwise().sum();
  return loss;
}

template <typename T>
Adam<T>::Adam(const AdamConfig& config, const std::vector<Tensor<T>>& params) : config_(config) {
  for (const auto& p : params) {
    m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename T>
void Adam<T>::step(std::vector<Tensor<T>>& params, const std::vector<Matrix<T>>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const T decay = static_cast<T>(1.0 - config_.lr * config_.weight_decay);
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  const T step = static_cast<T>(config_.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.array();
    const auto g = grads[i].array();
    auto m = m_[i].array();
    auto v = v_[i].array();
    p *= decay;
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    p -= step * m / (v.sqrt() * inv_sqrt_c2 + eps);
  }
}

std::uint64_t count_flops(const ModelConfig& config, std::uint64_t n) {
  const std::uint64_t d = static_cast<std::uint64_t>(config.d_model);
  const std::uint64_t k = static_cast<std::uint64_t>(config.kernel_size);
  std::uint64_t total = 4 * n * d;
  total += 2 * (3 * n * d * d + 2 * n * n * d + n * d * d);
  std::uint64_t cin = d;
  for (int c : config.conv_channels) {
    const auto cout = static_cast<std::uint64_t>(c);
    total += 2 * n * k * cin * cout + 4 * n * cout;
    cin = cout;
  }
  total += 2 * n * cin;
  total += 2 * cin * static_cast<std::uint64_t>(config.num_classes);
  return total;
}

double count_flops_at(const ModelConfig& config, double n) {
  const double d = config.d_model;
  const double k = config.kernel_size;
  double total = 4 * n * d + 2 * (3 * n * d * d + 2 * n * n * d + n * d * d);
  double cin = d;
  for (int c : config.conv_channels) {
    total += 2 * n * k * cin * c + 4 * n * c;
    cin = c;
  }
  return total + 2 * n * cin + 2 * cin * config.num_classes;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'G', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(V))) throw Error(ErrorCode::Checkpoint, "checkpoint truncated");
  return value;
}

ModelConfig read_config(std::istream& in, std::uint32_t& scalar_bytes) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw Error(ErrorCode::Checkpoint, "not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw Error(ErrorCode::Checkpoint, "unsupported checkpoint version " + std::to_string(version));
  scalar_bytes = get<std::uint32_t>(in);
  if (scalar_bytes != 4 && scalar_bytes != 8) throw Error(ErrorCode::Checkpoint, "bad scalar width");
  ModelConfig c;
  c.d_model = get<std::int32_t>(in);
  c.num_heads = get<std::int32_t>(in);
  c.kernel_size = get<std::int32_t>(in);
  c.num_classes = get<std::int32_t>(in);
  c.max_len = get<std::int32_t>(in);
  c.dropout_rate = get<double>(in);
  const auto layers = get<std::uint32_t>(in);
  if (layers > 64) throw Error(ErrorCode::Checkpoint, "implausible layer count");
  c.conv_channels.resize(layers);
  for (auto& ch : c.conv_channels) ch = get<std::int32_t>(in);
  return c;
}

template <typename T, typename S>
void read_values(std::istream& in, Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(get<S>(in));
}

}  // namespace

template <typename T>
void save_checkpoint(std::ostream& out, const Model<T>& model) {
  const ModelConfig& c = model.config();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, sizeof(T));
  for (int v : {c.d_model, c.num_heads, c.kernel_size, c.num_classes, c.max_len}) put<std::int32_t>(out, v);
  put<double>(out, c.dropout_rate);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv_channels.size()));
  for (int ch : c.conv_channels) put<std::int32_t>(out, ch);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size() + model.buffers().size()));
  for (const auto* group : {&model.parameters(), &model.buffers()}) {
    for (const auto& t : *group) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
      out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(T)));
    }
  }
  if (!out) throw Error(ErrorCode::Io, "checkpoint write failed");
}

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  save_checkpoint(out, model);
}

template <typename T>
Model<T> load_checkpoint(std::istream& in) {
  std::uint32_t scalar_bytes = 0;
  const ModelConfig config = read_config(in, scalar_bytes);
  Model<T> model(config);
  const auto count = get<std::uint32_t>(in);
  if (count != model.parameters().size() + model.buffers().size())
    throw Error(ErrorCode::Checkpoint, "tensor count does not match the configuration");
  for (auto* group : {&model.parameters(), &model.buffers()}) {
    for (auto& t : *group) {
      const auto len = get<std::uint32_t>(in);
      std::string name(len, '\0');
      if (!in.read(name.data(), len)) throw Error(ErrorCode::Checkpoint, "checkpoint truncated");
      if (name != t.name) throw Error(ErrorCode::Checkpoint, "expected tensor " + t.name + ", found " + name);
      const auto rows = get<std::uint32_t>(in);
      const auto cols = get<std::uint32_t>(in);
      if (rows != t.value.rows() || cols != t.value.cols()) throw Error(ErrorCode::Checkpoint, "shape mismatch for " + name);
      if (scalar_bytes == 4) read_values<T, float>(in, t.value);
      else read_values<T, double>(in, t.value);
    }
  }
  return model;
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path);
  return load_checkpoint<T>(in);
}

ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path);
  std::uint32_t scalar_bytes = 0;
  return read_config(in, scalar_bytes);
}

#define POLYGONET_INSTANTIATE(T)                                                                 \
  template Batch<T> make_batch<T>(std::span<const PointSequence* const>, int);                   \
  template Batch<T> make_batch<T>(std::span<const PointSequence>, int);                          \
  template Matrix<T> positional_encoding<T>(int, int, int);                                      \
  template Matrix<T> self_attention<T>(const Matrix<T>&, std::span<const std::uint8_t>,          \
                                       const AttentionWeights<T>&);                              \
  template Matrix<T> conv_block<T>(const Matrix<T>&, std::span<const std::uint8_t>,              \
                                   const ConvWeights<T>&, Mode);                                 \
  template class Model<T>;                                                                       \
  template T softmax_cross_entropy<T>(const Matrix<T>&, std::span<const int>, Matrix<T>*);       \
  template class Adam<T>;                                                                        \
  template void save_checkpoint<T>(std::ostream&, const Model<T>&);                              \
  template void save_checkpoint<T>(const std::string&, const Model<T>&);                         \
  template Model<T> load_checkpoint<T>(std::istream&);                                           \
  template Model<T> load_checkpoint<T>(const std::string&);

POLYGONET_INSTANTIATE(float)
POLYGONET_INSTANTIATE(double)

}  // namespace polygonet
