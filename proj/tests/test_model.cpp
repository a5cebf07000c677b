#include <doctest.h>

#include "polygonet/error.hpp"
#include "polygonet/model.hpp"

#include <cmath>
#include <sstream>

using namespace polygonet;
using Md = Matrix<double>;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.num_heads = 2;
  c.conv_channels = {4, 4, 4, 4, 4};
  c.num_classes = 3;
  return c;
}

Md random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform01(rng) - 1.0) * scale;
  return m;
}

PointSequence random_sequence(Rng& rng, int n, int label) {
  PointSequence s;
  s.label = label;
  for (int i = 0; i < n; ++i) s.coords.emplace_back(uniform01(rng), uniform01(rng));
  return s;
}

template <typename T>
const Matrix<T>& param(const Model<T>& m, const std::string& name) {
  for (const auto& t : m.parameters())
    if (t.name == name) return t.value;
  for (const auto& t : m.buffers())
    if (t.name == name) return t.value;
  throw std::runtime_error("no tensor " + name);
}

AttentionWeights<double> random_attention(Rng& rng, int d, int heads) {
  AttentionWeights<double> w;
  w.heads = heads;
  for (Md* m : {&w.wq, &w.wk, &w.wv, &w.wo}) *m = random_matrix(rng, d, d);
  for (Md* m : {&w.bq, &w.bk, &w.bv, &w.bo}) *m = random_matrix(rng, 1, d);
  return w;
}

// Double-loop attention over unmasked keys.
Md naive_attention(const Md& x, const std::vector<std::uint8_t>& mask, const AttentionWeights<double>& w) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::Index dh = d / w.heads;
  auto project = [&](const Md& wm, const Md& b) {
    Md out(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) {
        double acc = b(0, j);
        for (Eigen::Index t = 0; t < d; ++t) acc += x(i, t) * wm(t, j);
        out(i, j) = acc;
      }
    return out;
  };
  const Md q = project(w.wq, w.bq), k = project(w.wk, w.bk), v = project(w.wv, w.bv);
  Md concat = Md::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    for (int h = 0; h < w.heads; ++h) {
      std::vector<double> score(static_cast<std::size_t>(n), -1e300);
      double mx = -1e300;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        double s = 0;
        for (Eigen::Index t = 0; t < dh; ++t) s += q(i, h * dh + t) * k(j, h * dh + t);
        score[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, score[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (mask[static_cast<std::size_t>(j)]) z += std::exp(score[static_cast<std::size_t>(j)] - mx);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        const double a = std::exp(score[static_cast<std::size_t>(j)] - mx) / z;
        for (Eigen::Index t = 0; t < dh; ++t) concat(i, h * dh + t) += a * v(j, h * dh + t);
      }
    }
  }
  Md out = Md::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < d; ++j) {
      double acc = w.bo(0, j);
      for (Eigen::Index t = 0; t < d; ++t) acc += concat(i, t) * w.wo(t, j);
      out(i, j) = acc;
    }
  }
  return out;
}

// Sliding-window convolution with zero padding, then running-stat batch norm and ReLU.
Md naive_conv_eval(const Md& x, const std::vector<std::uint8_t>& mask, const ConvWeights<double>& w) {
  const Eigen::Index n = x.rows(), cin = x.cols(), cout = w.weight.cols();
  const int half = w.kernel / 2;
  Md out = Md::Zero(n, cout);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index c = 0; c < cout; ++c) {
      double acc = w.bias(0, c);
      for (int o = 0; o < w.kernel; ++o) {
        const Eigen::Index j = i + o - half;
        if (j < 0 || j >= n || !mask[static_cast<std::size_t>(j)]) continue;
        for (Eigen::Index t = 0; t < cin; ++t) acc += x(j, t) * w.weight(o * cin + t, c);
      }
      const double bn = (acc - w.running_mean(0, c)) / std::sqrt(w.running_var(0, c) + 1e-5) * w.gamma(0, c) + w.beta(0, c);
      out(i, c) = std::max(bn, 0.0);
    }
  }
  return out;
}

ConvWeights<double> random_conv(Rng& rng, int cin, int cout, int kernel) {
  ConvWeights<double> w;
  w.kernel = kernel;
  w.weight = random_matrix(rng, kernel * cin, cout);
  w.bias = random_matrix(rng, 1, cout);
  w.gamma = random_matrix(rng, 1, cout);
  w.beta = random_matrix(rng, 1, cout, 0.2);
  w.running_mean = random_matrix(rng, 1, cout, 0.3);
  w.running_var = random_matrix(rng, 1, cout, 0.5).array() + 1.0;
  return w;
}

// Eval-mode model evaluated with explicit loops for one unpadded sequence.
Eigen::VectorXd naive_model_logits(const Model<double>& m, const PointSequence& s) {
  const ModelConfig& c = m.config();
  const int n = static_cast<int>(s.size()), d = c.d_model;
  Md h(n, d);
  const Md& pw = param(m, "proj.weight");
  const Md& pb = param(m, "proj.bias");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double freq = std::pow(10000.0, static_cast<double>(j - j % 2) / d);
      const double pe = j % 2 == 0 ? std::sin(i / freq) : std::cos(i / freq);
      h(i, j) = s.coords[static_cast<std::size_t>(i)].x() * pw(0, j) + s.coords[static_cast<std::size_t>(i)].y() * pw(1, j) +
                pb(0, j) + pe;
    }
  Md z(n, d);
  for (int i = 0; i < n; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < d; ++j) mean += h(i, j) / d;
    for (int j = 0; j < d; ++j) var += (h(i, j) - mean) * (h(i, j) - mean) / d;
    for (int j = 0; j < d; ++j)
      z(i, j) = (h(i, j) - mean) / std::sqrt(var + 1e-5) * param(m, "norm.gamma")(0, j) + param(m, "norm.beta")(0, j);
  }
  AttentionWeights<double> w;
  w.heads = c.num_heads;
  w.wq = param(m, "attn.wq"), w.bq = param(m, "attn.bq"), w.wk = param(m, "attn.wk"), w.bk = param(m, "attn.bk");
  w.wv = param(m, "attn.wv"), w.bv = param(m, "attn.bv"), w.wo = param(m, "attn.wo"), w.bo = param(m, "attn.bo");
  const std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 1);
  Md act = h + naive_attention(z, mask, w);
  for (std::size_t l = 0; l < c.conv_channels.size(); ++l) {
    const std::string p = "conv" + std::to_string(l);
    ConvWeights<double> cw{param(m, p + ".weight"), param(m, p + ".bias"),    param(m, p + ".bn_gamma"),
                           param(m, p + ".bn_beta"), param(m, p + ".bn_mean"), param(m, p + ".bn_var"),
                           c.kernel_size};
    act = naive_conv_eval(act, mask, cw);
  }
  Eigen::VectorXd pooled = act.colwise().mean().transpose();
  return (pooled.transpose() * param(m, "head.weight") + param(m, "head.bias")).transpose();
}

double train_loss(Model<double>& m, const Batch<double>& batch, std::uint64_t seed) {
  Rng rng(seed);
  return softmax_cross_entropy<double>(m.forward(batch, Mode::Train, &rng), batch.labels);
}

}  // namespace

TEST_CASE("positional encoding") {
  const Md pe = positional_encoding<double>(50, 16);
  for (int j = 0; j < 16; ++j) CHECK(pe(0, j) == (j % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe.maxCoeff() <= 1.0);
  CHECK(pe.minCoeff() >= -1.0);
  CHECK(pe(1, 0) == doctest::Approx(0.841471).epsilon(1e-6));
  // Column 2 has period 2 pi 10000^(2/16) in position.
  const double freq = std::pow(10000.0, 2.0 / 16.0);
  CHECK(pe(7, 2) == doctest::Approx(std::sin(7.0 / freq)));
  CHECK_THROWS_AS(positional_encoding<double>(3000, 8, 2048), Error);
}

TEST_CASE("self attention against a double-loop oracle") {
  Rng rng(3);
  const auto w1 = random_attention(rng, 4, 1);
  const Md x = random_matrix(rng, 3, 4);
  const std::vector<std::uint8_t> all{1, 1, 1};
  CHECK((self_attention<double>(x, all, w1) - naive_attention(x, all, w1)).cwiseAbs().maxCoeff() < 1e-6);

  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_attention(rng, 8, 2);
    const Md xr = random_matrix(rng, 6, 8);
    std::vector<std::uint8_t> mask(6);
    for (auto& v : mask) v = uniform01(rng) < 0.7;
    mask[static_cast<std::size_t>(trial % 6)] = 1;
    const Md got = self_attention<double>(xr, mask, w);
    CHECK((got - naive_attention(xr, mask, w)).cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < 6; ++i)
      if (!mask[static_cast<std::size_t>(i)]) CHECK(got.row(i).isZero());
  }
}

TEST_CASE("self attention special cases") {
  Rng rng(4);
  const auto w = random_attention(rng, 4, 2);
  const Md one = random_matrix(rng, 1, 4);
  const std::vector<std::uint8_t> m1{1};
  const Md expected = (one * w.wv + w.bv) * w.wo + w.bo;
  CHECK((self_attention<double>(one, m1, w) - expected).cwiseAbs().maxCoeff() < 1e-12);

  // Identical tokens: uniform weights, so every row is the projection of the shared V.
  const Md same = one.replicate(5, 1);
  const Md out = self_attention<double>(same, std::vector<std::uint8_t>(5, 1), w);
  for (int i = 0; i < 5; ++i) CHECK((out.row(i) - expected).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(self_attention<double>(same, std::vector<std::uint8_t>(5, 0), w), Error);
}

TEST_CASE("conv block") {
  Rng rng(5);
  const Md x = random_matrix(rng, 7, 4);
  const std::vector<std::uint8_t> all(7, 1);

  ConvWeights<double> id;
  id.kernel = 3;
  id.weight = Md::Zero(12, 4);
  id.weight.block(4, 0, 4, 4).setIdentity();
  id.bias = Md::Zero(1, 4);
  id.gamma = Md::Ones(1, 4);
  id.beta = Md::Zero(1, 4);
  id.running_mean = Md::Zero(1, 4);
  id.running_var = Md::Ones(1, 4);
  const Md relu = x.cwiseMax(0.0) / std::sqrt(1.0 + 1e-5);
  CHECK((conv_block<double>(x, all, id, Mode::Eval) - relu).cwiseAbs().maxCoeff() < 1e-12);

  ConvWeights<double> zero = id;
  zero.weight.setZero();
  CHECK(conv_block<double>(x, all, zero, Mode::Eval).isZero());

  for (int trial = 0; trial < 20; ++trial) {
    const int kernel = 1 + 2 * (trial % 3);
    const auto w = random_conv(rng, 4, 5, kernel);
    std::vector<std::uint8_t> mask(7);
    for (auto& v : mask) v = uniform01(rng) < 0.8;
    mask[0] = 1;
    CHECK((conv_block<double>(x, mask, w, Mode::Eval) - naive_conv_eval(x, mask, w)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("train-mode conv block normalises unmasked rows") {
  Rng rng(6);
  auto w = random_conv(rng, 3, 4, 3);
  w.gamma = Md::Ones(1, 4);
  w.beta = Md::Constant(1, 4, 10.0);  // keeps ReLU inactive
  const Md x = random_matrix(rng, 6, 3);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};
  const Md out = conv_block<double>(x, mask, w, Mode::Train);
  for (Eigen::Index c = 0; c < 4; ++c) {
    double mean = 0;
    for (int i = 0; i < 6; ++i)
      if (mask[static_cast<std::size_t>(i)]) mean += out(i, c) / 5.0;
    CHECK(mean == doctest::Approx(10.0));
  }
  CHECK(out.row(2).isZero());
}

TEST_CASE("parameter count of the default configuration") {
  const Model<float> m(ModelConfig{});
  CHECK(m.parameter_count() == 2134410);
  CHECK(m.parameters().size() == 12 + 4 * 5 + 2);
  CHECK(m.buffers().size() == 10);
}

TEST_CASE("model forward matches an explicit-loop evaluation") {
  Rng rng(8);
  Model<double> m(tiny_config(), 17);
  // Non-trivial running statistics.
  for (auto& b : m.buffers()) b.value = b.value.array() + random_matrix(rng, 1, b.value.cols(), 0.2).array().abs();
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<PointSequence> seqs{random_sequence(rng, 3 + trial, 0), random_sequence(rng, 7, 1)};
    const Md logits = m.forward(make_batch<double>(seqs), Mode::Eval);
    for (int b = 0; b < 2; ++b) {
      const Eigen::VectorXd expected = naive_model_logits(m, seqs[static_cast<std::size_t>(b)]);
      CHECK((logits.row(b).transpose() - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("forward shape, duplication and errors") {
  Rng rng(9);
  Model<float> m(ModelConfig{}, 1);
  const auto s = random_sequence(rng, 12, 2);
  const std::vector<PointSequence> seqs{s, random_sequence(rng, 5, 1), s};
  const Matrix<float> logits = m.forward(make_batch<float>(seqs), Mode::Eval);
  CHECK(logits.rows() == 3);
  CHECK(logits.cols() == 10);
  CHECK(logits.allFinite());
  CHECK((logits.row(0) - logits.row(2)).cwiseAbs().maxCoeff() < 1e-6f);

  ModelConfig short_cfg = tiny_config();
  short_cfg.max_len = 4;
  Model<double> ms(short_cfg);
  const std::vector<PointSequence> long_seq{random_sequence(rng, 6, 0)};
  try {
    ms.forward(make_batch<double>(long_seq), Mode::Eval);
    FAIL("expected sequence-too-long");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SequenceTooLong);
  }
  const std::vector<PointSequence> empty{PointSequence{}};
  try {
    Model<double>(tiny_config()).forward(make_batch<double>(empty, 3), Mode::Eval);
    FAIL("expected empty-sequence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySequence);
  }
}

TEST_CASE("eval logits do not depend on padding") {
  Rng rng(10);
  Model<float> m(ModelConfig{}, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(uniform01(rng) * 40);
    const std::vector<PointSequence> seq{random_sequence(rng, n, 0)};
    const Matrix<float> a = m.forward(make_batch<float>(seq), Mode::Eval);
    const Matrix<float> b = m.forward(make_batch<float>(seq, n + 1 + trial % 17), Mode::Eval);
    worst = std::max(worst, static_cast<double>((a - b).cwiseAbs().maxCoeff()));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("cross-entropy") {
  const Md uniform = Md::Constant(4, 5, 0.3);
  const std::vector<int> labels{0, 1, 2, 4};
  CHECK(softmax_cross_entropy<double>(uniform, labels) == doctest::Approx(std::log(5.0)));
}

TEST_CASE("gradients match central differences") {
  Rng rng(12);
  const std::vector<PointSequence> seqs{random_sequence(rng, 5, 0), random_sequence(rng, 4, 2)};
  const Batch<double> batch = make_batch<double>(seqs);
  Model<double> m(tiny_config(), 21);
  const std::uint64_t dropout_seed = 99;
  Rng drop(dropout_seed);
  const double loss = m.loss_and_backward(batch, drop);
  CHECK(loss == doctest::Approx(train_loss(m, batch, dropout_seed)).epsilon(1e-14));
  const auto grads = m.gradients();

  const double step = 1e-4;
  for (std::size_t t = 0; t < m.parameters().size(); ++t) {
    auto& value = m.parameters()[t].value;
    Md numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = train_loss(m, batch, dropout_seed);
      value.data()[i] = saved - step;
      const double down = train_loss(m, batch, dropout_seed);
      value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * step);
    }
    // Key biases and pre-norm conv biases have identically zero gradient;
    // there both sides are rounding noise and only an absolute bound applies.
    INFO(m.parameters()[t].name);
    const double scale = grads[t].norm() + numeric.norm();
    if (scale < 1e-8) continue;
    CHECK((grads[t] - numeric).norm() / scale <= 1e-3);
  }

  // A class absent from the batch: head bias gradient is its mean probability.
  Rng again(dropout_seed);
  const Md logits = m.forward(batch, Mode::Train, &again);
  double mean_p = 0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const Eigen::RowVectorXd e = (logits.row(b).array() - logits.row(b).maxCoeff()).exp();
    mean_p += e(1) / e.sum() / static_cast<double>(logits.rows());
  }
  CHECK(grads.back()(0, 1) == doctest::Approx(mean_p).epsilon(1e-12));
  CHECK(grads.back()(0, 1) > 0.0);
}

TEST_CASE("backward is deterministic") {
  Rng rng(13);
  const std::vector<PointSequence> seqs{random_sequence(rng, 9, 0), random_sequence(rng, 6, 1)};
  const auto batch = make_batch<double>(seqs);
  Model<double> a(tiny_config(), 5), b(tiny_config(), 5);
  Rng ra(1), rb(1);
  CHECK(a.loss_and_backward(batch, ra) == b.loss_and_backward(batch, rb));
  for (std::size_t t = 0; t < a.gradients().size(); ++t) CHECK(a.gradients()[t] == b.gradients()[t]);
}

TEST_CASE("adam") {
  std::vector<Tensor<double>> params{{"w", Md::Constant(2, 2, 0.5)}};
  const std::vector<Md> zero{Md::Zero(2, 2)};
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam<double> still(cfg, params);
  still.step(params, zero);
  CHECK(params[0].value == Md::Constant(2, 2, 0.5));

  std::vector<Tensor<double>> scalar{{"s", Md::Constant(1, 1, 0.0)}};
  Adam<double> first(cfg, scalar);
  first.step(scalar, {Md::Constant(1, 1, 1.0)});
  CHECK(scalar[0].value(0, 0) == doctest::Approx(-1e-5).epsilon(1e-6));

  // 100 random steps against a scalar re-implementation.
  Rng rng(14);
  AdamConfig hot{1e-2, 0.9, 0.999, 1e-8, 0.05};
  std::vector<Tensor<double>> p{{"a", random_matrix(rng, 3, 2)}, {"b", random_matrix(rng, 1, 4)}};
  std::vector<std::vector<double>> ref, m1, m2;
  for (const auto& t : p) {
    ref.emplace_back(t.value.data(), t.value.data() + t.value.size());
    m1.emplace_back(t.value.size(), 0.0);
    m2.emplace_back(t.value.size(), 0.0);
  }
  Adam<double> opt(hot, p);
  for (int step = 1; step <= 100; ++step) {
    std::vector<Md> g{random_matrix(rng, 3, 2), random_matrix(rng, 1, 4)};
    opt.step(p, g);
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (std::size_t i = 0; i < ref[t].size(); ++i) {
        const double gi = g[t].data()[i];
        ref[t][i] *= 1.0 - hot.lr * hot.weight_decay;
        m1[t][i] = 0.9 * m1[t][i] + 0.1 * gi;
        m2[t][i] = 0.999 * m2[t][i] + 0.001 * gi * gi;
        const double mh = m1[t][i] / (1.0 - std::pow(0.9, step));
        const double vh = m2[t][i] / (1.0 - std::pow(0.999, step));
        ref[t][i] -= hot.lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }
  for (std::size_t t = 0; t < ref.size(); ++t)
    for (std::size_t i = 0; i < ref[t].size(); ++i) CHECK(std::abs(p[t].value.data()[i] - ref[t][i]) < 1e-10);
  CHECK(opt.steps() == 100);
}

TEST_CASE("flop counter") {
  ModelConfig def;
  CHECK(count_flops(def, 60) == 255672320ULL);
  CHECK(count_flops(def, 12) == 51003392ULL);
  CHECK(count_flops(tiny_config(), 5) == 6864ULL);
  ModelConfig wide;
  wide.d_model = 32;
  wide.conv_channels = {16, 32};
  wide.kernel_size = 5;
  wide.num_classes = 7;
  CHECK(count_flops(wide, 100) == 3162048ULL);
  ModelConfig bare;
  bare.d_model = 16;
  bare.num_heads = 1;
  bare.conv_channels = {};
  bare.num_classes = 2;
  CHECK(count_flops(bare, 9) == 24544ULL);

  // Head only: no attention width, no convolutions.
  ModelConfig head_only = bare;
  head_only.d_model = 0;
  CHECK(count_flops(head_only, 50) == 0ULL);

  // f(n) = c + a n + q n^2 with c the head and q = 4 d the attention score term,
  // so doubling n doubles every linear term and quadruples the quadratic one.
  const std::uint64_t head = 2 * 1024 * 10;
  for (std::uint64_t n : {1ULL, 7ULL, 60ULL, 333ULL}) {
    CHECK(count_flops(def, 2 * n) + head - 2 * count_flops(def, n) == 2 * 4 * 64 * n * n);
  }
  for (std::uint64_t n = 1; n < 500; ++n) CHECK(count_flops(def, n + 1) > count_flops(def, n));
  CHECK(count_flops_at(def, 60.0) == static_cast<double>(count_flops(def, 60)));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(15);
  Model<float> m(tiny_config(), 33);
  for (auto& b : m.buffers()) b.value.array() += 0.25f;
  std::stringstream buf;
  save_checkpoint(buf, m);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "PGNT");
  const Model<float> back = load_checkpoint<float>(buf);
  CHECK(back.config() == m.config());
  for (std::size_t t = 0; t < m.parameters().size(); ++t) CHECK(back.parameters()[t].value == m.parameters()[t].value);
  for (std::size_t t = 0; t < m.buffers().size(); ++t) CHECK(back.buffers()[t].value == m.buffers()[t].value);
  std::stringstream again;
  save_checkpoint(again, back);
  CHECK(again.str() == bytes);

  std::stringstream widen(bytes);
  const Model<double> wide = load_checkpoint<double>(widen);
  CHECK(wide.parameters()[0].value == m.parameters()[0].value.cast<double>());

  std::stringstream bad("XXXX0000");
  CHECK_THROWS_AS(load_checkpoint<float>(bad), Error);
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint<float>(cut), Error);
}
