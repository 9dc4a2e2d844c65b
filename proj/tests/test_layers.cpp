#include <doctest.h>

#include <cmath>

#include "invo/nn.hpp"
#include "oracles.hpp"

using namespace invo;
using namespace invo::nn;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("window geometry") {
  const Window w = Window::same(1, 7);
  CHECK(w.pad_w == 3);
  CHECK(w.out_w(16) == 16);
  CHECK(Window::same(3, 3, 2, 2).out_h(8) == 4);
  CHECK_THROWS_AS(Window::same(2, 3), GeometryError);
  CHECK(offsets(3).size() == 9);
  CHECK(offsets(3).front() == std::pair<int, int>{-1, -1});
  CHECK(offsets(1, 5).back() == std::pair<int, int>{0, 2});
}

TEST_CASE("fold is the adjoint of unfold") {
  Rng rng(1);
  for (const Window& w : {Window::same(3, 3), Window::same(1, 7), Window::same(3, 5, 2, 2), Window{2, 2, 2, 2, 0, 0}}) {
    const Tensor x = rng_normal(rng, Shape{2, 3, 6, 9}, 0, 1);
    const Tensor cols = unfold(x, w);
    const Tensor y = rng_normal(rng, cols.shape(), 0, 1);
    CHECK(std::abs(dot(cols, y) - dot(x, fold(y, x.shape(), w))) < 1e-10);
  }
}

TEST_CASE("unfold gathers the zero-padded neighbourhood") {
  Rng rng(2);
  const Tensor x = rng_normal(rng, Shape{1, 2, 3, 4}, 0, 1);
  const Window w = Window::same(3, 3);
  const Tensor cols = unfold(x, w);
  CHECK(cols.shape() == Shape{1, 18, 12});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 4; ++j) {
            const double expected = oracle::pixel(x, 0, c, static_cast<long>(i + u) - 1, static_cast<long>(j + v) - 1);
            CHECK(cols[((c * 3 + u) * 3 + v) * 12 + i * 4 + j] == expected);
          }
}

TEST_CASE("conv2d matches the six-loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(5);
    const std::size_t kh = 1 + 2 * rng.below(2), kw = 1 + 2 * rng.below(3);
    ConvParams p = make_conv(cin, cout, kh, kw, rng);
    p.bias.value = rng_normal(rng, p.bias.value.shape(), 0, 1);
    p.stride_h = 1 + rng.below(2);
    p.stride_w = 1 + rng.below(2);
    const Tensor x = rng_normal(rng, Shape{1 + rng.below(3), cin, 1 + rng.below(5), 3 + rng.below(8)}, 0, 1);
    const Tensor expected = oracle::conv2d(x, p.weight.value, p.bias.value, p.stride_h, p.stride_w, p.pad_h, p.pad_w);
    CHECK(max_abs_diff(conv2d_forward(x, p), expected) < 1e-12);
  }
}

TEST_CASE("conv2d parameter count and errors") {
  Rng rng(6);
  CHECK(conv_param_count(64, 64, 1, 7) == 28736);
  CHECK(make_conv(64, 64, 1, 7, rng).param_count() == 28736);
  ConvParams p = make_conv(3, 4, 3, 3, rng);
  CHECK_THROWS_AS(conv2d_forward(Tensor(Shape{1, 2, 4, 4}), p), ShapeError);
  ConvTape t;
  CHECK_THROWS_AS(conv2d_backward(p, t, Tensor(Shape{1, 4, 4, 4})), TapeError);
  conv2d_forward(Tensor(Shape{1, 3, 4, 4}), p, &t);
  conv2d_backward(p, t, Tensor(Shape{1, 4, 4, 4}));
  CHECK_THROWS_AS(conv2d_backward(p, t, Tensor(Shape{1, 4, 4, 4})), TapeError);
}

TEST_CASE("batch norm training mode matches two-pass moments and updates running stats") {
  Rng rng(7);
  const Tensor x = rng_normal(rng, Shape{4, 3, 2, 5}, 1.5, 2.0);
  BatchNormState st = make_batchnorm(3);
  st.gamma.value = Tensor(Shape{3}, {1.0, 2.0, 0.5});
  st.beta.value = Tensor(Shape{3}, {0.0, -1.0, 3.0});
  const oracle::Moments m = oracle::channel_moments(x);
  const Tensor y = batchnorm_forward(x, st);
  CHECK(max_abs_diff(y, oracle::batchnorm(x, m.mean, m.var, st.gamma.value, st.beta.value, 1e-5)) < 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(st.running_mean[c] == doctest::Approx(0.1 * m.mean[c]).epsilon(1e-12));
    CHECK(st.running_var[c] == doctest::Approx(0.9 + 0.1 * m.var[c]).epsilon(1e-12));
  }
}

TEST_CASE("batch norm output moments in training mode are zero mean, unit variance") {
  Rng rng(8);
  const Tensor x = rng_normal(rng, Shape{8, 4, 1, 16}, -3.0, 5.0);
  BatchNormState st = make_batchnorm(4);
  const oracle::Moments m = oracle::channel_moments(batchnorm_forward(x, st));
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::abs(m.mean[c]) < 1e-12);
    CHECK(std::abs(m.var[c] - 1.0) < 1e-5);  // eps keeps it just under one
  }
}

TEST_CASE("batch norm inference uses the running estimates") {
  Rng rng(9);
  const Tensor x = rng_normal(rng, Shape{2, 2, 1, 3}, 0, 1);
  BatchNormState st = make_batchnorm(2);
  st.running_mean = Tensor(Shape{2}, {0.5, -1.0});
  st.running_var = Tensor(Shape{2}, {4.0, 0.25});
  CHECK_THROWS_AS(batchnorm_infer(x, st), std::logic_error);
  st.mode = Mode::inference;
  const Tensor expected = oracle::batchnorm(x, {0.5, -1.0}, {4.0, 0.25}, st.gamma.value, st.beta.value, 1e-5);
  CHECK(max_abs_diff(batchnorm_infer(x, st), expected) < 1e-12);
  const Tensor before = st.running_mean;
  CHECK(max_abs_diff(batchnorm_forward(x, st), expected) < 1e-12);
  CHECK(st.running_mean == before);
}

TEST_CASE("batch norm needs two values per channel in training mode") {
  BatchNormState st = make_batchnorm(2);
  CHECK_THROWS_AS(batchnorm_forward(Tensor(Shape{1, 2, 1, 1}), st), GeometryError);
}

TEST_CASE("pooling matches loop oracles") {
  Rng rng(10);
  const Tensor x = rng_normal(rng, Shape{2, 3, 4, 10}, 0, 1);
  CHECK(maxpool_forward(x, Window{1, 2, 1, 2, 0, 0}) == oracle::maxpool(x, 1, 2, 1, 2));
  CHECK(maxpool_forward(x, Window{2, 3, 2, 2, 0, 0}) == oracle::maxpool(x, 2, 3, 2, 2));
  CHECK(max_abs_diff(avgpool_forward(x, Window{2, 2, 2, 2, 0, 0}), oracle::avgpool(x, 2, 2, 2, 2)) < 1e-15);
  const Tensor g = gap_forward(x);
  CHECK(g.shape() == Shape{2, 3});
  CHECK(max_abs_diff(g, reshape(oracle::avgpool(x, 4, 10, 1, 1), Shape{2, 3})) < 1e-14);
  CHECK_THROWS_AS(maxpool_forward(x, Window{1, 2, 1, 2, 0, 1}), GeometryError);
}

TEST_CASE("maxpool ties resolve to the lowest index, deterministically") {
  const Tensor x(Shape{1, 1, 1, 6}, {2, 2, 1, 5, 5, 5});
  const Window w{1, 3, 1, 3, 0, 0};
  for (int rep = 0; rep < 3; ++rep) {
    PoolTape t;
    const Tensor y = maxpool_forward(x, w, &t);
    CHECK(y == Tensor(Shape{1, 1, 1, 2}, {2, 5}));
    CHECK(t.argmax == std::vector<std::size_t>{0, 3});
    CHECK(maxpool_backward(t, Tensor(Shape{1, 1, 1, 2}, {1, 1})) == Tensor(Shape{1, 1, 1, 6}, {1, 0, 0, 1, 0, 0}));
  }
}

TEST_CASE("softmax rows are normalized and shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = rng_normal(rng, Shape{4, 6}, 0, 1 + 20 * rng.uniform());
    const Tensor p = softmax(z);
    for (std::size_t b = 0; b < 4; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(p[b * 6 + j] >= 0.0);
        s += p[b * 6 + j];
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    Tensor shifted = z;
    for (double& v : shifted.data()) v += 123.0;
    CHECK(max_abs_diff(softmax(shifted), p) < 1e-12);
  }
  const Tensor big(Shape{1, 3}, {1000, 0, -1000});
  CHECK(all_finite(softmax(big)));
}

TEST_CASE("cross entropy is the mean negative log-likelihood") {
  const Tensor z(Shape{2, 3}, {1, 2, 3, 0, 0, 0});
  const std::vector<int> labels{2, 1};
  const SoftmaxXent ce = softmax_xent(z, labels);
  const double l0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const double l1 = std::log(3.0);
  CHECK(ce.loss == doctest::Approx((l0 + l1) / 2).epsilon(1e-14));
  CHECK(ce.grad_logits[2] == doctest::Approx((ce.probs[2] - 1.0) / 2).epsilon(1e-14));
  CHECK_THROWS_AS(softmax_xent(z, std::vector<int>{0, 3}), std::out_of_range);
  CHECK_THROWS(softmax_xent(z, std::vector<int>{0}));
}

TEST_CASE("fully connected layer is x W + b") {
  Rng rng(12);
  LinearParams p = make_linear(5, 3, rng);
  p.bias.value = Tensor(Shape{3}, {1, 2, 3});
  const Tensor x = rng_normal(rng, Shape{4, 5}, 0, 1);
  const Tensor expected = oracle::matmul(x, p.weight.value);
  const Tensor y = fc_forward(x, p);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(y[b * 3 + j] - expected[b * 3 + j] - p.bias.value[j]) < 1e-12);
  CHECK(p.param_count() == 18);
}

TEST_CASE("fan-in uniform initialization bound") {
  Rng rng(13);
  const Tensor w = fan_in_uniform(rng, Shape{64, 32}, 32);
  const double bound = std::sqrt(6.0 / 32.0);
  double mx = 0;
  for (double v : w.data()) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.9 * bound);
}
