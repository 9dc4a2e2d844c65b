#include <doctest.h>

#include <numbers>

#include "invo/checkpoint.hpp"
#include "invo/train.hpp"

using namespace invo;

namespace {

ModelConfig tiny_config(std::size_t classes = 2) {
  ModelConfig c;
  c.stem_channels = 8;
  c.pyramid = {{16, true}};
  c.kernel = 3;
  c.groups = 2;
  c.reduction = 2;
  c.num_classes = classes;
  return c;
}

// Class 0: in-phase ramp up; class 1: ramp down. Separable by a linear map.
std::vector<SignalFrame> toy_frames(std::size_t per_class, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SignalFrame> out;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (int label : {0, 1}) {
      SignalFrame f;
      f.label = label;
      f.snr_db = 10;
      f.iq = rng_normal(rng, Shape{2, n}, 0.0, 0.3);
      for (std::size_t t = 0; t < n; ++t) f.iq[t] += (label == 0 ? 1.0 : -1.0);
      out.push_back(std::move(f));
    }
  }
  return out;
}

SgdConfig short_run(int epochs) {
  SgdConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.milestones = {};
  c.lr = 0.05;
  return c;
}

}  // namespace

TEST_CASE("sgd_step hand examples") {
  Tensor p(Shape{1}, {0.0}), g(Shape{1}, {1.0}), v(Shape{1});
  sgd_step(p, g, v, 0.1, 0.9, 0.0);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-15));
  sgd_step(p, g, v, 0.1, 0.9, 0.0);
  CHECK(p[0] == doctest::Approx(-0.29).epsilon(1e-15));

  Tensor q(Shape{2}, {1.5, -2.0}), zero(Shape{2}), vel(Shape{2}, {0.4, -0.2});
  const Tensor before = q;
  sgd_step(q, zero, vel, 0.1, 0.5, 0.0);
  CHECK(q[0] == doctest::Approx(before[0] - 0.1 * 0.2));
  CHECK(vel == Tensor(Shape{2}, {0.2, -0.1}));

  Tensor r(Shape{1}, {2.0}), v0(Shape{1});
  sgd_step(r, Tensor(Shape{1}), v0, 0.1, 0.9, 0.01);
  CHECK(r[0] == doctest::Approx(2.0 * (1 - 0.1 * 0.01)));
  CHECK_THROWS_AS(sgd_step(r, Tensor(Shape{2}), v0, 0.1, 0.9, 0.0), ShapeError);
}

TEST_CASE("sgd config validation and the step schedule") {
  SgdConfig c;
  CHECK(c.lr_at(0) == 0.01);
  CHECK(c.lr_at(29) == 0.01);
  CHECK(c.lr_at(30) == doctest::Approx(0.001));
  CHECK(c.lr_at(45) == doctest::Approx(0.0001));
  c.momentum = 1.0;
  CHECK_THROWS(c.validate());
  c = SgdConfig{};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = SgdConfig{};
  c.lr = -1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("rotate_phase multiplies by e^{j phi}") {
  Tensor iq(Shape{2, 2}, {1, 0, 0, 1});
  rotate_phase(iq, std::numbers::pi / 2);
  CHECK(std::abs(iq[0] - 0.0) < 1e-15);
  CHECK(std::abs(iq[1] + 1.0) < 1e-15);
  CHECK(std::abs(iq[2] - 1.0) < 1e-15);
  CHECK(std::abs(iq[3] - 0.0) < 1e-15);
  CHECK_THROWS_AS(rotate_phase(iq = Tensor(Shape{3, 2}), 1.0), ShapeError);
}

TEST_CASE("conjugation and time reversal") {
  Tensor iq(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  conjugate(iq);
  CHECK(iq == Tensor(Shape{2, 3}, {1, 2, 3, -4, -5, -6}));
  reverse_time(iq);
  CHECK(iq == Tensor(Shape{2, 3}, {3, 2, 1, -6, -5, -4}));
  Tensor bad(Shape{1, 3});
  CHECK_THROWS_AS(conjugate(bad), ShapeError);
  CHECK_THROWS_AS(reverse_time(bad), ShapeError);
}

TEST_CASE("lr = 0 leaves every parameter unchanged") {
  Rng rng(1);
  Model m = Model::build(tiny_config(), rng);
  std::vector<Tensor> before;
  for (auto& [name, p] : m.params()) before.push_back(p->value);
  SgdConfig c = short_run(2);
  c.lr = 0.0;
  const auto frames = toy_frames(8, 32, 3);
  train(m, frames, c);
  std::size_t i = 0;
  for (auto& [name, p] : m.params()) CHECK_MESSAGE(p->value == before[i++], name);
  CHECK(m.mode() == nn::Mode::inference);
}

TEST_CASE("loss falls on separable toy frames") {
  Rng rng(2);
  Model m = Model::build(tiny_config(), rng);
  const auto frames = toy_frames(16, 32, 4);
  const auto history = train(m, frames, short_run(2));
  REQUIRE(history.size() == 2);
  CHECK(history[1].mean_loss < history[0].mean_loss);
  const EvalReport r = evaluate(m, frames, {"up", "down"});
  CHECK(r.overall_pr_cc >= 0.9);
}

TEST_CASE("the same seed twice gives identical losses and checkpoint bytes") {
  const auto frames = toy_frames(8, 32, 5);
  auto run = [&](std::uint64_t seed, bool augment) {
    Rng rng(seed);
    Model m = Model::build(tiny_config(), rng);
    SgdConfig c = short_run(2);
    c.seed = seed;
    c.augment_phase = augment;
    c.augment_flip = augment;
    const auto h = train(m, frames, c);
    std::vector<double> losses;
    for (const EpochLog& e : h) losses.push_back(e.mean_loss);
    return std::make_pair(losses, serialize_checkpoint(m, {seed, 2, Precision::f64}));
  };
  for (bool augment : {false, true}) {  // augmentation draws from the shuffle stream too
    const auto a = run(7, augment), b = run(7, augment), c = run(8, augment);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first != c.first);
  }
}

TEST_CASE("a non-finite loss aborts training") {
  Rng rng(3);
  Model m = Model::build(tiny_config(), rng);
  auto frames = toy_frames(4, 32, 6);
  frames[0].iq[0] = std::numeric_limits<double>::quiet_NaN();
  SgdConfig c = short_run(1);
  c.batch_size = frames.size();
  CHECK_THROWS_AS(train(m, frames, c), DivergenceError);
}

TEST_CASE("train and evaluate preconditions") {
  Rng rng(4);
  Model m = Model::build(tiny_config(), rng);
  const auto frames = toy_frames(2, 32, 7);
  SgdConfig c = short_run(1);
  c.batch_size = frames.size() + 1;
  CHECK_THROWS_AS(train(m, frames, c), std::invalid_argument);
  CHECK_THROWS_AS(train(m, std::span<const SignalFrame>{}, short_run(1)), std::invalid_argument);
  m.set_mode(nn::Mode::training);
  CHECK_THROWS(evaluate(m, frames, {"a", "b"}));
  m.set_mode(nn::Mode::inference);
  CHECK_THROWS_AS(evaluate(m, {}, {"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(m, frames, {"a", "b", "c"}), std::invalid_argument);
}

TEST_CASE("evaluate buckets by SNR and pools") {
  Rng rng(5);
  Model m = Model::build(tiny_config(), rng);
  m.set_mode(nn::Mode::inference);
  auto frames = toy_frames(6, 32, 8);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].snr_db = i % 3 == 0 ? -2.0 : 6.0;
  const EvalReport r = evaluate(m, frames, {"up", "down"}, 5);
  REQUIRE(r.per_snr.size() == 2);
  CHECK(r.per_snr.begin()->first == -2.0);
  CHECK(r.per_snr.at(-2.0).total() == 4);
  CHECK(r.per_snr.at(6.0).total() == 8);
  CHECK(r.pooled.total() == 12);
  CHECK(r.param_count == m.parameter_count());
  CHECK(r.overall_pr_cc == r.pooled.pr_cc());
}
