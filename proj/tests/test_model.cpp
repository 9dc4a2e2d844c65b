#include <doctest.h>

#include "invo/model.hpp"
#include "oracles.hpp"

using namespace invo;

namespace {

Tensor input(Rng& rng, std::size_t batch, std::size_t n) { return rng_normal(rng, Shape{batch, 2, 1, n}, 0, 1); }

ModelConfig conv_config() {
  ModelConfig c;
  c.core = CoreOperator::convolution;
  return c;
}

}  // namespace

TEST_CASE("default model maps B x 2 x 1 x 256 to B x 6 logits") {
  Rng rng(1);
  Model m = Model::build(ModelConfig{}, rng);
  CHECK(m.forward(input(rng, 3, 256)).shape() == Shape{3, 6});
  Model c = Model::build(conv_config(), rng);
  CHECK(c.forward(input(rng, 3, 256)).shape() == Shape{3, 6});
}

TEST_CASE("parameter counts equal the closed form and the hand count") {
  Rng rng(2);
  const ModelConfig invo_cfg;
  const ModelConfig conv_cfg = conv_config();
  CHECK(Model::build(invo_cfg, rng).parameter_count() == expected_parameter_count(invo_cfg));
  CHECK(Model::build(conv_cfg, rng).parameter_count() == expected_parameter_count(conv_cfg));
  // stem 2*32*3+32 + BN 64 = 288; stage 0 (32->64, mid 32) = 9376 involution core
  // included; stage 1 (64->128, mid 64) = 20038 + ... summed by hand: 30350 / 43750.
  CHECK(expected_parameter_count(invo_cfg) == 30350);
  CHECK(expected_parameter_count(conv_cfg) == 43750);
  const ParameterComparison cmp = compare(invo_cfg);
  CHECK(cmp.involution == 30350);
  CHECK(cmp.convolution == 43750);
  CHECK(cmp.reduction_fraction == doctest::Approx(1.0 - 30350.0 / 43750.0));
  CHECK(cmp.reduction_fraction >= 0.30);
}

TEST_CASE("closed form agrees with enumeration over a sweep of configs") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    c.core = trial % 2 ? CoreOperator::convolution : CoreOperator::involution;
    c.stem_channels = 8 * (1 + rng.below(4));
    c.pyramid = {{16, rng.below(2) == 1}, {32, rng.below(2) == 1}, {48, rng.below(2) == 1}};
    c.kernel = 1 + 2 * rng.below(4);
    c.conv_kernel = 1 + 2 * rng.below(3);
    c.groups = std::size_t{1} << rng.below(3);
    c.reduction = 2;
    c.num_classes = 2 + rng.below(8);
    Model m = Model::build(c, rng);
    std::size_t enumerated = 0;
    for (auto& [name, p] : m.params()) enumerated += p->numel();
    CHECK(m.parameter_count() == enumerated);
    CHECK(expected_parameter_count(c) == enumerated);
  }
}

TEST_CASE("operator swap changes only the core layers") {
  Rng r1(4), r2(4);
  Model a = Model::build(ModelConfig{}, r1);
  Model b = Model::build(conv_config(), r2);
  const auto sa = a.state(), sb = b.state();
  std::vector<std::pair<std::string, Shape>> na, nb;
  for (const StateEntry& e : sa)
    if (e.name.find(".core.") == std::string::npos) na.emplace_back(e.name, e.tensor->shape());
  for (const StateEntry& e : sb)
    if (e.name.find(".core.") == std::string::npos) nb.emplace_back(e.name, e.tensor->shape());
  CHECK(na == nb);
  CHECK(a.stages().size() == b.stages().size());
  for (std::size_t i = 0; i < a.stages().size(); ++i) {
    CHECK(std::holds_alternative<nn::InvolutionParams>(a.stages()[i].core));
    const auto& conv = std::get<nn::ConvParams>(b.stages()[i].core);
    CHECK(conv.kh() == 1);
    CHECK(conv.kw() == 3);
  }
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.pyramid = {{64, true}, {64, true}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.pyramid = {{64, true}, {128, true}};
  c.groups = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.groups = 4;
  c.kernel = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.kernel = 7;
  c.mid_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.mid_ratio = 0.5;
  c.pyramid.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_core_operator("convolution") == CoreOperator::convolution);
  CHECK_THROWS_AS(parse_core_operator("attention"), ConfigError);
  CHECK(ModelConfig{}.mid_channels(64) == 32);
  CHECK(ModelConfig{}.min_length() == 16);
}

TEST_CASE("all-zero parameters except the FC bias give the bias on every row") {
  Rng rng(5);
  Model m = Model::build(ModelConfig{}, rng);
  for (auto& [name, p] : m.params()) p->value.fill(0.0);
  m.head().bias.value = Tensor(Shape{6}, {1, -2, 3, -4, 5, -6});
  for (nn::Mode mode : {nn::Mode::training, nn::Mode::inference}) {
    m.set_mode(mode);
    const Tensor logits = m.forward(input(rng, 4, 64));
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t j = 0; j < 6; ++j) CHECK(logits[b * 6 + j] == m.head().bias.value[j]);
  }
}

TEST_CASE("inference is bit-identical across calls and between forward and infer") {
  Rng rng(6);
  Model m = Model::build(ModelConfig{}, rng);
  m.forward(input(rng, 8, 128));  // move running stats away from their initial values
  m.set_mode(nn::Mode::inference);
  const Tensor x = input(rng, 3, 256);
  const Tensor a = m.infer(x);
  CHECK(m.infer(x) == a);
  CHECK(m.forward(x) == a);
  Model t = Model::build(ModelConfig{}, rng);
  CHECK_THROWS_AS(t.infer(x), std::logic_error);
}

TEST_CASE("arbitrary frame lengths are accepted, short ones rejected") {
  Rng rng(7);
  Model m = Model::build(ModelConfig{}, rng);
  m.set_mode(nn::Mode::inference);
  for (std::size_t n : {64, 128, 256, 1024, 100, 17}) CHECK(m.infer(input(rng, 2, n)).shape() == Shape{2, 6});
  CHECK_THROWS_AS(m.infer(input(rng, 2, 15)), ShapeError);
  CHECK_THROWS_AS(m.infer(Tensor(Shape{2, 3, 1, 64})), ShapeError);
  // A zero-padded longer frame still yields a valid row.
  Tensor x = input(rng, 1, 256);
  Tensor padded(Shape{1, 2, 1, 512});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 256; ++t) padded.at({0, c, 0, t}) = x.at({0, c, 0, t});
  CHECK(all_finite(m.infer(padded)));
}

TEST_CASE("zeroing the last main-path BN makes a plain bottleneck compute ReLU(shortcut(x))") {
  ModelConfig c;
  c.stem_channels = 16;
  c.pyramid = {{16, false}};
  c.groups = 2;
  c.reduction = 2;
  Rng rng(8);
  Model m = Model::build(c, rng);
  REQUIRE_FALSE(m.stages()[0].shortcut.has_value());
  m.stages()[0].expand.bn.gamma.value.fill(0.0);
  m.stages()[0].expand.bn.beta.value.fill(0.0);
  m.set_mode(nn::Mode::inference);
  const Tensor x = input(rng, 2, 32);
  // Expected: the stem output passes through unchanged (already non-negative).
  const Tensor stem = relu(nn::batchnorm_infer(nn::conv2d_forward(x, m.stem().conv), m.stem().bn));
  const Tensor expected = nn::fc_forward(nn::gap_forward(relu(stem)), m.head());
  CHECK(m.infer(x) == expected);
}

TEST_CASE("backward returns an input gradient of the input's shape and fills every parameter gradient") {
  Rng rng(9);
  Model m = Model::build(ModelConfig{}, rng);
  const Tensor x = input(rng, 2, 64);
  ModelTape tape;
  const Tensor logits = m.forward(x, &tape);
  m.zero_grad();
  const Tensor dx = m.backward(tape, rng_normal(rng, logits.shape(), 0, 1));
  CHECK(dx.shape() == x.shape());
  for (auto& [name, p] : m.params()) {
    double mx = 0;
    for (double v : p->grad.data()) mx = std::max(mx, std::abs(v));
    CHECK_MESSAGE(mx > 0.0, name);
  }
  CHECK_THROWS_AS(m.backward(tape, logits), nn::TapeError);
}

TEST_CASE("parameter names and decay flags") {
  Rng rng(10);
  Model m = Model::build(ModelConfig{}, rng);
  for (auto& [name, p] : m.params()) {
    const bool expect_decay = name.ends_with("weight");
    CHECK_MESSAGE(p->decay == expect_decay, name);
  }
  std::size_t buffers = 0;
  for (const StateEntry& e : m.state()) buffers += e.param == nullptr;
  CHECK(buffers == 2 * (1 + 2 * 5));  // stem BN + (reduce, inner, core, expand, shortcut) per stage
}
