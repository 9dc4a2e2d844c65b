#include "invo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "invo/model.hpp"
#include "invo/nn.hpp"

namespace invo {

namespace {

struct Probe {
  std::string name;
  Tensor* value;
  const Tensor* grad;
};

// loss(): forward only. backward(): forward with tapes, then backward, leaving
// d loss / d probe in every probe's grad. pattern(), when set, fingerprints
// the piecewise-linear choices (ReLU masks, maxpool winners) at the current
// point; a difference step that changes it straddles a kink.
struct Case {
  std::function<double()> loss;
  std::function<std::vector<std::size_t>()> pattern;
  std::function<void()> backward;
  std::vector<Probe> probes;
};

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// Layers with a tensor output are reduced to a scalar by a fixed random
// projection r, so d loss / d y = r.
template <typename State>
Case projected(std::shared_ptr<State> st, std::function<Tensor(State&)> fwd,
               std::function<Tensor(State&, const Tensor&)> fwd_bwd) {
  Case c;
  c.loss = [st, fwd] { return dot(fwd(*st), st->r); };
  c.backward = [st, fwd_bwd] { st->dx = fwd_bwd(*st, st->r); };
  return c;
}

void append_mask(std::vector<std::size_t>& out, const Tensor& t) {
  for (double v : t.data()) out.push_back(v > 0.0 ? 1 : 0);
}

void append_pool(std::vector<std::size_t>& out, const nn::PoolTape& t) {
  out.insert(out.end(), t.argmax.begin(), t.argmax.end());
}

std::vector<std::size_t> model_pattern(const ModelTape& tape) {
  std::vector<std::size_t> out;
  append_mask(out, tape.stem_out);
  for (const BottleneckTape& s : tape.stages) {
    append_mask(out, s.reduce_out);
    append_pool(out, s.main_pool);
    append_mask(out, s.core_invo.act);
    append_mask(out, s.core_out);
    append_pool(out, s.short_pool);
    append_mask(out, s.out);
  }
  return out;
}

Tensor normal(Rng& rng, const Shape& s) { return rng_normal(rng, s, 0.0, 1.0); }

Case conv_case(std::uint64_t seed, std::size_t kh, std::size_t kw) {
  struct S {
    Tensor x, r, dx;
    nn::ConvParams p;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = normal(rng, Shape{2, 3, kh == 1 ? 1u : 4u, 6});
  st->p = nn::make_conv(3, 4, kh, kw, rng);
  st->p.bias.value = normal(rng, st->p.bias.value.shape());
  st->r = normal(rng, conv2d_forward(st->x, st->p).shape());
  Case c = projected<S>(
      st, [](S& s) { return nn::conv2d_forward(s.x, s.p); },
      [](S& s, const Tensor& dy) {
        s.p.weight.zero_grad();
        s.p.bias.zero_grad();
        nn::ConvTape t;
        nn::conv2d_forward(s.x, s.p, &t);
        return nn::conv2d_backward(s.p, t, dy);
      });
  c.probes = {{"x", &st->x, &st->dx}, {"weight", &st->p.weight.value, &st->p.weight.grad},
              {"bias", &st->p.bias.value, &st->p.bias.grad}};
  return c;
}

Case involution_case(std::uint64_t seed, std::size_t kh, std::size_t kw, std::size_t stride) {
  struct S {
    Tensor x, r, dx;
    nn::InvolutionParams p;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = normal(rng, Shape{2, 8, kh == 1 ? 1u : 6u, 12});
  st->p = nn::make_involution(8, kh, kw, 2, 2, rng, kh == 1 ? 1 : stride, stride);
  st->p.span_bias.value = normal(rng, st->p.span_bias.value.shape());
  st->p.reduce_bn.gamma.value = rng_uniform(rng, st->p.reduce_bn.gamma.value.shape(), 0.5, 1.5);
  st->p.reduce_bn.beta.value = normal(rng, st->p.reduce_bn.beta.value.shape());
  st->r = normal(rng, nn::involution_forward(st->x, st->p).shape());
  Case c = projected<S>(
      st, [](S& s) { return nn::involution_forward(s.x, s.p); },
      [](S& s, const Tensor& dy) {
        for (nn::Param* q : {&s.p.reduce_weight, &s.p.reduce_bn.gamma, &s.p.reduce_bn.beta, &s.p.span_weight,
                             &s.p.span_bias}) {
          q->zero_grad();
        }
        nn::InvolutionTape t;
        nn::involution_forward(s.x, s.p, &t);
        return nn::involution_backward(s.p, t, dy);
      });
  c.probes = {{"x", &st->x, &st->dx},
              {"reduce_weight", &st->p.reduce_weight.value, &st->p.reduce_weight.grad},
              {"reduce_bn.gamma", &st->p.reduce_bn.gamma.value, &st->p.reduce_bn.gamma.grad},
              {"reduce_bn.beta", &st->p.reduce_bn.beta.value, &st->p.reduce_bn.beta.grad},
              {"span_weight", &st->p.span_weight.value, &st->p.span_weight.grad},
              {"span_bias", &st->p.span_bias.value, &st->p.span_bias.grad}};
  return c;
}

Case batchnorm_case(std::uint64_t seed, nn::Mode mode) {
  struct S {
    Tensor x, r, dx;
    nn::BatchNormState bn;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = normal(rng, Shape{3, 4, 1, 5});
  st->bn = nn::make_batchnorm(4);
  st->bn.gamma.value = rng_uniform(rng, Shape{4}, 0.5, 1.5);
  st->bn.beta.value = normal(rng, Shape{4});
  st->bn.running_mean = normal(rng, Shape{4});
  st->bn.running_var = rng_uniform(rng, Shape{4}, 0.5, 2.0);
  st->bn.mode = mode;
  st->r = normal(rng, st->x.shape());
  Case c = projected<S>(
      st,
      [](S& s) {
        // Running statistics must not drift between probes.
        nn::BatchNormState copy = s.bn;
        return nn::batchnorm_forward(s.x, copy);
      },
      [](S& s, const Tensor& dy) {
        s.bn.gamma.zero_grad();
        s.bn.beta.zero_grad();
        nn::BatchNormState copy = s.bn;
        nn::BatchNormTape t;
        nn::batchnorm_forward(s.x, copy, &t);
        const Tensor dx = nn::batchnorm_backward(copy, t, dy);
        s.bn.gamma.grad = copy.gamma.grad;
        s.bn.beta.grad = copy.beta.grad;
        return dx;
      });
  c.probes = {{"x", &st->x, &st->dx}, {"gamma", &st->bn.gamma.value, &st->bn.gamma.grad},
              {"beta", &st->bn.beta.value, &st->bn.beta.grad}};
  return c;
}

// Layers without parameters: y = f(x).
Case stateless_case(std::uint64_t seed, const Shape& in, std::function<Tensor(const Tensor&)> f,
                    std::function<Tensor(const Tensor&, const Tensor&)> df) {
  struct S {
    Tensor x, r, dx;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = normal(rng, in);
  st->r = normal(rng, f(st->x).shape());
  Case c = projected<S>(
      st, [f](S& s) { return f(s.x); }, [df](S& s, const Tensor& dy) { return df(s.x, dy); });
  c.probes = {{"x", &st->x, &st->dx}};
  return c;
}

Case fc_case(std::uint64_t seed) {
  struct S {
    Tensor x, r, dx;
    nn::LinearParams p;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = normal(rng, Shape{3, 5});
  st->p = nn::make_linear(5, 4, rng);
  st->p.bias.value = normal(rng, Shape{4});
  st->r = normal(rng, Shape{3, 4});
  Case c = projected<S>(
      st, [](S& s) { return nn::fc_forward(s.x, s.p); },
      [](S& s, const Tensor& dy) {
        s.p.weight.zero_grad();
        s.p.bias.zero_grad();
        nn::LinearTape t;
        nn::fc_forward(s.x, s.p, &t);
        return nn::fc_backward(s.p, t, dy);
      });
  c.probes = {{"x", &st->x, &st->dx}, {"weight", &st->p.weight.value, &st->p.weight.grad},
              {"bias", &st->p.bias.value, &st->p.bias.grad}};
  return c;
}

Case softmax_case(std::uint64_t seed) {
  struct S {
    Tensor x, dx;
    std::vector<int> labels{0, 3, 1};
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->x = rng_normal(rng, Shape{3, 4}, 0.0, 2.0);
  Case c;
  c.loss = [st] { return nn::softmax_xent(st->x, st->labels).loss; };
  c.backward = [st] { st->dx = nn::softmax_xent(st->x, st->labels).grad_logits; };
  c.probes = {{"logits", &st->x, &st->dx}};
  return c;
}

// Whole network in training mode, cross-entropy loss; probes every parameter
// array and the input.
Case model_case(std::uint64_t seed, const ModelConfig& config, std::size_t length) {
  struct S {
    Tensor x, dx;
    Model m;
    std::vector<int> labels;
  };
  Rng rng(seed);
  auto st = std::make_shared<S>();
  st->m = Model::build(config, rng);
  // Non-trivial affine terms so every path carries gradient.
  for (auto& [name, p] : st->m.params()) {
    if (name.ends_with(".bias") || name.ends_with(".beta")) {
      p->value = rng_normal(rng, p->value.shape(), 0.0, 0.1);
    } else if (name.ends_with(".gamma")) {
      p->value = rng_uniform(rng, p->value.shape(), 0.5, 1.5);
    }
  }
  st->x = normal(rng, Shape{2, config.in_channels, 1, length});
  st->labels = {0, static_cast<int>(config.num_classes - 1)};
  Case c;
  c.loss = [st] { return nn::softmax_xent(st->m.forward(st->x), st->labels).loss; };
  c.pattern = [st] {
    ModelTape tape;
    st->m.forward(st->x, &tape);
    return model_pattern(tape);
  };
  c.backward = [st] {
    ModelTape tape;
    const nn::SoftmaxXent ce = nn::softmax_xent(st->m.forward(st->x, &tape), st->labels);
    st->m.zero_grad();
    st->dx = st->m.backward(tape, ce.grad_logits);
  };
  c.probes.push_back({"x", &st->x, &st->dx});
  for (auto& [name, p] : st->m.params()) c.probes.push_back({name, &p->value, &p->grad});
  return c;
}

ModelConfig small_bottleneck(bool downsample) {
  ModelConfig cfg;
  cfg.stem_channels = 8;
  cfg.pyramid = {{downsample ? 16u : 8u, downsample}};
  cfg.kernel = 5;
  cfg.groups = 2;
  cfg.reduction = 2;
  cfg.num_classes = 3;
  return cfg;
}

Case make_case(const std::string& layer, std::uint64_t seed) {
  using nn::Window;
  if (layer == "conv2d") return conv_case(seed, 3, 3);
  if (layer == "conv2d_pointwise") return conv_case(seed, 1, 1);
  if (layer == "involution") return involution_case(seed, 1, 7, 1);
  if (layer == "involution_2d") return involution_case(seed, 3, 3, 1);
  if (layer == "involution_strided") return involution_case(seed, 1, 5, 2);
  if (layer == "batchnorm_train") return batchnorm_case(seed, nn::Mode::training);
  if (layer == "batchnorm_infer") return batchnorm_case(seed, nn::Mode::inference);
  if (layer == "maxpool") {
    const Window w{1, 2, 1, 2, 0, 0};
    Case c = stateless_case(
        seed, Shape{2, 3, 1, 8}, [w](const Tensor& x) { return nn::maxpool_forward(x, w); },
        [w](const Tensor& x, const Tensor& dy) {
          nn::PoolTape t;
          nn::maxpool_forward(x, w, &t);
          return nn::maxpool_backward(t, dy);
        });
    const Tensor* x = c.probes.front().value;
    c.pattern = [x, w] {
      nn::PoolTape t;
      nn::maxpool_forward(*x, w, &t);
      std::vector<std::size_t> out;
      append_pool(out, t);
      return out;
    };
    return c;
  }
  if (layer == "avgpool") {
    const Window w{2, 2, 2, 2, 0, 0};
    return stateless_case(
        seed, Shape{2, 3, 4, 6}, [w](const Tensor& x) { return nn::avgpool_forward(x, w); },
        [w](const Tensor& x, const Tensor& dy) { return nn::avgpool_backward(x.shape(), w, dy); });
  }
  if (layer == "gap") {
    return stateless_case(
        seed, Shape{2, 3, 2, 5}, [](const Tensor& x) { return nn::gap_forward(x); },
        [](const Tensor& x, const Tensor& dy) { return nn::gap_backward(x.shape(), dy); });
  }
  if (layer == "relu") {
    Case c = stateless_case(
        seed, Shape{2, 3, 1, 7}, [](const Tensor& x) { return relu(x); },
        [](const Tensor& x, const Tensor& dy) { return nn::relu_backward(relu(x), dy); });
    const Tensor* x = c.probes.front().value;
    c.pattern = [x] {
      std::vector<std::size_t> mask;
      append_mask(mask, *x);
      return mask;
    };
    return c;
  }

  if (layer == "fc") return fc_case(seed);
  if (layer == "softmax_xent") return softmax_case(seed);
  if (layer == "bottleneck") return model_case(seed, small_bottleneck(false), 16);
  if (layer == "bottleneck_downsample") return model_case(seed, small_bottleneck(true), 16);
  if (layer == "model") return model_case(seed, ModelConfig{}, 32);
  if (layer == "model_convolution") {
    ModelConfig cfg;
    cfg.core = CoreOperator::convolution;
    return model_case(seed, cfg, 32);
  }
  throw std::invalid_argument("gradcheck: unknown layer '" + layer + "'");
}

}  // namespace

const std::vector<std::string>& gradcheck_layers() {
  static const std::vector<std::string> names{
      "conv2d",  "conv2d_pointwise", "involution", "involution_2d", "involution_strided", "batchnorm_train",
      "batchnorm_infer", "maxpool", "avgpool", "gap", "fc", "relu", "softmax_xent", "bottleneck",
      "bottleneck_downsample", "model", "model_convolution"};
  return names;
}

GradcheckResult gradcheck(const std::string& layer, const GradcheckOptions& options) {
  Case c = make_case(layer, options.seed);
  c.backward();
  GradcheckResult res;
  res.layer = layer;
  Rng pick(mix_seed(options.seed, 0x9c));
  double sum = 0.0;
  const std::vector<std::size_t> base = c.pattern ? c.pattern() : std::vector<std::size_t>{};
  auto crosses_kink = [&] { return c.pattern && c.pattern() != base; };
  for (const Probe& probe : c.probes) {
    Tensor& v = *probe.value;
    if (probe.grad->shape() != v.shape()) {
      throw std::logic_error("gradcheck " + layer + ": gradient of " + probe.name + " has the wrong shape");
    }
    std::vector<std::size_t> idx(v.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > options.max_entries) {
      for (std::size_t i = 0; i < options.max_entries; ++i) std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
      idx.resize(options.max_entries);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = v[i];
      // Central difference; a step that straddles a kink is retried at
      // successively smaller widths before the entry is given up.
      std::optional<double> numeric;
      double h = options.step;
      for (int attempt = 0; attempt < 4 && !numeric; ++attempt, h /= 10.0) {
        v[i] = orig + h;
        const double up = c.loss();
        bool kink = crosses_kink();
        v[i] = orig - h;
        const double down = c.loss();
        kink = kink || crosses_kink();
        v[i] = orig;
        if (!kink) numeric = (up - down) / (2.0 * h);
        if (attempt > 0 && numeric) ++res.refined;
      }
      if (!numeric) {
        ++res.skipped;
        continue;
      }
      const double analytic = (*probe.grad)[i];
      const double denom = std::max({options.floor, std::abs(analytic), std::abs(*numeric)});
      const double err = std::abs(analytic - *numeric) / denom;
      sum += err;
      ++res.checked;
      if (err > res.max_error || res.checked == 1) {
        res.max_error = err;
        res.worst = probe.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  res.mean_error = res.checked ? sum / static_cast<double>(res.checked) : 0.0;
  const std::size_t probed = res.checked + res.skipped;
  res.passed = std::isfinite(res.max_error) && res.max_error <= options.max_tolerance &&
               res.mean_error <= options.mean_tolerance &&
               static_cast<double>(res.skipped) <= options.max_skipped_fraction * static_cast<double>(probed);
  return res;
}

}  // namespace invo
