#include "invo/model.hpp"

#include <cmath>

namespace invo {

namespace {

using nn::BatchNormState;
using nn::BatchNormTape;

const nn::Window kPool{1, 2, 1, 2, 0, 0};

Tensor run_bn(const Tensor& x, BatchNormState& st, BatchNormTape* tape) {
  return nn::batchnorm_forward(x, st, tape);
}
Tensor run_bn(const Tensor& x, const BatchNormState& st, BatchNormTape*) {
  return nn::batchnorm_infer(x, st);
}

Tensor run_core(const Tensor& x, nn::InvolutionParams& p, BottleneckTape* t) {
  return nn::involution_forward(x, p, t ? &t->core_invo : nullptr);
}
Tensor run_core(const Tensor& x, const nn::InvolutionParams& p, BottleneckTape*) {
  return nn::involution_infer(x, p);
}
Tensor run_core(const Tensor& x, const nn::ConvParams& p, BottleneckTape* t) {
  return nn::conv2d_forward(x, p, t ? &t->core_conv : nullptr);
}

template <typename Block>
Tensor conv_bn(const Tensor& x, Block& block, nn::ConvTape* ct, BatchNormTape* bt) {
  return run_bn(nn::conv2d_forward(x, block.conv, ct), block.bn, bt);
}

// Shared by the training (mutable) and inference (const) paths; `Stage` is
// Bottleneck or const Bottleneck, which selects the batch-norm flavour.
template <typename Stage>
Tensor stage_forward(const Tensor& x, Stage& s, BottleneckTape* t) {
  Tensor h = relu(conv_bn(x, s.reduce, t ? &t->reduce_conv : nullptr, t ? &t->reduce_bn : nullptr));
  if (t) t->reduce_out = h;
  if (s.downsample) h = nn::maxpool_forward(h, kPool, t ? &t->main_pool : nullptr);
  h = std::visit([&](auto& core) { return run_core(h, core, t); }, s.core);
  h = relu(run_bn(h, s.core_bn, t ? &t->core_bn : nullptr));
  if (t) t->core_out = h;
  h = conv_bn(h, s.expand, t ? &t->expand_conv : nullptr, t ? &t->expand_bn : nullptr);

  Tensor shortcut = x;
  if (s.shortcut) {
    if (s.downsample) shortcut = nn::maxpool_forward(shortcut, kPool, t ? &t->short_pool : nullptr);
    shortcut = conv_bn(shortcut, *s.shortcut, t ? &t->short_conv : nullptr,
                       t ? &t->short_bn : nullptr);
  }
  Tensor out = relu(add(h, shortcut));
  if (t) t->out = out;
  return out;
}

Tensor stage_backward(Bottleneck& s, BottleneckTape& t, const Tensor& dout) {
  const Tensor d = nn::relu_backward(t.out, dout);

  Tensor dshort = d;
  if (s.shortcut) {
    dshort = nn::batchnorm_backward(s.shortcut->bn, t.short_bn, dshort);
    dshort = nn::conv2d_backward(s.shortcut->conv, t.short_conv, dshort);
    if (s.downsample) dshort = nn::maxpool_backward(t.short_pool, dshort);
  }

  Tensor g = nn::batchnorm_backward(s.expand.bn, t.expand_bn, d);
  g = nn::conv2d_backward(s.expand.conv, t.expand_conv, g);
  g = nn::relu_backward(t.core_out, g);
  g = nn::batchnorm_backward(s.core_bn, t.core_bn, g);
  if (auto* invo = std::get_if<nn::InvolutionParams>(&s.core)) {
    g = nn::involution_backward(*invo, t.core_invo, g);
  } else {
    g = nn::conv2d_backward(std::get<nn::ConvParams>(s.core), t.core_conv, g);
  }
  if (s.downsample) g = nn::maxpool_backward(t.main_pool, g);
  g = nn::relu_backward(t.reduce_out, g);
  g = nn::batchnorm_backward(s.reduce.bn, t.reduce_bn, g);
  g = nn::conv2d_backward(s.reduce.conv, t.reduce_conv, g);
  g += dshort;
  return g;
}

ConvBn make_conv_bn(std::size_t in, std::size_t out, std::size_t kw, Rng& rng) {
  return ConvBn{nn::make_conv(in, out, 1, kw, rng), nn::make_batchnorm(out)};
}

void add_param(std::vector<StateEntry>& out, const std::string& name, nn::Param& p) {
  out.push_back({name, &p.value, &p});
}

void add_conv(std::vector<StateEntry>& out, const std::string& prefix, nn::ConvParams& c) {
  add_param(out, prefix + ".weight", c.weight);
  add_param(out, prefix + ".bias", c.bias);
}

void add_bn(std::vector<StateEntry>& out, const std::string& prefix, BatchNormState& bn) {
  add_param(out, prefix + ".gamma", bn.gamma);
  add_param(out, prefix + ".beta", bn.beta);
  out.push_back({prefix + ".running_mean", &bn.running_mean, nullptr});
  out.push_back({prefix + ".running_var", &bn.running_var, nullptr});
}

void add_conv_bn(std::vector<StateEntry>& out, const std::string& prefix, ConvBn& block) {
  add_conv(out, prefix + ".conv", block.conv);
  add_bn(out, prefix + ".bn", block.bn);
}

std::size_t conv_bn_count(const ConvBn& block) {
  return block.conv.param_count() + block.bn.param_count();
}

std::size_t pooling_factor(const ModelConfig& config) {
  std::size_t factor = 1;
  for (const StageSpec& s : config.pyramid) {
    if (s.downsample) factor *= kPool.stride_w;
  }
  return factor;
}

}  // namespace

std::string to_string(CoreOperator op) {
  return op == CoreOperator::involution ? "involution" : "convolution";
}

CoreOperator parse_core_operator(std::string_view name) {
  if (name == "involution") return CoreOperator::involution;
  if (name == "convolution") return CoreOperator::convolution;
  throw ConfigError("unknown core operator '" + std::string(name) + "'");
}

std::size_t ModelConfig::mid_channels(std::size_t out_channels) const {
  return static_cast<std::size_t>(std::ceil(mid_ratio * static_cast<double>(out_channels)));
}

std::size_t ModelConfig::min_length() const { return 4 * pooling_factor(*this); }

void ModelConfig::validate() const {
  if (in_channels == 0 || stem_channels == 0) throw ConfigError("channel counts must be positive");
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (stem_kernel % 2 == 0 || kernel % 2 == 0 || conv_kernel % 2 == 0) {
    throw ConfigError("kernel sizes must be odd");
  }
  if (!(mid_ratio > 0.0 && mid_ratio <= 1.0)) throw ConfigError("mid_ratio must lie in (0, 1]");
  if (pyramid.empty()) throw ConfigError("pyramid needs at least one bottleneck");
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    if (pyramid[i].out_channels == 0) throw ConfigError("bottleneck channels must be positive");
    if (i > 0 && pyramid[i].out_channels <= pyramid[i - 1].out_channels) {
      throw ConfigError("pyramid channel counts must be strictly increasing");
    }
    if (core == CoreOperator::involution) {
      const std::size_t mid = mid_channels(pyramid[i].out_channels);
      try {
        nn::validate_involution(mid, 1, kernel, groups, reduction);
      } catch (const nn::GeometryError& e) {
        throw ConfigError("bottleneck " + std::to_string(i) + ": " + e.what());
      }
    }
  }
}

Model Model::build(const ModelConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config_ = config;
  m.stem_ = make_conv_bn(config.in_channels, config.stem_channels, config.stem_kernel, rng);
  std::size_t channels = config.stem_channels;
  for (const StageSpec& spec : config.pyramid) {
    Bottleneck s;
    s.in_channels = channels;
    s.out_channels = spec.out_channels;
    s.mid_channels = config.mid_channels(spec.out_channels);
    s.downsample = spec.downsample;
    s.reduce = make_conv_bn(s.in_channels, s.mid_channels, 1, rng);
    if (config.core == CoreOperator::involution) {
      s.core = nn::make_involution(s.mid_channels, 1, config.kernel, config.groups, config.reduction, rng);
    } else {
      s.core = nn::make_conv(s.mid_channels, s.mid_channels, 1, config.conv_kernel, rng);
    }
    s.core_bn = nn::make_batchnorm(s.mid_channels);
    s.expand = make_conv_bn(s.mid_channels, s.out_channels, 1, rng);
    if (s.in_channels != s.out_channels || s.downsample) {
      s.shortcut = make_conv_bn(s.in_channels, s.out_channels, 1, rng);
    }
    m.stages_.push_back(std::move(s));
    channels = spec.out_channels;
  }
  m.head_ = nn::make_linear(channels, config.num_classes, rng);
  return m;
}

void Model::set_mode(nn::Mode mode) {
  mode_ = mode;
  stem_.bn.mode = mode;
  for (Bottleneck& s : stages_) {
    s.reduce.bn.mode = mode;
    if (auto* invo = std::get_if<nn::InvolutionParams>(&s.core)) invo->reduce_bn.mode = mode;
    s.core_bn.mode = mode;
    s.expand.bn.mode = mode;
    if (s.shortcut) s.shortcut->bn.mode = mode;
  }
}

namespace {

void check_input(const Tensor& x, const ModelConfig& config) {
  nn::require_rank4(x, "model");
  if (x.dim(1) != config.in_channels) {
    throw ShapeError("model: input has " + std::to_string(x.dim(1)) + " channels, expected " +
                     std::to_string(config.in_channels));
  }
  if (x.dim(3) < config.min_length()) {
    throw ShapeError("model: frame length " + std::to_string(x.dim(3)) + " is shorter than the minimum " +
                     std::to_string(config.min_length()));
  }
}

}  // namespace

Tensor Model::forward(const Tensor& x, ModelTape* tape) {
  check_input(x, config_);
  Tensor h = relu(conv_bn(x, stem_, tape ? &tape->stem_conv : nullptr, tape ? &tape->stem_bn : nullptr));
  if (tape) {
    tape->stem_out = h;
    tape->stages.resize(stages_.size());
  }
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = stage_forward(h, stages_[i], tape ? &tape->stages[i] : nullptr);
  }
  if (tape) tape->gap_in = h.shape();
  return nn::fc_forward(nn::gap_forward(h), head_, tape ? &tape->fc : nullptr);
}

Tensor Model::infer(const Tensor& x) const {
  if (mode_ != nn::Mode::inference) throw std::logic_error("Model::infer requires inference mode");
  check_input(x, config_);
  Tensor h = relu(conv_bn(x, stem_, nullptr, nullptr));
  for (const Bottleneck& s : stages_) h = stage_forward(h, s, nullptr);
  return nn::fc_forward(nn::gap_forward(h), head_);
}

Tensor Model::backward(ModelTape& tape, const Tensor& grad_logits) {
  if (tape.stages.size() != stages_.size()) throw nn::TapeError("model: tape does not match this model");
  Tensor g = nn::fc_backward(head_, tape.fc, grad_logits);
  g = nn::gap_backward(tape.gap_in, g);
  for (std::size_t i = stages_.size(); i-- > 0;) g = stage_backward(stages_[i], tape.stages[i], g);
  g = nn::relu_backward(tape.stem_out, g);
  g = nn::batchnorm_backward(stem_.bn, tape.stem_bn, g);
  return nn::conv2d_backward(stem_.conv, tape.stem_conv, g);
}

void Model::zero_grad() {
  for (auto& [name, p] : params()) p->zero_grad();
}

std::vector<StateEntry> Model::state() {
  std::vector<StateEntry> out;
  add_conv_bn(out, "stem", stem_);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Bottleneck& s = stages_[i];
    const std::string prefix = "stage" + std::to_string(i);
    add_conv_bn(out, prefix + ".reduce", s.reduce);
    if (auto* invo = std::get_if<nn::InvolutionParams>(&s.core)) {
      add_param(out, prefix + ".core.reduce_weight", invo->reduce_weight);
      add_bn(out, prefix + ".core.reduce_bn", invo->reduce_bn);
      add_param(out, prefix + ".core.span_weight", invo->span_weight);
      add_param(out, prefix + ".core.span_bias", invo->span_bias);
    } else {
      add_conv(out, prefix + ".core", std::get<nn::ConvParams>(s.core));
    }
    add_bn(out, prefix + ".core_bn", s.core_bn);
    add_conv_bn(out, prefix + ".expand", s.expand);
    if (s.shortcut) add_conv_bn(out, prefix + ".shortcut", *s.shortcut);
  }
  add_param(out, "fc.weight", head_.weight);
  add_param(out, "fc.bias", head_.bias);
  return out;
}

std::vector<std::pair<std::string, nn::Param*>> Model::params() {
  std::vector<std::pair<std::string, nn::Param*>> out;
  for (StateEntry& e : state()) {
    if (e.param) out.emplace_back(e.name, e.param);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = conv_bn_count(stem_) + head_.param_count();
  for (const Bottleneck& s : stages_) {
    n += conv_bn_count(s.reduce) + s.core_bn.param_count() + conv_bn_count(s.expand);
    n += std::visit([](const auto& core) { return core.param_count(); }, s.core);
    if (s.shortcut) n += conv_bn_count(*s.shortcut);
  }
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& config) {
  config.validate();
  auto conv = [](std::size_t in, std::size_t out, std::size_t kw) {
    return nn::conv_param_count(in, out, 1, kw);
  };
  std::size_t n = conv(config.in_channels, config.stem_channels, config.stem_kernel) +
                  2 * config.stem_channels;
  std::size_t channels = config.stem_channels;
  for (const StageSpec& spec : config.pyramid) {
    const std::size_t mid = config.mid_channels(spec.out_channels);
    n += conv(channels, mid, 1) + 2 * mid;
    if (config.core == CoreOperator::involution) {
      n += nn::involution_weight_count(mid, config.kernel, config.groups, config.reduction) +
           2 * (mid / config.reduction);
    } else {
      n += conv(mid, mid, config.conv_kernel);
    }
    n += 2 * mid;
    n += conv(mid, spec.out_channels, 1) + 2 * spec.out_channels;
    if (channels != spec.out_channels || spec.downsample) {
      n += conv(channels, spec.out_channels, 1) + 2 * spec.out_channels;
    }
    channels = spec.out_channels;
  }
  n += channels * config.num_classes + config.num_classes;
  return n;
}

ParameterComparison compare(const ModelConfig& config) {
  ModelConfig invo_cfg = config;
  invo_cfg.core = CoreOperator::involution;
  ModelConfig conv_cfg = config;
  conv_cfg.core = CoreOperator::convolution;
  Rng rng(0);
  ParameterComparison out;
  out.involution = Model::build(invo_cfg, rng).parameter_count();
  out.convolution = Model::build(conv_cfg, rng).parameter_count();
  out.reduction_fraction =
      1.0 - static_cast<double>(out.involution) / static_cast<double>(out.convolution);
  return out;
}

}  // namespace invo
