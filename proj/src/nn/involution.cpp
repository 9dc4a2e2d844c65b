#include "invo/nn/involution.hpp"

#include "invo/nn/pooling.hpp"

namespace invo::nn {

namespace {

bool strided(const InvolutionParams& p) { return p.stride_h > 1 || p.stride_w > 1; }

Window pool_window(const InvolutionParams& p) {
  return Window{p.stride_h, p.stride_w, p.stride_h, p.stride_w, 0, 0};
}

void check_input(const Tensor& x, const InvolutionParams& p) {
  require_rank4(x, "involution");
  if (x.dim(1) != p.channels) {
    throw ShapeError("involution: input has " + std::to_string(x.dim(1)) + " channels, layer has " +
                     std::to_string(p.channels));
  }
}

// Pointwise map over the channel axis: out_b = weight * in_b (+ bias).
Tensor pointwise(const Tensor& in, const Tensor& weight, const Tensor* bias) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), plane = in.dim(2) * in.dim(3);
  const std::size_t cout = weight.dim(0);
  Tensor out(Shape{batch, cout, in.dim(2), in.dim(3)});
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = out.ptr() + b * cout * plane;
    if (bias) {
      for (std::size_t k = 0; k < cout; ++k) {
        std::fill(dst + k * plane, dst + (k + 1) * plane, (*bias)[k]);
      }
    }
    gemm(false, false, cout, plane, cin, weight.ptr(), in.ptr() + b * cin * plane, dst, true);
  }
  return out;
}

// Backward of pointwise(): accumulates dweight (and dbias) and returns din.
Tensor pointwise_backward(const Tensor& in, const Tensor& weight, const Tensor& dout, Tensor& dweight,
                          Tensor* dbias) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), plane = in.dim(2) * in.dim(3);
  const std::size_t cout = weight.dim(0);
  Tensor din(in.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* g = dout.ptr() + b * cout * plane;
    if (dbias) {
      for (std::size_t k = 0; k < cout; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += g[k * plane + i];
        (*dbias)[k] += s;
      }
    }
    gemm(false, true, cout, cin, plane, g, in.ptr() + b * cin * plane, dweight.ptr(), true);
    gemm(true, false, cin, plane, cout, weight.ptr(), g, din.ptr() + b * cin * plane, false);
  }
  return din;
}

template <typename Normalize>
Tensor generate(const Tensor& x, const InvolutionParams& p, Normalize&& normalize,
                InvolutionTape* tape) {
  check_input(x, p);
  const Window w = p.window();
  const std::size_t oh = w.out_h(x.dim(2)), ow = w.out_w(x.dim(3));
  Tensor pooled = strided(p) ? avgpool_forward(x, pool_window(p)) : x;
  if (pooled.dim(2) != oh || pooled.dim(3) != ow) {
    throw GeometryError("involution: pooled input " + pooled.shape().str() +
                        " does not align with the unfolded output grid");
  }
  Tensor act = relu(normalize(pointwise(pooled, p.reduce_weight.value, nullptr)));
  Tensor kernel = pointwise(act, p.span_weight.value, &p.span_bias.value);
  kernel = reshape(kernel, Shape{x.dim(0), p.groups, p.taps(), oh, ow});
  if (tape) {
    tape->pooled = std::move(pooled);
    tape->act = std::move(act);
    tape->generated = true;
  }
  return kernel;
}

void check_kernel(const Tensor& x, const Tensor& kernel, const Window& w, std::size_t groups) {
  require_rank4(x, "involution_aggregate");
  if (groups == 0 || x.dim(1) % groups != 0) {
    throw GeometryError("involution: channel count must be divisible by the group count");
  }
  const Shape expected{x.dim(0), groups, w.taps(), w.out_h(x.dim(2)), w.out_w(x.dim(3))};
  if (kernel.shape() != expected) {
    throw ShapeError("involution: kernel field " + kernel.shape().str() + " expected " + expected.str());
  }
}

}  // namespace

std::size_t involution_weight_count(std::size_t channels, std::size_t taps, std::size_t groups,
                                    std::size_t reduction) {
  const std::size_t reduced = channels / reduction;
  return channels * reduced + reduced * taps * groups + taps * groups;
}

std::size_t InvolutionParams::weight_count() const {
  return reduce_weight.numel() + span_weight.numel() + span_bias.numel();
}

void validate_involution(std::size_t channels, std::size_t kh, std::size_t kw, std::size_t groups,
                         std::size_t reduction) {
  if (kh % 2 == 0 || kw % 2 == 0) throw GeometryError("involution kernel extents must be odd");
  if (groups == 0 || channels % groups != 0) {
    throw GeometryError("involution: channels (" + std::to_string(channels) +
                        ") not divisible by groups (" + std::to_string(groups) + ")");
  }
  if (reduction == 0 || channels % reduction != 0) {
    throw GeometryError("involution: channels (" + std::to_string(channels) +
                        ") not divisible by reduction ratio (" + std::to_string(reduction) + ")");
  }
}

InvolutionParams make_involution(std::size_t channels, std::size_t kh, std::size_t kw,
                                 std::size_t groups, std::size_t reduction, Rng& rng,
                                 std::size_t stride_h, std::size_t stride_w) {
  validate_involution(channels, kh, kw, groups, reduction);
  InvolutionParams p;
  p.channels = channels;
  p.kh = kh;
  p.kw = kw;
  p.groups = groups;
  p.reduction = reduction;
  p.stride_h = stride_h;
  p.stride_w = stride_w;
  const std::size_t reduced = channels / reduction;
  p.reduce_weight = Param(fan_in_uniform(rng, Shape{reduced, channels}, channels));
  p.reduce_bn = make_batchnorm(reduced);
  p.span_weight = Param(fan_in_uniform(rng, Shape{kh * kw * groups, reduced}, reduced));
  p.span_bias = Param(Tensor(Shape{kh * kw * groups}), false);
  return p;
}

Tensor involution_kernel_gen(const Tensor& x, InvolutionParams& p, InvolutionTape* tape) {
  return generate(
      x, p,
      [&](const Tensor& z) { return batchnorm_forward(z, p.reduce_bn, tape ? &tape->bn : nullptr); },
      tape);
}

Tensor involution_kernel_gen_infer(const Tensor& x, const InvolutionParams& p) {
  return generate(
      x, p, [&](const Tensor& z) { return batchnorm_infer(z, p.reduce_bn); }, nullptr);
}

Tensor involution_aggregate(const Tensor& x, const Tensor& kernel, const Window& w,
                            std::size_t groups, Tensor* cols_out) {
  check_kernel(x, kernel, w, groups);
  const std::size_t batch = x.dim(0), channels = x.dim(1), taps = w.taps();
  const std::size_t oh = kernel.dim(3), ow = kernel.dim(4), plane = oh * ow;
  const std::size_t per_group = channels / groups;
  Tensor cols = unfold(x, w);
  Tensor y(Shape{batch, channels, oh, ow});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* kern = kernel.ptr() + (b * groups + c / per_group) * taps * plane;
      const double* patch = cols.ptr() + (b * channels + c) * taps * plane;
      double* out = y.ptr() + (b * channels + c) * plane;
      for (std::size_t k = 0; k < taps; ++k) {
        for (std::size_t i = 0; i < plane; ++i) out[i] += kern[k * plane + i] * patch[k * plane + i];
      }
    }
  }
  if (cols_out) *cols_out = std::move(cols);
  return y;
}

Tensor involution_forward(const Tensor& x, InvolutionParams& p, InvolutionTape* tape,
                          const Tensor* kernel_override) {
  check_input(x, p);
  Tensor kernel = kernel_override ? *kernel_override : involution_kernel_gen(x, p, tape);
  Tensor y = involution_aggregate(x, kernel, p.window(), p.groups, tape ? &tape->cols : nullptr);
  if (tape) {
    tape->in_shape = x.shape();
    tape->kernel = std::move(kernel);
    if (kernel_override) tape->generated = false;
    tape->arm(&p);
  }
  return y;
}

Tensor involution_infer(const Tensor& x, const InvolutionParams& p) {
  return involution_aggregate(x, involution_kernel_gen_infer(x, p), p.window(), p.groups);
}

Tensor involution_backward(InvolutionParams& p, InvolutionTape& tape, const Tensor& dy) {
  tape.consume(&p, "involution");
  const Window w = p.window();
  const std::size_t batch = tape.in_shape[0], channels = p.channels, taps = w.taps();
  const std::size_t groups = p.groups, per_group = channels / groups;
  const std::size_t oh = tape.kernel.dim(3), ow = tape.kernel.dim(4), plane = oh * ow;
  if (dy.shape() != Shape{batch, channels, oh, ow}) {
    throw ShapeError("involution_backward: gradient shape " + dy.shape().str() + " does not match output");
  }

  // Multiply-add: d kernel and d unfold(x).
  Tensor dkernel(tape.kernel.shape());
  Tensor dcols(tape.cols.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t kbase = (b * groups + c / per_group) * taps * plane;
      const std::size_t cbase = (b * channels + c) * taps * plane;
      const double* g = dy.ptr() + (b * channels + c) * plane;
      for (std::size_t k = 0; k < taps; ++k) {
        const double* kern = tape.kernel.ptr() + kbase + k * plane;
        const double* patch = tape.cols.ptr() + cbase + k * plane;
        double* dk = dkernel.ptr() + kbase + k * plane;
        double* dp = dcols.ptr() + cbase + k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          dk[i] += g[i] * patch[i];
          dp[i] = kern[i] * g[i];
        }
      }
    }
  }
  Tensor dx = fold(dcols, tape.in_shape, w);
  tape.cols = Tensor();
  if (!tape.generated) return dx;

  // Kernel generation: span <- relu <- bn <- reduce <- o.
  const Tensor dkernel_flat = reshape(dkernel, Shape{batch, groups * taps, oh, ow});
  Tensor dact = pointwise_backward(tape.act, p.span_weight.value, dkernel_flat, p.span_weight.grad,
                                   &p.span_bias.grad);
  Tensor dz = batchnorm_backward(p.reduce_bn, tape.bn, relu_backward(tape.act, dact));
  Tensor dpooled = pointwise_backward(tape.pooled, p.reduce_weight.value, dz, p.reduce_weight.grad,
                                      nullptr);
  if (strided(p)) {
    dx += avgpool_backward(tape.in_shape, pool_window(p), dpooled);
  } else {
    dx += dpooled;
  }
  tape.pooled = Tensor();
  tape.act = Tensor();
  return dx;
}

}  // namespace invo::nn
