#include "invo/nn/conv.hpp"

namespace invo::nn {

namespace {

bool is_pointwise(const ConvParams& p) {
  return p.kh() == 1 && p.kw() == 1 && p.stride_h == 1 && p.stride_w == 1 && p.pad_h == 0 &&
         p.pad_w == 0;
}

void check_params(const ConvParams& p) {
  if (p.weight.value.rank() != 4) throw ShapeError("conv weight must be rank 4");
  if (p.bias.value.shape() != Shape{p.out_channels()}) {
    throw ShapeError("conv bias length must equal output channels");
  }
}

}  // namespace

std::size_t conv_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t kh,
                             std::size_t kw) {
  return out_channels * in_channels * kh * kw + out_channels;
}

ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kh,
                     std::size_t kw, Rng& rng) {
  const Window w = Window::same(kh, kw);
  ConvParams p;
  p.weight = Param(fan_in_uniform(rng, Shape{out_channels, in_channels, kh, kw}, in_channels * kh * kw));
  p.bias = Param(Tensor(Shape{out_channels}), false);
  p.pad_h = w.pad_h;
  p.pad_w = w.pad_w;
  return p;
}

Tensor conv2d_forward(const Tensor& x, const ConvParams& p, ConvTape* tape) {
  require_rank4(x, "conv2d");
  check_params(p);
  if (x.dim(1) != p.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(p.in_channels()));
  }
  const Window w = p.window();
  const std::size_t batch = x.dim(0);
  const std::size_t oh = w.out_h(x.dim(2)), ow = w.out_w(x.dim(3));
  const std::size_t plane = oh * ow;
  const std::size_t co = p.out_channels();
  const std::size_t depth = p.in_channels() * w.taps();

  Tensor cols = is_pointwise(p) ? x : unfold(x, w);
  Tensor y(Shape{batch, co, oh, ow});
  for (std::size_t b = 0; b < batch; ++b) {
    double* out = y.ptr() + b * co * plane;
    for (std::size_t k = 0; k < co; ++k) {
      std::fill(out + k * plane, out + (k + 1) * plane, p.bias.value[k]);
    }
    gemm(false, false, co, plane, depth, p.weight.value.ptr(), cols.ptr() + b * depth * plane, out,
         true);
  }
  if (tape) {
    tape->in_shape = x.shape();
    tape->cols = std::move(cols);
    tape->arm(&p);
  }
  return y;
}

Tensor conv2d_backward(ConvParams& p, ConvTape& tape, const Tensor& dy) {
  tape.consume(&p, "conv2d");
  const Window w = p.window();
  const std::size_t batch = tape.in_shape[0];
  const std::size_t plane = w.out_h(tape.in_shape[2]) * w.out_w(tape.in_shape[3]);
  const std::size_t co = p.out_channels();
  const std::size_t depth = p.in_channels() * w.taps();
  if (dy.shape() != Shape{batch, co, w.out_h(tape.in_shape[2]), w.out_w(tape.in_shape[3])}) {
    throw ShapeError("conv2d_backward: gradient shape " + dy.shape().str() + " does not match output");
  }

  Tensor dcols(Shape{batch, depth, plane});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* g = dy.ptr() + b * co * plane;
    for (std::size_t k = 0; k < co; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += g[k * plane + i];
      p.bias.grad[k] += s;
    }
    gemm(false, true, co, depth, plane, g, tape.cols.ptr() + b * depth * plane, p.weight.grad.ptr(),
         true);
    gemm(true, false, depth, plane, co, p.weight.value.ptr(), g, dcols.ptr() + b * depth * plane,
         false);
  }
  tape.cols = Tensor();
  if (is_pointwise(p)) return reshape(dcols, tape.in_shape);
  return fold(dcols, tape.in_shape, w);
}

}  // namespace invo::nn
