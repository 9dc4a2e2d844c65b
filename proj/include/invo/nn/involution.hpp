#pragma once

// Involution: a spatial operator whose kh x kw kernel is generated at every
// output location from the input pixel there, and shared by all channels of
// one of G contiguous channel groups.
//
//   kernel(b, :, i, j) = span( relu( bn( reduce( o(x)(b, :, i, j) ) ) ) )
//   y(b, k, i, j)      = sum_{(u,v)} kernel(b, g(k), (u,v), i, j) * x(b, k, i*s+u, j*s+v)
//
// reduce is a bias-free C -> C/r pointwise map, span a C/r -> kh*kw*G
// pointwise map with bias, o average pooling with window s when the stride
// s exceeds 1. Channel k belongs to group g(k) = k / (C/G).
//
// Shapes: x is B x C x H x W, the kernel field B x G x (kh*kw) x H' x W'.

#include "invo/nn/batchnorm.hpp"
#include "invo/nn/common.hpp"

namespace invo::nn {

struct InvolutionParams {
  std::size_t channels = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t groups = 1;
  std::size_t reduction = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;

  Param reduce_weight;  // (C/r) x C
  BatchNormState reduce_bn;
  Param span_weight;  // (kh*kw*G) x (C/r)
  Param span_bias;    // kh*kw*G

  std::size_t taps() const { return kh * kw; }
  std::size_t reduced_channels() const { return channels / reduction; }
  Window window() const { return Window::same(kh, kw, stride_h, stride_w); }
  // Arrays of the kernel-generation maps: C*C/r + (C/r)*K*G + K*G, K = kh*kw.
  std::size_t weight_count() const;
  // weight_count() plus the affine terms of the inner batch norm.
  std::size_t param_count() const { return weight_count() + reduce_bn.param_count(); }
};

std::size_t involution_weight_count(std::size_t channels, std::size_t taps, std::size_t groups,
                                    std::size_t reduction);

// Throws GeometryError unless C is divisible by G and r, and kh, kw are odd.
void validate_involution(std::size_t channels, std::size_t kh, std::size_t kw, std::size_t groups,
                         std::size_t reduction);

InvolutionParams make_involution(std::size_t channels, std::size_t kh, std::size_t kw,
                                 std::size_t groups, std::size_t reduction, Rng& rng,
                                 std::size_t stride_h = 1, std::size_t stride_w = 1);

struct InvolutionTape : Tape {
  Shape in_shape;
  Tensor pooled;  // o(x), the kernel generator's input
  BatchNormTape bn;
  Tensor act;     // relu(bn(reduce(o(x))))
  Tensor kernel;  // B x G x K x H' x W'
  Tensor cols;    // unfold(x)
  bool generated = false;  // false when the kernel was injected
};

// Kernel generation alone. With a tape, records what backward needs.
Tensor involution_kernel_gen(const Tensor& x, InvolutionParams& p, InvolutionTape* tape = nullptr);
Tensor involution_kernel_gen_infer(const Tensor& x, const InvolutionParams& p);

// The multiply-add step: unfold x, broadcast-multiply by the kernel of each
// channel's group, sum over the window taps. `cols_out` receives unfold(x).
Tensor involution_aggregate(const Tensor& x, const Tensor& kernel, const Window& w,
                            std::size_t groups, Tensor* cols_out = nullptr);

// Full operator. `kernel_override` replaces the generated kernel field (test
// hook); gradients then flow only through the multiply-add.
Tensor involution_forward(const Tensor& x, InvolutionParams& p, InvolutionTape* tape = nullptr,
                          const Tensor* kernel_override = nullptr);
Tensor involution_infer(const Tensor& x, const InvolutionParams& p);

// Gradient w.r.t. x through both the multiply-add and kernel generation;
// accumulates parameter gradients into p.
Tensor involution_backward(InvolutionParams& p, InvolutionTape& tape, const Tensor& dy);

}  // namespace invo::nn
