#pragma once

#include "invo/nn/common.hpp"

namespace invo::nn {

// weight: C_out x C_in x kh x kw, bias: C_out.
struct ConvParams {
  Param weight;
  Param bias;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t kh() const { return weight.value.dim(2); }
  std::size_t kw() const { return weight.value.dim(3); }
  Window window() const { return Window{kh(), kw(), stride_h, stride_w, pad_h, pad_w}; }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

// C_o * C_i * kh * kw + C_o
std::size_t conv_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t kh,
                             std::size_t kw);

// Fan-in uniform weights, zero bias, stride 1 and "same" padding.
ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kh,
                     std::size_t kw, Rng& rng);

struct ConvTape : Tape {
  Shape in_shape;
  Tensor cols;  // unfolded input, or the input itself for a pointwise conv
};

Tensor conv2d_forward(const Tensor& x, const ConvParams& p, ConvTape* tape = nullptr);
// Accumulates into p.weight.grad / p.bias.grad and returns the input gradient.
Tensor conv2d_backward(ConvParams& p, ConvTape& tape, const Tensor& dy);

}  // namespace invo::nn
