#pragma once

#include "invo/nn/common.hpp"

namespace invo::nn {

struct PoolTape : Tape {
  Shape in_shape;
  Window window;
  std::vector<std::size_t> argmax;  // linear input index per output element
};

// Unpadded max pooling. Ties go to the lowest linear input index.
Tensor maxpool_forward(const Tensor& x, const Window& w, PoolTape* tape = nullptr);
Tensor maxpool_backward(PoolTape& tape, const Tensor& dy);

// Unpadded average pooling (used as the stride reduction in front of
// involution kernel generation).
Tensor avgpool_forward(const Tensor& x, const Window& w);
Tensor avgpool_backward(const Shape& in_shape, const Window& w, const Tensor& dy);

// Global average pooling: B x C x H x W -> B x C.
Tensor gap_forward(const Tensor& x);
Tensor gap_backward(const Shape& in_shape, const Tensor& dy);

}  // namespace invo::nn
