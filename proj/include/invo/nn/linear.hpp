#pragma once

#include <span>

#include "invo/nn/common.hpp"

namespace invo::nn {

// Fully connected layer y = x W + b with W stored D x M.
struct LinearParams {
  Param weight;
  Param bias;

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

LinearParams make_linear(std::size_t in_features, std::size_t out_features, Rng& rng);

struct LinearTape : Tape {
  Tensor x;
};

Tensor fc_forward(const Tensor& x, const LinearParams& p, LinearTape* tape = nullptr);
Tensor fc_backward(LinearParams& p, LinearTape& tape, const Tensor& dy);

struct SoftmaxXent {
  double loss = 0.0;  // mean negative log-likelihood over the batch
  Tensor probs;
  Tensor grad_logits;  // (probs - onehot) / B
};

Tensor softmax(const Tensor& logits);
SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels);

}  // namespace invo::nn
