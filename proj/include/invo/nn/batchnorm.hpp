#pragma once

#include "invo/nn/common.hpp"

namespace invo::nn {

// Per-channel batch normalization over the batch and spatial axes.
// Training mode normalizes with the biased batch variance and folds the
// batch moments into the running estimates with `momentum`; inference mode
// uses the running estimates.
struct BatchNormState {
  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  Mode mode = Mode::training;

  std::size_t channels() const { return gamma.value.numel(); }
  std::size_t param_count() const { return gamma.numel() + beta.numel(); }
};

BatchNormState make_batchnorm(std::size_t channels);

struct BatchNormTape : Tape {
  Mode mode = Mode::training;
  Tensor xhat;
  std::vector<double> inv_std;
};

Tensor batchnorm_forward(const Tensor& x, BatchNormState& st, BatchNormTape* tape = nullptr);
// Read-only inference path; throws if st is in training mode.
Tensor batchnorm_infer(const Tensor& x, const BatchNormState& st);
Tensor batchnorm_backward(BatchNormState& st, BatchNormTape& tape, const Tensor& dy);

}  // namespace invo::nn
