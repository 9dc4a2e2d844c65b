#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "invo/tensor.hpp"

namespace invo::nn {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { training, inference };

// A learnable array with its gradient buffer. `decay` marks whether weight
// decay applies (weights yes; biases and batch-norm affine terms no).
struct Param {
  Tensor value;
  Tensor grad;
  bool decay = true;

  Param() = default;
  explicit Param(Tensor v, bool decay_enabled = true)
      : value(std::move(v)), grad(value.shape()), decay(decay_enabled) {}

  std::size_t numel() const { return value.numel(); }
  void zero_grad() { grad.fill(0.0); }
};

// Records that a forward pass filled a tape for a particular layer. Backward
// consumes it exactly once; a second backward, or a backward with another
// layer's parameters, is a TapeError.
class Tape {
 public:
  void arm(const void* owner) {
    owner_ = owner;
    armed_ = true;
  }
  void consume(const void* owner, const char* layer) {
    if (!armed_) throw TapeError(std::string(layer) + ": backward without a fresh forward tape");
    if (owner != owner_) throw TapeError(std::string(layer) + ": tape belongs to another layer");
    armed_ = false;
  }
  bool armed() const { return armed_; }

 private:
  const void* owner_ = nullptr;
  bool armed_ = false;
};

// Sliding-window geometry over the two trailing (spatial) axes.
struct Window {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  // "Same" padding: floor(k/2) on each axis. Requires odd extents.
  static Window same(std::size_t kh, std::size_t kw, std::size_t stride_h = 1,
                     std::size_t stride_w = 1);

  std::size_t taps() const { return kh * kw; }
  std::size_t out_h(std::size_t h) const;
  std::size_t out_w(std::size_t w) const;
};

// Neighbourhood offsets of an odd k x k window, row-major from (-k/2,-k/2).
std::vector<std::pair<int, int>> offsets(int k);
std::vector<std::pair<int, int>> offsets(int kh, int kw);

// x: B x C x H x W  ->  B x (C*kh*kw) x (H'*W'). Row index is
// (c*kh + u)*kw + v; taps outside the input read as zero.
Tensor unfold(const Tensor& x, const Window& w);
Tensor unfold(const Tensor& x, std::size_t k, std::size_t stride, std::size_t padding);
// Adjoint of unfold: scatters columns back onto a zero tensor of in_shape.
Tensor fold(const Tensor& cols, const Shape& in_shape, const Window& w);

Tensor relu_backward(const Tensor& out, const Tensor& dy);

// Uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor fan_in_uniform(Rng& rng, const Shape& shape, std::size_t fan_in);

void require_rank4(const Tensor& x, const char* where);

}  // namespace invo::nn
