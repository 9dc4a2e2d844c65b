#include "invo/nn/linear.hpp"

#include <algorithm>
#include <cmath>

namespace invo::nn {

LinearParams make_linear(std::size_t in_features, std::size_t out_features, Rng& rng) {
  LinearParams p;
  p.weight = Param(fan_in_uniform(rng, Shape{in_features, out_features}, in_features));
  p.bias = Param(Tensor(Shape{out_features}), false);
  return p;
}

Tensor fc_forward(const Tensor& x, const LinearParams& p, LinearTape* tape) {
  if (x.rank() != 2 || x.dim(1) != p.in_features()) {
    throw ShapeError("fc: input " + x.shape().str() + " does not match weight " +
                     p.weight.value.shape().str());
  }
  const std::size_t batch = x.dim(0), m = p.out_features();
  Tensor y(Shape{batch, m});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(p.bias.value.data().begin(), p.bias.value.data().end(), y.ptr() + b * m);
  }
  gemm(false, false, batch, m, p.in_features(), x.ptr(), p.weight.value.ptr(), y.ptr(), true);
  if (tape) {
    tape->x = x;
    tape->arm(&p);
  }
  return y;
}

Tensor fc_backward(LinearParams& p, LinearTape& tape, const Tensor& dy) {
  tape.consume(&p, "fc");
  const std::size_t batch = tape.x.dim(0), d = p.in_features(), m = p.out_features();
  if (dy.shape() != Shape{batch, m}) throw ShapeError("fc_backward: gradient shape mismatch");
  gemm(true, false, d, m, batch, tape.x.ptr(), dy.ptr(), p.weight.grad.ptr(), true);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < m; ++j) p.bias.grad[j] += dy[b * m + j];
  }
  Tensor dx(Shape{batch, d});
  gemm(false, true, batch, d, m, dy.ptr(), p.weight.value.ptr(), dx.ptr(), false);
  tape.x = Tensor();
  return dx;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects B x M logits");
  const std::size_t batch = logits.dim(0), m = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.ptr() + b * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < m; ++j) probs[b * m + j] = std::exp(row[j] - mx) / z;
  }
  return probs;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_xent expects B x M logits");
  const std::size_t batch = logits.dim(0), m = logits.dim(1);
  if (labels.size() != batch) throw ShapeError("softmax_xent: label count does not match batch");
  SoftmaxXent out;
  out.probs = softmax(logits);
  out.grad_logits = out.probs;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
      throw std::out_of_range("softmax_xent: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(m) + ")");
    }
    // log-sum-exp form keeps tiny probabilities accurate.
    const double* row = logits.ptr() + b * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    total += std::log(z) + mx - row[label];
    out.grad_logits[b * m + static_cast<std::size_t>(label)] -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (double& g : out.grad_logits.data()) g *= inv_b;
  out.loss = total * inv_b;
  return out;
}

}  // namespace invo::nn
