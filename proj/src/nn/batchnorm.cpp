#include "invo/nn/batchnorm.hpp"

#include <cmath>

namespace invo::nn {

namespace {

void check_input(const Tensor& x, const BatchNormState& st) {
  require_rank4(x, "batchnorm");
  if (x.dim(1) != st.channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(x.dim(1)) + " channels, state has " +
                     std::to_string(st.channels()));
  }
}

Tensor normalize_with(const Tensor& x, const BatchNormState& st, std::span<const double> mean,
                      std::span<const double> inv_std, Tensor* xhat_out) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  if (xhat_out) *xhat_out = Tensor(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * plane;
      const double g = st.gamma.value[c], be = st.beta.value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x[base + i] - mean[c]) * inv_std[c];
        if (xhat_out) (*xhat_out)[base + i] = xh;
        y[base + i] = g * xh + be;
      }
    }
  }
  return y;
}

Tensor infer_impl(const Tensor& x, const BatchNormState& st, BatchNormTape* tape) {
  std::vector<double> inv_std(st.channels());
  for (std::size_t c = 0; c < st.channels(); ++c) {
    inv_std[c] = 1.0 / std::sqrt(st.running_var[c] + st.eps);
  }
  Tensor xhat;
  Tensor y = normalize_with(x, st, st.running_mean.data(), inv_std, tape ? &xhat : nullptr);
  if (tape) {
    tape->mode = Mode::inference;
    tape->xhat = std::move(xhat);
    tape->inv_std = std::move(inv_std);
  }
  return y;
}

}  // namespace

BatchNormState make_batchnorm(std::size_t channels) {
  BatchNormState st;
  st.gamma = Param(Tensor(Shape{channels}, 1.0), false);
  st.beta = Param(Tensor(Shape{channels}), false);
  st.running_mean = Tensor(Shape{channels});
  st.running_var = Tensor(Shape{channels}, 1.0);
  return st;
}

Tensor batchnorm_forward(const Tensor& x, BatchNormState& st, BatchNormTape* tape) {
  check_input(x, st);
  if (st.mode == Mode::inference) {
    Tensor y = infer_impl(x, st, tape);
    if (tape) tape->arm(&st);
    return y;
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t count = batch * plane;
  if (count < 2) throw GeometryError("batchnorm: training mode needs at least two values per channel");

  std::vector<double> mean(channels, 0.0), var(channels, 0.0), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = x.ptr() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    mean[c] = s / static_cast<double>(count);
    double v = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = x.ptr() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mean[c]) * (p[i] - mean[c]);
    }
    var[c] = v / static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var[c] + st.eps);
  }
  Tensor xhat;
  Tensor y = normalize_with(x, st, mean, inv_std, tape ? &xhat : nullptr);
  for (std::size_t c = 0; c < channels; ++c) {
    st.running_mean[c] = (1.0 - st.momentum) * st.running_mean[c] + st.momentum * mean[c];
    st.running_var[c] = (1.0 - st.momentum) * st.running_var[c] + st.momentum * var[c];
  }
  if (tape) {
    tape->mode = Mode::training;
    tape->xhat = std::move(xhat);
    tape->inv_std = std::move(inv_std);
    tape->arm(&st);
  }
  return y;
}

Tensor batchnorm_infer(const Tensor& x, const BatchNormState& st) {
  check_input(x, st);
  if (st.mode != Mode::inference) {
    throw std::logic_error("batchnorm_infer called on a state in training mode");
  }
  return infer_impl(x, st, nullptr);
}

Tensor batchnorm_backward(BatchNormState& st, BatchNormTape& tape, const Tensor& dy) {
  tape.consume(&st, "batchnorm");
  if (dy.shape() != tape.xhat.shape()) throw ShapeError("batchnorm_backward: gradient shape mismatch");
  const std::size_t batch = dy.dim(0), channels = dy.dim(1), plane = dy.dim(2) * dy.dim(3);
  const double count = static_cast<double>(batch * plane);
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += dy[base + i] * tape.xhat[base + i];
      }
    }
    st.gamma.grad[c] += sum_dy_xhat;
    st.beta.grad[c] += sum_dy;
    const double g = st.gamma.value[c];
    const double is = tape.inv_std[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (tape.mode == Mode::inference) {
          dx[base + i] = g * is * dy[base + i];
        } else {
          dx[base + i] = g * is / count *
                         (count * dy[base + i] - sum_dy - tape.xhat[base + i] * sum_dy_xhat);
        }
      }
    }
  }
  tape.xhat = Tensor();
  return dx;
}

}  // namespace invo::nn
