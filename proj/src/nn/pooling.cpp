#include "invo/nn/pooling.hpp"

namespace invo::nn {

namespace {

void require_unpadded(const Window& w, const char* where) {
  if (w.pad_h != 0 || w.pad_w != 0) throw GeometryError(std::string(where) + ": padding not supported");
}

}  // namespace

Tensor maxpool_forward(const Tensor& x, const Window& w, PoolTape* tape) {
  require_rank4(x, "maxpool");
  require_unpadded(w, "maxpool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t oh = w.out_h(h), ow = w.out_w(wd);
  Tensor y(Shape{batch, channels, oh, ow});
  std::vector<std::size_t> argmax(y.numel());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t base = bc * h * wd;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + (i * w.stride_h) * wd + j * w.stride_w;
        for (std::size_t u = 0; u < w.kh; ++u) {
          for (std::size_t v = 0; v < w.kw; ++v) {
            const std::size_t idx = base + (i * w.stride_h + u) * wd + j * w.stride_w + v;
            if (x[idx] > x[best]) best = idx;  // strict: earlier index keeps ties
          }
        }
        y[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  if (tape) {
    tape->in_shape = x.shape();
    tape->window = w;
    tape->argmax = std::move(argmax);
    tape->arm(nullptr);
  }
  return y;
}

Tensor maxpool_backward(PoolTape& tape, const Tensor& dy) {
  tape.consume(nullptr, "maxpool");
  if (dy.numel() != tape.argmax.size()) throw ShapeError("maxpool_backward: gradient shape mismatch");
  Tensor dx(tape.in_shape);
  for (std::size_t o = 0; o < dy.numel(); ++o) dx[tape.argmax[o]] += dy[o];
  tape.argmax.clear();
  return dx;
}

Tensor avgpool_forward(const Tensor& x, const Window& w) {
  require_rank4(x, "avgpool");
  require_unpadded(w, "avgpool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t oh = w.out_h(h), ow = w.out_w(wd);
  const double norm = 1.0 / static_cast<double>(w.taps());
  Tensor y(Shape{batch, channels, oh, ow});
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t base = bc * h * wd;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        double s = 0.0;
        for (std::size_t u = 0; u < w.kh; ++u) {
          for (std::size_t v = 0; v < w.kw; ++v) {
            s += x[base + (i * w.stride_h + u) * wd + j * w.stride_w + v];
          }
        }
        y[o] = s * norm;
      }
    }
  }
  return y;
}

Tensor avgpool_backward(const Shape& in_shape, const Window& w, const Tensor& dy) {
  require_unpadded(w, "avgpool");
  const std::size_t batch = in_shape[0], channels = in_shape[1], h = in_shape[2], wd = in_shape[3];
  const std::size_t oh = w.out_h(h), ow = w.out_w(wd);
  if (dy.shape() != Shape{batch, channels, oh, ow}) {
    throw ShapeError("avgpool_backward: gradient shape mismatch");
  }
  const double norm = 1.0 / static_cast<double>(w.taps());
  Tensor dx(in_shape);
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t base = bc * h * wd;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        const double g = dy[o] * norm;
        for (std::size_t u = 0; u < w.kh; ++u) {
          for (std::size_t v = 0; v < w.kw; ++v) {
            dx[base + (i * w.stride_h + u) * wd + j * w.stride_w + v] += g;
          }
        }
      }
    }
  }
  return dx;
}

Tensor gap_forward(const Tensor& x) {
  require_rank4(x, "gap");
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y(Shape{batch, channels});
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += x[bc * plane + i];
    y[bc] = s / static_cast<double>(plane);
  }
  return y;
}

Tensor gap_backward(const Shape& in_shape, const Tensor& dy) {
  if (in_shape.rank() != 4 || dy.shape() != Shape{in_shape[0], in_shape[1]}) {
    throw ShapeError("gap_backward: gradient shape mismatch");
  }
  const std::size_t plane = in_shape[2] * in_shape[3];
  Tensor dx(in_shape);
  for (std::size_t bc = 0; bc < dy.numel(); ++bc) {
    const double g = dy[bc] / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) dx[bc * plane + i] = g;
  }
  return dx;
}

}  // namespace invo::nn
