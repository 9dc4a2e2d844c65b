#include "invo/nn/common.hpp"

#include <cmath>
#include <string>

namespace invo::nn {

Window Window::same(std::size_t kh, std::size_t kw, std::size_t stride_h, std::size_t stride_w) {
  if (kh % 2 == 0 || kw % 2 == 0) throw GeometryError("same padding needs odd kernel extents");
  return Window{kh, kw, stride_h, stride_w, kh / 2, kw / 2};
}

std::size_t Window::out_h(std::size_t h) const {
  if (kh == 0 || stride_h == 0) throw GeometryError("window extent and stride must be positive");
  if (h + 2 * pad_h < kh) {
    throw GeometryError("window height " + std::to_string(kh) + " exceeds padded input height " +
                        std::to_string(h + 2 * pad_h));
  }
  return (h + 2 * pad_h - kh) / stride_h + 1;
}

std::size_t Window::out_w(std::size_t w) const {
  if (kw == 0 || stride_w == 0) throw GeometryError("window extent and stride must be positive");
  if (w + 2 * pad_w < kw) {
    throw GeometryError("window width " + std::to_string(kw) + " exceeds padded input width " +
                        std::to_string(w + 2 * pad_w));
  }
  return (w + 2 * pad_w - kw) / stride_w + 1;
}

std::vector<std::pair<int, int>> offsets(int kh, int kw) {
  if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
    throw GeometryError("offsets need odd positive kernel extents");
  }
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(kh * kw));
  for (int u = -kh / 2; u <= kh / 2; ++u) {
    for (int v = -kw / 2; v <= kw / 2; ++v) out.emplace_back(u, v);
  }
  return out;
}

std::vector<std::pair<int, int>> offsets(int k) { return offsets(k, k); }

void require_rank4(const Tensor& x, const char* where) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(where) + ": expected B x C x H x W input, got " + x.shape().str());
  }
}

Tensor unfold(const Tensor& x, const Window& w) {
  require_rank4(x, "unfold");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t oh = w.out_h(h), ow = w.out_w(wd);
  const std::size_t plane = oh * ow;
  Tensor cols(Shape{batch, channels * w.taps(), plane});
  const double* src = x.ptr();
  double* dst = cols.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* in = src + (b * channels + c) * h * wd;
      for (std::size_t u = 0; u < w.kh; ++u) {
        for (std::size_t v = 0; v < w.kw; ++v) {
          double* row = dst + ((b * channels + c) * w.taps() + u * w.kw + v) * plane;
          for (std::size_t i = 0; i < oh; ++i) {
            const auto ih = static_cast<std::ptrdiff_t>(i * w.stride_h + u) -
                            static_cast<std::ptrdiff_t>(w.pad_h);
            double* out = row + i * ow;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;  // stays zero
            const double* in_row = in + static_cast<std::size_t>(ih) * wd;
            for (std::size_t j = 0; j < ow; ++j) {
              const auto iw = static_cast<std::ptrdiff_t>(j * w.stride_w + v) -
                              static_cast<std::ptrdiff_t>(w.pad_w);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(wd)) out[j] = in_row[iw];
            }
          }
        }
      }
    }
  }
  return cols;
}

Tensor unfold(const Tensor& x, std::size_t k, std::size_t stride, std::size_t padding) {
  if (k % 2 == 0) throw GeometryError("unfold kernel size must be odd");
  return unfold(x, Window{k, k, stride, stride, padding, padding});
}

Tensor fold(const Tensor& cols, const Shape& in_shape, const Window& w) {
  if (in_shape.rank() != 4) throw ShapeError("fold: target shape must be rank 4");
  const std::size_t batch = in_shape[0], channels = in_shape[1], h = in_shape[2], wd = in_shape[3];
  const std::size_t oh = w.out_h(h), ow = w.out_w(wd);
  const std::size_t plane = oh * ow;
  if (cols.shape() != Shape{batch, channels * w.taps(), plane}) {
    throw ShapeError("fold: column tensor " + cols.shape().str() + " does not match geometry");
  }
  Tensor x(in_shape);
  const double* src = cols.ptr();
  double* dst = x.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* out = dst + (b * channels + c) * h * wd;
      for (std::size_t u = 0; u < w.kh; ++u) {
        for (std::size_t v = 0; v < w.kw; ++v) {
          const double* row = src + ((b * channels + c) * w.taps() + u * w.kw + v) * plane;
          for (std::size_t i = 0; i < oh; ++i) {
            const auto ih = static_cast<std::ptrdiff_t>(i * w.stride_h + u) -
                            static_cast<std::ptrdiff_t>(w.pad_h);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            double* out_row = out + static_cast<std::size_t>(ih) * wd;
            const double* in = row + i * ow;
            for (std::size_t j = 0; j < ow; ++j) {
              const auto iw = static_cast<std::ptrdiff_t>(j * w.stride_w + v) -
                              static_cast<std::ptrdiff_t>(w.pad_w);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(wd)) out_row[iw] += in[j];
            }
          }
        }
      }
    }
  }
  return x;
}

Tensor relu_backward(const Tensor& out, const Tensor& dy) {
  if (out.shape() != dy.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = out[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor fan_in_uniform(Rng& rng, const Shape& shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return rng_uniform(rng, shape, -bound, bound);
}

}  // namespace invo::nn
