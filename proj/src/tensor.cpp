#include "invo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace invo {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank) {
    throw ShapeError("shape rank must be in [1, 6], got " + std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape extents must be positive");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* src = a.ptr();
  double* dst = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  const double* x = a.ptr();
  const double* y = b.ptr();
  double* dst = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

// c[m x n] += a[m x k] * b[k x n]. Register-blocked 4 x 16 micro-tile held in
// vector registers; every output element accumulates its k products in order
// from a zero start, so the result does not depend on the blocking.
using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void add_store8(double* p, Vec8 v) {
  Vec8 c = load8(p);
  c += v;
  std::memcpy(p, &c, sizeof c);
}

void gemm_nn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 16;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    std::size_t j = 0;
    for (; j + kCols <= n; j += kCols) {
      Vec8 c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      const double* bp = b + j;
      for (std::size_t p = 0; p < k; ++p, bp += n) {
        const Vec8 b0 = load8(bp);
        const Vec8 b1 = load8(bp + 8);
        c00 += a0[p] * b0;
        c01 += a0[p] * b1;
        c10 += a1[p] * b0;
        c11 += a1[p] * b1;
        c20 += a2[p] * b0;
        c21 += a2[p] * b1;
        c30 += a3[p] * b0;
        c31 += a3[p] * b1;
      }
      double* cr = c + i * n + j;
      add_store8(cr, c00);
      add_store8(cr + 8, c01);
      add_store8(cr + n, c10);
      add_store8(cr + n + 8, c11);
      add_store8(cr + 2 * n, c20);
      add_store8(cr + 2 * n + 8, c21);
      add_store8(cr + 3 * n, c30);
      add_store8(cr + 3 * n + 8, c31);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < kRows; ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * k + p] * b[p * n + j];
        c[(i + r) * n + j] += s;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < cols; ++q) out[q * rows + r] = src[r * cols + q];
  }
  return out;
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { check_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check_dims(dims_); }

std::size_t Shape::numel() const {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::size_t Shape::offset(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size()) throw ShapeError("index rank mismatch for shape " + str());
  std::size_t off = 0;
  for (std::size_t axis = 0; axis < dims_.size(); ++axis) {
    if (index[axis] >= dims_[axis]) throw ShapeError("index out of range for shape " + str());
    off = off * dims_[axis] + index[axis];
  }
  return off;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "accumulate");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor reshape(const Tensor& t, const Shape& shape) {
  if (t.numel() != shape.numel()) {
    throw ShapeError("reshape " + t.shape().str() + " -> " + shape.str() + ": element count mismatch");
  }
  std::vector<double> data(t.data().begin(), t.data().end());
  return Tensor(shape, std::move(data));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return s * x; });
}

Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x < 0.0 ? 0.0 : x; });  // NaN passes through
}

Tensor relu_grad(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* where) {
  if (!all_finite(t)) throw NumericError(std::string("non-finite value in ") + where);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<double> at;
  std::vector<double> bt;
  if (trans_a) {
    at = transposed(a, k, m);
    a = at.data();
  }
  if (trans_b) {
    bt = transposed(b, n, k);
    b = bt.data();
  }
  gemm_nn_acc(m, n, k, a, b, c);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimension mismatch " + a.shape().str() + " x " + b.shape().str());
  }
  Tensor out(Shape{a.dim(0), b.dim(1)});
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), out.ptr(), false);
  return out;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection sampling keeps the draw unbiased and implementation independent.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor rng_normal(Rng& rng, const Shape& shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("rng_normal: negative standard deviation");
  Tensor out(shape);
  for (double& v : out.data()) v = mean + stddev * rng.normal();
  return out;
}

Tensor rng_uniform(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor out(shape);
  for (double& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace invo
