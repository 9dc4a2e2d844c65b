#pragma once

// Dense row-major real tensors, a small GEMM kernel and a seedable random
// source. Everything else in the library is built on these.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace invo {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Shape {
 public:
  static constexpr std::size_t kMaxRank = 6;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  // Product of extents; 0 for the empty (rank-0) shape.
  std::size_t numel() const;

  // Row-major linear offset of a multi-index. The one place where layout is
  // defined; hot loops derive their plane strides from it.
  std::size_t offset(std::span<const std::size_t> index) const;
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    return offset(std::span<const std::size_t>(index.begin(), index.size()));
  }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::initializer_list<std::size_t> index) { return data_[shape_.offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const { return data_[shape_.offset(index)]; }

  void fill(double value);

  // In-place accumulation; the only mutating arithmetic on a tensor.
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor reshape(const Tensor& t, const Shape& shape);

// Elementwise ops. Shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// 0/1 mask of a > 0 (so relu_grad(0) == 0).
Tensor relu_grad(const Tensor& a);

bool all_finite(const Tensor& t);
// Throws NumericError naming `where` if t holds NaN or Inf.
void require_finite(const Tensor& t, const char* where);
double max_abs_diff(const Tensor& a, const Tensor& b);

// C = op(A) * op(B) (+ C when accumulate). A is m x k after op, B is k x n
// after op, all matrices dense row-major. Summation over k is always in
// increasing index order, so results are reproducible bit for bit.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);

// Deterministic random source: mt19937_64 for raw bits, 53-bit uniforms, and
// Box-Muller normals (the second variate of each pair is cached).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::size_t below(std::size_t n);      // [0, n), unbiased
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Tensor rng_normal(Rng& rng, const Shape& shape, double mean, double stddev);
Tensor rng_uniform(Rng& rng, const Shape& shape, double lo, double hi);

}  // namespace invo
