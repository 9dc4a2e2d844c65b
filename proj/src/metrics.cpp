#include "invo/metrics.hpp"

#include <stdexcept>

namespace invo {

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= classes_ || predicted >= classes_) throw std::out_of_range("confusion: class out of range");
  counts_[truth * classes_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t c : counts_) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) s += at(i, i);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const std::uint64_t n = total();
  if (n == 0) throw std::domain_error("confusion: accuracy of an empty matrix");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

double ConfusionMatrix::recall(std::size_t truth) const {
  const std::uint64_t n = row_total(truth);
  if (n == 0) throw std::domain_error("confusion: recall of a class without samples");
  return static_cast<double>(at(truth, truth)) / static_cast<double>(n);
}

double ConfusionMatrix::pr_cc() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < classes_; ++i) {
    if (row_total(i) == 0) continue;
    sum += recall(i);
    ++present;
  }
  if (present == 0) throw std::domain_error("confusion: Pr_cc of an empty matrix");
  return sum / static_cast<double>(present);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("confusion: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects B x M logits");
  const std::size_t batch = logits.dim(0), m = logits.dim(1);
  std::vector<std::size_t> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (logits[b * m + j] > logits[b * m + best]) best = j;
    }
    out[b] = best;
  }
  return out;
}

std::map<double, double> EvalReport::per_snr_accuracy() const {
  std::map<double, double> out;
  for (const auto& [snr, cm] : per_snr) out[snr] = cm.accuracy();
  return out;
}

}  // namespace invo
