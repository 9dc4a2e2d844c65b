#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "invo/tensor.hpp"

namespace invo {

// Square count matrix, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }

  std::uint64_t row_total(std::size_t truth) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;

  double accuracy() const;  // trace / total
  double recall(std::size_t truth) const;
  // Average probability of correct classification: per-class recalls
  // weighted by equal priors over the classes present in the matrix.
  double pr_cc() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::map<double, ConfusionMatrix> per_snr;  // keyed by SNR in dB, ascending
  ConfusionMatrix pooled;
  double overall_pr_cc = 0.0;
  std::vector<EpochLog> loss_history;
  std::size_t param_count = 0;

  std::map<double, double> per_snr_accuracy() const;
};

}  // namespace invo
