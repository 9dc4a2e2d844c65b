#pragma once

// Central finite-difference checks of every layer's backward pass.

#include <cstdint>
#include <string>
#include <vector>

namespace invo {

struct GradcheckOptions {
  double step = 1e-5;
  double max_tolerance = 1e-4;   // worst element
  double mean_tolerance = 1e-6;  // average over checked elements
  // Relative error is |analytic - numeric| / max(floor, |analytic|, |numeric|).
  double floor = 1e-3;
  // Arrays larger than this are checked on a random subset of entries.
  std::size_t max_entries = 48;
  // A difference step that flips a ReLU or maxpool decision is retried with
  // steps 10x, 100x and 1000x smaller; entries that still straddle a kink are
  // skipped, and more than this share of skipped entries fails the check.
  double max_skipped_fraction = 0.01;
  std::uint64_t seed = 7;
};

struct GradcheckResult {
  std::string layer;
  std::size_t checked = 0;
  std::size_t refined = 0;  // needed a smaller step to clear a kink
  std::size_t skipped = 0;  // no step cleared the kink
  double max_error = 0.0;
  double mean_error = 0.0;
  std::string worst;  // "<array>[<index>]"
  bool passed = false;
};

// conv2d, conv2d_pointwise, involution, involution_2d, involution_strided,
// batchnorm_train, batchnorm_infer, maxpool, avgpool, gap, fc, relu,
// softmax_xent, bottleneck, bottleneck_downsample, model, model_convolution.
const std::vector<std::string>& gradcheck_layers();

// Throws std::invalid_argument for an unknown layer name.
GradcheckResult gradcheck(const std::string& layer, const GradcheckOptions& options = {});

}  // namespace invo
