#pragma once

// Residual classifier for I/Q frames laid out as B x 2 x 1 x N images:
//
//   stem (1 x k conv, BN, ReLU) -> bottleneck ... -> GAP -> FC
//
// Each bottleneck: 1x1 conv + BN + ReLU -> [maxpool] -> core + BN + ReLU ->
// 1x1 conv + BN, added to the shortcut ([maxpool] -> 1x1 conv + BN, or the
// identity), then ReLU. The core is an involution or, for the convolution
// counterpart, a 1 x k convolution; nothing else differs between the two.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "invo/nn.hpp"

namespace invo {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class CoreOperator { involution, convolution };

std::string to_string(CoreOperator op);
CoreOperator parse_core_operator(std::string_view name);

struct StageSpec {
  std::size_t out_channels = 0;
  bool downsample = false;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct ModelConfig {
  CoreOperator core = CoreOperator::involution;
  std::size_t in_channels = 2;
  std::size_t stem_channels = 32;
  std::size_t stem_kernel = 3;
  std::vector<StageSpec> pyramid{{64, true}, {128, true}};
  std::size_t kernel = 7;  // involution window along time
  std::size_t groups = 4;
  std::size_t reduction = 4;
  std::size_t conv_kernel = 3;  // core width of the convolution counterpart
  std::size_t num_classes = 6;
  double mid_ratio = 0.5;

  void validate() const;
  std::size_t mid_channels(std::size_t out_channels) const;
  // Shortest time axis accepted by forward: 4 x product of pooling windows.
  std::size_t min_length() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ConvBn {
  nn::ConvParams conv;
  nn::BatchNormState bn;
};

struct Bottleneck {
  std::size_t in_channels = 0;
  std::size_t mid_channels = 0;
  std::size_t out_channels = 0;
  bool downsample = false;

  ConvBn reduce;
  std::variant<nn::InvolutionParams, nn::ConvParams> core;
  nn::BatchNormState core_bn;
  ConvBn expand;
  std::optional<ConvBn> shortcut;  // empty means identity
};

struct BottleneckTape {
  nn::ConvTape reduce_conv;
  nn::BatchNormTape reduce_bn;
  Tensor reduce_out;
  nn::PoolTape main_pool;
  nn::InvolutionTape core_invo;
  nn::ConvTape core_conv;
  nn::BatchNormTape core_bn;
  Tensor core_out;
  nn::ConvTape expand_conv;
  nn::BatchNormTape expand_bn;
  nn::PoolTape short_pool;
  nn::ConvTape short_conv;
  nn::BatchNormTape short_bn;
  Tensor out;
};

struct ModelTape {
  nn::ConvTape stem_conv;
  nn::BatchNormTape stem_bn;
  Tensor stem_out;
  std::vector<BottleneckTape> stages;
  Shape gap_in;
  nn::LinearTape fc;
};

// A named view of one stored array, in layer order.
struct StateEntry {
  std::string name;
  Tensor* tensor = nullptr;
  nn::Param* param = nullptr;  // null for running statistics
};

class Model {
 public:
  static Model build(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  void set_mode(nn::Mode mode);
  nn::Mode mode() const { return mode_; }

  // Uses the current mode; in training mode batch-norm running statistics
  // are updated. With a tape, backward can follow.
  Tensor forward(const Tensor& x, ModelTape* tape = nullptr);
  // Read-only forward; requires inference mode.
  Tensor infer(const Tensor& x) const;
  // Accumulates parameter gradients; returns the input gradient.
  Tensor backward(ModelTape& tape, const Tensor& grad_logits);

  void zero_grad();
  std::size_t parameter_count() const;

  std::vector<StateEntry> state();                 // params and running stats
  std::vector<std::pair<std::string, nn::Param*>> params();

  ConvBn& stem() { return stem_; }
  const ConvBn& stem() const { return stem_; }
  std::vector<Bottleneck>& stages() { return stages_; }
  const std::vector<Bottleneck>& stages() const { return stages_; }
  nn::LinearParams& head() { return head_; }
  const nn::LinearParams& head() const { return head_; }

 private:
  ModelConfig config_;
  nn::Mode mode_ = nn::Mode::training;
  ConvBn stem_;
  std::vector<Bottleneck> stages_;
  nn::LinearParams head_;
};

// Closed-form learnable-scalar count for a config (BN affine terms included,
// running statistics excluded).
std::size_t expected_parameter_count(const ModelConfig& config);

struct ParameterComparison {
  std::size_t involution = 0;
  std::size_t convolution = 0;
  double reduction_fraction = 0.0;  // 1 - involution / convolution
};

// Builds both operator variants of `config` and counts their parameters.
ParameterComparison compare(const ModelConfig& config);

}  // namespace invo
