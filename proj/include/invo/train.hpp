#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invo/metrics.hpp"
#include "invo/model.hpp"
#include "invo/signal.hpp"

namespace invo {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 50;
  std::size_t batch_size = 64;
  std::vector<int> milestones{30, 40};  // empty disables the step schedule
  double lr_factor = 0.1;
  std::uint64_t seed = 1;
  // Rotate every training frame by a fresh uniform carrier phase each time it
  // is drawn. Label preserving for phase-blind channels; off by default.
  bool augment_phase = false;
  // Independently conjugate (Q -> -Q) and time-reverse each drawn frame with
  // probability 1/2. Label preserving for the symmetric constellations and
  // the symmetric pulse used here.
  bool augment_flip = false;

  void validate() const;
  // Learning rate in effect during 0-based `epoch`.
  double lr_at(int epoch) const;

  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

// Heavy-ball SGD with weight decay folded into the gradient:
//   g' = g + weight_decay * p;  v = momentum * v + g';  p -= lr * v
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay);

// Momentum buffers for every parameter of one model, in Model::params() order.
// Weight decay is applied only to parameters flagged for it.
class Sgd {
 public:
  Sgd(Model& model, const SgdConfig& config);
  void step(Model& model, double lr);

 private:
  SgdConfig config_;
  std::vector<Tensor> velocity_;
};

// Multiplies the I/Q pair of every time step by e^{j phi}.
void rotate_phase(Tensor& iq, double phi);
void conjugate(Tensor& iq);
void reverse_time(Tensor& iq);

using EpochCallback = std::function<void(const EpochLog&)>;

// Shuffled minibatch training with batch norm in training mode. Returns the
// mean batch loss per epoch; leaves the model in inference mode. Throws
// DivergenceError on a non-finite loss.
std::vector<EpochLog> train(Model& model, std::span<const SignalFrame> frames, const SgdConfig& config,
                            const EpochCallback& on_epoch = {});

// Argmax predictions over `frames`, confusion matrices per SNR and pooled.
// The model must be in inference mode.
EvalReport evaluate(const Model& model, std::span<const SignalFrame> frames,
                    const std::vector<std::string>& class_names, std::size_t batch_size = 256);

}  // namespace invo
