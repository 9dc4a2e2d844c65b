#include "invo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "invo/nn/linear.hpp"

namespace invo {

void SgdConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd: lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight_decay must be non-negative");
  if (epochs < 0) throw std::invalid_argument("sgd: epochs must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("sgd: batch_size must be positive");
  if (!(lr_factor > 0.0)) throw std::invalid_argument("sgd: lr_factor must be positive");
}

double SgdConfig::lr_at(int epoch) const {
  double rate = lr;
  for (int m : milestones) {
    if (epoch >= m) rate *= lr_factor;
  }
  return rate;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity shapes differ");
  }
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    velocity[i] = momentum * velocity[i] + g;
    param[i] -= lr * velocity[i];
  }
}

void rotate_phase(Tensor& iq, double phi) {
  if (iq.rank() != 2 || iq.dim(0) != 2) throw ShapeError("rotate_phase expects a 2 x N frame");
  const std::size_t n = iq.dim(1);
  const double c = std::cos(phi), s = std::sin(phi);
  for (std::size_t t = 0; t < n; ++t) {
    const double re = iq[t], im = iq[n + t];
    iq[t] = c * re - s * im;
    iq[n + t] = s * re + c * im;
  }
}

void conjugate(Tensor& iq) {
  if (iq.rank() != 2 || iq.dim(0) != 2) throw ShapeError("conjugate expects a 2 x N frame");
  for (std::size_t t = iq.dim(1); t < 2 * iq.dim(1); ++t) iq[t] = -iq[t];
}

void reverse_time(Tensor& iq) {
  if (iq.rank() != 2 || iq.dim(0) != 2) throw ShapeError("reverse_time expects a 2 x N frame");
  const std::size_t n = iq.dim(1);
  std::reverse(iq.ptr(), iq.ptr() + n);
  std::reverse(iq.ptr() + n, iq.ptr() + 2 * n);
}

Sgd::Sgd(Model& model, const SgdConfig& config) : config_(config) {
  config_.validate();
  for (auto& [name, p] : model.params()) velocity_.emplace_back(p->value.shape());
}

void Sgd::step(Model& model, double lr) {
  auto params = model.params();
  if (params.size() != velocity_.size()) throw std::logic_error("Sgd: model does not match optimizer");
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Param& p = *params[i].second;
    sgd_step(p.value, p.grad, velocity_[i], lr, config_.momentum, p.decay ? config_.weight_decay : 0.0);
  }
}

std::vector<EpochLog> train(Model& model, std::span<const SignalFrame> frames, const SgdConfig& config,
                            const EpochCallback& on_epoch) {
  config.validate();
  if (frames.empty()) throw std::invalid_argument("train: empty training set");
  if (config.batch_size > frames.size()) {
    throw std::invalid_argument("train: batch_size exceeds the training set size");
  }
  model.set_mode(nn::Mode::training);
  Sgd opt(model, config);
  Rng rng(mix_seed(config.seed, 0x5f));  // independent of the init stream
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> history;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr = config.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const SignalFrame*> batch;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&frames[order[i]]);
        labels.push_back(frames[order[i]].label);
      }
      Tensor x = stack_frames(std::span<const SignalFrame* const>(batch));
      if (config.augment_phase || config.augment_flip) {
        const std::size_t n = x.dim(3);
        for (std::size_t b = 0; b < batch.size(); ++b) {
          Tensor iq(Shape{2, n}, std::vector<double>(x.ptr() + b * 2 * n, x.ptr() + (b + 1) * 2 * n));
          if (config.augment_phase) rotate_phase(iq, rng.uniform(0.0, 2.0 * std::numbers::pi));
          if (config.augment_flip) {
            if (rng.below(2) == 1) conjugate(iq);
            if (rng.below(2) == 1) reverse_time(iq);
          }
          std::copy(iq.data().begin(), iq.data().end(), x.ptr() + b * 2 * n);
        }
      }
      ModelTape tape;
      const Tensor logits = model.forward(x, &tape);
      const nn::SoftmaxXent ce = nn::softmax_xent(logits, labels);
      if (!std::isfinite(ce.loss)) {
        throw DivergenceError("training diverged: loss " + std::to_string(ce.loss) + " at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      model.zero_grad();
      model.backward(tape, ce.grad_logits);
      opt.step(model, lr);
      loss_sum += ce.loss;
      ++batches;
    }
    const EpochLog log{epoch, loss_sum / static_cast<double>(batches), lr};
    history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  model.set_mode(nn::Mode::inference);
  return history;
}

EvalReport evaluate(const Model& model, std::span<const SignalFrame> frames,
                    const std::vector<std::string>& class_names, std::size_t batch_size) {
  if (frames.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  const std::size_t classes = class_names.size();
  if (classes != model.config().num_classes) {
    throw std::invalid_argument("evaluate: class list does not match the model's output width");
  }
  EvalReport report;
  report.class_names = class_names;
  report.pooled = ConfusionMatrix(classes);
  report.param_count = model.parameter_count();
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    const std::size_t end = std::min(frames.size(), start + batch_size);
    const auto chunk = frames.subspan(start, end - start);
    const std::vector<std::size_t> pred = argmax_rows(model.infer(stack_frames(chunk)));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto truth = static_cast<std::size_t>(chunk[i].label);
      auto [it, inserted] = report.per_snr.try_emplace(chunk[i].snr_db, classes);
      it->second.add(truth, pred[i]);
      report.pooled.add(truth, pred[i]);
    }
  }
  report.overall_pr_cc = report.pooled.pr_cc();
  return report;
}

}  // namespace invo
