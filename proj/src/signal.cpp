#include "invo/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace invo {

namespace {

std::vector<Complex> normalized(std::vector<Complex> points) {
  double energy = 0.0;
  for (const Complex& p : points) energy += std::norm(p);
  energy /= static_cast<double>(points.size());
  const double s = 1.0 / std::sqrt(energy);
  for (Complex& p : points) p *= s;
  return points;
}

std::vector<Complex> psk(std::size_t order, double offset) {
  std::vector<Complex> pts;
  for (std::size_t k = 0; k < order; ++k) {
    pts.push_back(std::polar(1.0, offset + 2.0 * std::numbers::pi * static_cast<double>(k) /
                                               static_cast<double>(order)));
  }
  return pts;
}

std::vector<Complex> square_qam(int side) {
  std::vector<Complex> pts;
  for (int i = 0; i < side; ++i) {
    for (int q = 0; q < side; ++q) pts.emplace_back(2 * i - side + 1, 2 * q - side + 1);
  }
  return normalized(std::move(pts));
}

}  // namespace

const std::vector<std::string>& known_formats() {
  static const std::vector<std::string> names{"BPSK", "QPSK", "PSK8", "QAM16", "QAM64", "PAM4"};
  return names;
}

ModulationFormat modulation_format(const std::string& name) {
  if (name == "BPSK") return {name, {Complex(1, 0), Complex(-1, 0)}};
  if (name == "QPSK") return {name, psk(4, std::numbers::pi / 4)};
  if (name == "PSK8") return {name, psk(8, 0.0)};
  if (name == "QAM16") return {name, square_qam(4)};
  if (name == "QAM64") return {name, square_qam(8)};
  if (name == "PAM4") return {name, normalized({{-3, 0}, {-1, 0}, {1, 0}, {3, 0}})};
  throw SignalError("unknown modulation format '" + name + "'");
}

void DatasetSpec::validate() const {
  if (formats.empty()) throw SignalError("dataset needs at least one format");
  for (const std::string& f : formats) modulation_format(f);
  if (frame_length == 0) throw SignalError("frame_length must be positive");
  if (frames_per_cell == 0) throw SignalError("frames_per_cell must be positive");
  if (snr_db.empty()) throw SignalError("dataset needs at least one SNR");
  if (sps == 0) throw SignalError("sps must be positive");
  if (!(rolloff > 0.0 && rolloff <= 1.0)) throw SignalError("rolloff must lie in (0, 1]");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw SignalError("split_fraction must lie in (0, 1)");
  }
}

std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols) {
  const std::size_t len = span_symbols * sps + 1;
  const double beta = rolloff;
  const double pi = std::numbers::pi;
  std::vector<double> h(len);
  for (std::size_t n = 0; n < len; ++n) {
    const double t = (static_cast<double>(n) - static_cast<double>(len - 1) / 2.0) /
                     static_cast<double>(sps);
    if (std::abs(t) < 1e-12) {
      h[n] = 1.0 - beta + 4.0 * beta / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
      h[n] = beta / std::sqrt(2.0) *
             ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) +
              (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      const double x = 4.0 * beta * t;
      h[n] = (std::sin(pi * t * (1.0 - beta)) + x * std::cos(pi * t * (1.0 + beta))) /
             (pi * t * (1.0 - x * x));
    }
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double s = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= s;
  return h;
}

ComplexSignal modulate(const ModulationFormat& format, std::size_t n_symbols, Rng& rng,
                       const DatasetSpec& spec) {
  const std::size_t n = spec.frame_length;
  if (spec.sps == 0 || n == 0) throw SignalError("modulate: sps and frame_length must be positive");
  if (n_symbols * spec.sps < n) {
    throw SignalError("modulate: " + std::to_string(n_symbols) + " symbols at " +
                      std::to_string(spec.sps) + " samples/symbol cannot fill " + std::to_string(n) +
                      " samples");
  }
  std::vector<Complex> symbols(n_symbols);
  for (Complex& s : symbols) s = format.constellation[rng.below(format.order())];

  ComplexSignal out(n);
  if (spec.span_symbols == 0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = symbols[i / spec.sps];
  } else {
    const std::vector<double> taps = rrc_taps(spec.rolloff, spec.sps, spec.span_symbols);
    const std::size_t delay = (taps.size() - 1) / 2;
    // out[i] = sum_m symbols[m] * taps[i + delay - m*sps], zero-stuffed upsampling.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = i + delay;
      Complex acc = 0.0;
      const std::size_t m_hi = std::min(n_symbols - 1, t / spec.sps);
      const std::size_t m_lo = t >= taps.size() - 1 ? (t - (taps.size() - 1) + spec.sps - 1) / spec.sps : 0;
      for (std::size_t m = m_lo; m <= m_hi; ++m) acc += symbols[m] * taps[t - m * spec.sps];
      out[i] = acc;
    }
  }
  if (spec.random_phase) {
    const Complex rot = std::polar(1.0, rng.uniform(0.0, 2.0 * std::numbers::pi));
    for (Complex& v : out) v *= rot;
  }
  const double p = mean_power(out);
  if (p > 0.0) {
    const double s = 1.0 / std::sqrt(p);
    for (Complex& v : out) v *= s;
  }
  return out;
}

double mean_power(std::span<const Complex> s) {
  if (s.empty()) return 0.0;
  double p = 0.0;
  for (const Complex& v : s) p += std::norm(v);
  return p / static_cast<double>(s.size());
}

ComplexSignal awgn(std::span<const Complex> s, double snr_db, Rng& rng, ComplexSignal* noise_out) {
  if (s.empty()) throw SignalError("awgn: empty input");
  ComplexSignal x(s.begin(), s.end());
  if (noise_out) noise_out->assign(s.size(), Complex(0.0, 0.0));
  if (std::isinf(snr_db) && snr_db > 0) return x;
  const double ps = mean_power(s);
  if (!(ps > 0.0)) throw SignalError("awgn: input has zero power");
  const double variance = ps / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(variance / 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double re = sigma * rng.normal();
    const double im = sigma * rng.normal();
    const Complex w(re, im);
    x[i] += w;
    if (noise_out) (*noise_out)[i] = w;
  }
  return x;
}

SignalFrame frame(std::span<const Complex> x, std::size_t length, int label, double snr_db) {
  if (length == 0 || x.size() < length) {
    throw SignalError("frame: need " + std::to_string(length) + " samples, have " +
                      std::to_string(x.size()));
  }
  SignalFrame f;
  f.iq = Tensor(Shape{2, length});
  for (std::size_t i = 0; i < length; ++i) {
    f.iq[i] = x[i].real();
    f.iq[length + i] = x[i].imag();
  }
  f.label = label;
  f.snr_db = snr_db;
  return f;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;
  data.class_names = spec.formats;
  const std::size_t n_symbols = (spec.frame_length + spec.sps - 1) / spec.sps + spec.span_symbols;
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.split_fraction * static_cast<double>(spec.frames_per_cell) + 1e-9));
  for (std::size_t fi = 0; fi < spec.formats.size(); ++fi) {
    const ModulationFormat format = modulation_format(spec.formats[fi]);
    for (std::size_t si = 0; si < spec.snr_db.size(); ++si) {
      for (std::size_t k = 0; k < spec.frames_per_cell; ++k) {
        Rng rng(mix_seed(mix_seed(mix_seed(spec.seed, fi), si), k));
        const ComplexSignal s = modulate(format, n_symbols, rng, spec);
        const ComplexSignal x = awgn(s, spec.snr_db[si], rng);
        SignalFrame f = frame(x, spec.frame_length, static_cast<int>(fi), spec.snr_db[si]);
        for (double& v : f.iq.data()) v = static_cast<double>(static_cast<float>(v));
        (k < n_train ? data.train : data.test).push_back(std::move(f));
      }
    }
  }
  return data;
}

Dataset select_snr(const Dataset& data, std::span<const double> snr_db) {
  Dataset out;
  out.spec = data.spec;
  out.spec.snr_db.assign(snr_db.begin(), snr_db.end());
  out.class_names = data.class_names;
  auto keep = [&](const SignalFrame& f) {
    return std::find(snr_db.begin(), snr_db.end(), f.snr_db) != snr_db.end();
  };
  for (const SignalFrame& f : data.train) {
    if (keep(f)) out.train.push_back(f);
  }
  for (const SignalFrame& f : data.test) {
    if (keep(f)) out.test.push_back(f);
  }
  return out;
}

Tensor stack_frames(std::span<const SignalFrame* const> frames) {
  if (frames.empty()) throw SignalError("stack_frames: no frames");
  const std::size_t n = frames.front()->iq.dim(1);
  Tensor batch(Shape{frames.size(), 2, 1, n});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const Tensor& iq = frames[b]->iq;
    if (iq.shape() != Shape{2, n}) throw SignalError("stack_frames: frames differ in length");
    std::copy(iq.data().begin(), iq.data().end(), batch.ptr() + b * 2 * n);
  }
  return batch;
}

Tensor stack_frames(std::span<const SignalFrame> frames) {
  std::vector<const SignalFrame*> ptrs;
  ptrs.reserve(frames.size());
  for (const SignalFrame& f : frames) ptrs.push_back(&f);
  return stack_frames(std::span<const SignalFrame* const>(ptrs));
}

}  // namespace invo
