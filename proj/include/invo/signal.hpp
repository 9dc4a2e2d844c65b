#pragma once

// Synthetic labelled I/Q frames: random symbols from a digital constellation,
// root-raised-cosine pulse shaping, a random carrier phase, and additive
// white Gaussian noise at a per-sample SNR.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invo/tensor.hpp"

namespace invo {

using Complex = std::complex<double>;
using ComplexSignal = std::vector<Complex>;

class SignalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModulationFormat {
  std::string name;
  std::vector<Complex> constellation;  // unit average energy

  std::size_t order() const { return constellation.size(); }
};

// BPSK, QPSK, PSK8, QAM16, QAM64, PAM4.
const std::vector<std::string>& known_formats();
ModulationFormat modulation_format(const std::string& name);

struct DatasetSpec {
  std::vector<std::string> formats{"BPSK", "QPSK", "PSK8", "QAM16", "QAM64", "PAM4"};
  std::size_t frame_length = 256;
  std::size_t frames_per_cell = 400;  // per (format, SNR)
  std::vector<double> snr_db{-10, -6, -2, 0, 2, 6, 10};
  std::size_t sps = 8;
  double rolloff = 0.35;
  std::size_t span_symbols = 8;  // 0 disables pulse shaping (rectangular hold)
  bool random_phase = true;
  std::uint64_t seed = 1;
  double split_fraction = 0.8;

  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

// Unit-energy root-raised-cosine taps, span_symbols * sps + 1 long.
std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols);

// i.i.d. uniform symbols, upsampled by spec.sps, pulse shaped, rotated by a
// random carrier phase (if enabled), cut to spec.frame_length samples past
// the filter delay, and normalized to unit average power.
ComplexSignal modulate(const ModulationFormat& format, std::size_t n_symbols, Rng& rng,
                       const DatasetSpec& spec);

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

double mean_power(std::span<const Complex> s);

// x = s + w with complex Gaussian w of total variance P_s / 10^(snr/10),
// split equally between real and imaginary parts. snr_db = +inf adds nothing.
// The noise realisation is written to `noise_out` when given.
ComplexSignal awgn(std::span<const Complex> s, double snr_db, Rng& rng,
                   ComplexSignal* noise_out = nullptr);

struct SignalFrame {
  Tensor iq;  // 2 x N: row 0 real part, row 1 imaginary part
  int label = 0;
  double snr_db = 0.0;
};

// First `length` samples of x as a 2 x length I/Q frame.
SignalFrame frame(std::span<const Complex> x, std::size_t length, int label, double snr_db);

struct Dataset {
  DatasetSpec spec;
  std::vector<std::string> class_names;
  std::vector<SignalFrame> train;
  std::vector<SignalFrame> test;
};

// Balanced over (format x SNR); each cell is split train/test with
// spec.split_fraction. Every frame draws from its own sub-seed derived from
// (seed, format, SNR index, frame index), so the result is independent of
// generation order. Samples are rounded to single precision, the on-disk
// precision.
Dataset generate_dataset(const DatasetSpec& spec);

// Keeps only frames whose SNR is in `snr_db` (exact match).
Dataset select_snr(const Dataset& data, std::span<const double> snr_db);

// Directory layout: index.txt (text) + frames.bin (little-endian float32,
// each frame 2 x N row-major, in index order).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Stacks frames into a B x 2 x 1 x N batch.
Tensor stack_frames(std::span<const SignalFrame> frames);
Tensor stack_frames(std::span<const SignalFrame* const> frames);

}  // namespace invo
