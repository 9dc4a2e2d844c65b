#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "invo/signal.hpp"

using namespace invo;

TEST_CASE("constellations have unit average energy and the right order") {
  const std::map<std::string, std::size_t> orders{{"BPSK", 2}, {"QPSK", 4}, {"PSK8", 8}, {"QAM16", 16}, {"QAM64", 64}, {"PAM4", 4}};
  for (const std::string& name : known_formats()) {
    const ModulationFormat f = modulation_format(name);
    CHECK(f.order() == orders.at(name));
    double e = 0;
    for (const Complex& p : f.constellation) e += std::norm(p);
    CHECK(std::abs(e / static_cast<double>(f.order()) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(modulation_format("AM-DSB"), SignalError);
}

TEST_CASE("QPSK points are (+-1 +- j)/sqrt2 and QAM16 is scaled by 1/sqrt10") {
  const double h = 1.0 / std::sqrt(2.0);
  for (const Complex& p : modulation_format("QPSK").constellation) {
    CHECK(std::abs(std::abs(p.real()) - h) < 1e-15);
    CHECK(std::abs(std::abs(p.imag()) - h) < 1e-15);
  }
  std::set<double> levels;
  for (const Complex& p : modulation_format("QAM16").constellation) levels.insert(std::round(p.real() * std::sqrt(10.0)));
  CHECK(levels == std::set<double>{-3, -1, 1, 3});
  double e = 0;
  for (int i : {-3, -1, 1, 3})
    for (int q : {-3, -1, 1, 3}) e += i * i + q * q;
  CHECK(e / 16 == 10);
}

TEST_CASE("RRC taps are symmetric with unit energy") {
  const auto h = rrc_taps(0.35, 8, 8);
  CHECK(h.size() == 65);
  double e = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    e += h[i] * h[i];
    CHECK(std::abs(h[i] - h[h.size() - 1 - i]) < 1e-15);
  }
  CHECK(std::abs(e - 1.0) < 1e-12);
  // rolloff 0.25 with sps 4 puts taps on the t = 1/(4 beta) singularity
  for (double v : rrc_taps(0.25, 4, 6)) CHECK(std::isfinite(v));
}

TEST_CASE("unshaped BPSK at one sample per symbol takes values +-1") {
  DatasetSpec spec;
  spec.sps = 1;
  spec.span_symbols = 0;
  spec.random_phase = false;
  spec.frame_length = 64;
  Rng rng(1);
  const ComplexSignal s = modulate(modulation_format("BPSK"), 64, rng, spec);
  std::size_t plus = 0;
  for (const Complex& v : s) {
    CHECK(std::abs(std::abs(v.real()) - 1.0) < 1e-12);
    CHECK(v.imag() == 0.0);
    plus += v.real() > 0;
  }
  CHECK(plus > 10);
  CHECK(plus < 54);
}

TEST_CASE("modulate output has unit power and rejects too few symbols") {
  DatasetSpec spec;
  Rng rng(2);
  for (const std::string& name : known_formats()) {
    const ComplexSignal s = modulate(modulation_format(name), 40, rng, spec);
    CHECK(s.size() == 256);
    CHECK(std::abs(mean_power(s) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(modulate(modulation_format("QPSK"), 31, rng, spec), SignalError);
}

TEST_CASE("awgn: noiseless sentinel, exact decomposition, errors") {
  Rng rng(3);
  DatasetSpec spec;
  const ComplexSignal s = modulate(modulation_format("QAM16"), 40, rng, spec);
  CHECK(awgn(s, kNoiseless, rng) == s);
  ComplexSignal w;
  const ComplexSignal x = awgn(s, 0.0, rng, &w);
  REQUIRE(w.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(x[i] == s[i] + w[i]);  // received = signal + the reported noise draw, bitwise
    CHECK(std::abs(x[i] - w[i] - s[i]) <= 4e-16 * (std::abs(x[i]) + std::abs(w[i])));
  }
  CHECK_THROWS_AS(awgn(ComplexSignal{}, 0.0, rng), SignalError);
  CHECK_THROWS_AS(awgn(ComplexSignal(8, Complex(0, 0)), 0.0, rng), SignalError);
}

TEST_CASE("awgn noise power follows the requested SNR") {
  Rng rng(4);
  const ComplexSignal s(10000, Complex(std::sqrt(0.5), std::sqrt(0.5)));
  ComplexSignal w;
  awgn(s, 0.0, rng, &w);
  CHECK(std::abs(mean_power(w) - 1.0) < 0.05);
  awgn(s, 10.0, rng, &w);
  const double snr = 10 * std::log10(mean_power(s) / mean_power(w));
  CHECK(std::abs(snr - 10.0) < 0.5);
  // Real and imaginary parts share the variance.
  double re = 0, im = 0;
  for (const Complex& v : w) {
    re += v.real() * v.real();
    im += v.imag() * v.imag();
  }
  CHECK(std::abs(re / im - 1.0) < 0.1);
}

TEST_CASE("higher SNR gives higher measured signal-to-noise on average") {
  DatasetSpec spec;
  Rng rng(5);
  double prev = -1e9;
  for (double snr : spec.snr_db) {
    double acc = 0;
    for (int k = 0; k < 100; ++k) {
      const ComplexSignal s = modulate(modulation_format("PSK8"), 40, rng, spec);
      ComplexSignal w;
      const ComplexSignal x = awgn(s, snr, rng, &w);
      ComplexSignal est(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) est[i] = x[i] - s[i];
      acc += 10 * std::log10(mean_power(s) / mean_power(est));
    }
    CHECK(acc / 100 > prev);
    prev = acc / 100;
  }
}

TEST_CASE("frame layout") {
  const ComplexSignal re{{1, 0}, {2, 0}, {3, 0}};
  SignalFrame f = frame(re, 3, 1, 6.0);
  CHECK(f.iq == Tensor(Shape{2, 3}, {1, 2, 3, 0, 0, 0}));
  CHECK(f.label == 1);
  CHECK(f.snr_db == 6.0);
  const ComplexSignal im{{0, 1}, {0, -1}};
  CHECK(frame(im, 2, 0, 0).iq == Tensor(Shape{2, 2}, {0, 0, 1, -1}));
  ComplexSignal rot;
  for (int n = 0; n < 4; ++n) rot.push_back(std::polar(1.0, std::numbers::pi * n / 2));
  const SignalFrame r = frame(rot, 4, 0, 0);
  for (std::size_t i = 0; i < 8; ++i) {
    const double expected[8] = {1, 0, -1, 0, 0, 1, 0, -1};
    CHECK(std::abs(r.iq[i] - expected[i]) < 1e-15);
  }
  CHECK_THROWS_AS(frame(re, 4, 0, 0), SignalError);
}

TEST_CASE("dataset sizes, split, balance and determinism") {
  DatasetSpec spec;
  spec.snr_db = {-10, -2, 2, 6, 10};
  spec.frames_per_cell = 100;
  spec.frame_length = 64;
  const Dataset d = generate_dataset(spec);
  CHECK(d.train.size() == 2400);
  CHECK(d.test.size() == 600);
  std::map<std::pair<int, double>, std::size_t> train_cells, test_cells;
  for (const SignalFrame& f : d.train) ++train_cells[{f.label, f.snr_db}];
  for (const SignalFrame& f : d.test) ++test_cells[{f.label, f.snr_db}];
  CHECK(train_cells.size() == 30);
  for (const auto& [cell, n] : train_cells) CHECK(n == 80);
  for (const auto& [cell, n] : test_cells) CHECK(n == 20);
  const Dataset again = generate_dataset(spec);
  bool same = again.train.size() == d.train.size();
  for (std::size_t i = 0; same && i < d.train.size(); ++i) same = again.train[i].iq == d.train[i].iq;
  CHECK(same);
  for (const SignalFrame& f : d.train) CHECK(all_finite(f.iq));
}

TEST_CASE("frames are distinct and the test split does not repeat training frames") {
  DatasetSpec spec;
  spec.snr_db = {0};
  spec.frames_per_cell = 170;
  spec.frame_length = 32;
  const Dataset d = generate_dataset(spec);
  std::set<std::vector<double>> seen;
  for (const auto* split : {&d.train, &d.test})
    for (const SignalFrame& f : *split) seen.insert(std::vector<double>(f.iq.data().begin(), f.iq.data().end()));
  CHECK(d.train.size() + d.test.size() == 1020);
  CHECK(seen.size() == 1020);
}

TEST_CASE("changing the seed changes the data") {
  DatasetSpec a;
  a.snr_db = {10};
  a.frames_per_cell = 5;
  DatasetSpec b = a;
  b.seed = 2;
  CHECK_FALSE(generate_dataset(a).train[0].iq == generate_dataset(b).train[0].iq);
}

TEST_CASE("spec validation and SNR selection") {
  DatasetSpec s;
  s.split_fraction = 1.0;
  CHECK_THROWS_AS(generate_dataset(s), SignalError);
  s = DatasetSpec{};
  s.formats = {"QPSK", "FM"};
  CHECK_THROWS_AS(s.validate(), SignalError);
  s = DatasetSpec{};
  s.frames_per_cell = 10;
  s.frame_length = 32;
  const Dataset d = generate_dataset(s);
  const std::vector<double> keep{10, -10};
  const Dataset sel = select_snr(d, keep);
  CHECK(sel.train.size() == 6 * 2 * 8);
  for (const SignalFrame& f : sel.test) CHECK((f.snr_db == 10 || f.snr_db == -10));
  const Tensor batch = stack_frames(std::span<const SignalFrame>(sel.train).subspan(0, 3));
  CHECK(batch.shape() == Shape{3, 2, 1, 32});
  CHECK(batch.at({1, 1, 0, 5}) == sel.train[1].iq.at({1, 5}));
}
