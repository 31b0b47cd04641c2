#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace toolwear {

// Real-input FFT of a fixed length backed by FFTW. Plans are created once
// and may be executed concurrently from several threads.
class RealFft {
 public:
  explicit RealFft(std::size_t length);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t length() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // Unnormalized forward transform: out[k] = sum_n in[n] exp(-2 pi i k n / N).
  // in.size() == length(), out.size() == bins(). `in` is not modified.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  // Unnormalized inverse of a Hermitian half spectrum; `in` is clobbered.
  void inverse(std::span<std::complex<double>> in, std::span<double> out) const;

 private:
  struct Plans;
  std::size_t n_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace toolwear
