#include "toolwear/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "toolwear/error.hpp"

namespace toolwear {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct RealFft::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

RealFft::RealFft(std::size_t length) : n_(length), plans_(std::make_unique<Plans>()) {
  if (length < 2) throw Error(ErrorKind::invalid_argument, "FFT length must be at least 2");
  std::vector<double> real(n_);
  std::vector<std::complex<double>> spec(bins());
  auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
  std::lock_guard lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real.data(), cplx, flags);
  plans_->c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n_), cplx, real.data(), flags);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->r2c);
  fftw_destroy_plan(plans_->c2r);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != bins())
    throw Error(ErrorKind::dimension, "FFT buffer size mismatch");
  // r2c transforms do not overwrite their input for 1-D out-of-place plans.
  fftw_execute_dft_r2c(plans_->r2c, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<std::complex<double>> in, std::span<double> out) const {
  if (out.size() != n_ || in.size() != bins())
    throw Error(ErrorKind::dimension, "FFT buffer size mismatch");
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(in.data()), out.data());
}

}  // namespace toolwear
