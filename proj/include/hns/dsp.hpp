#pragma once

#include <Eigen/Dense>
#include <complex>

namespace hns::dsp {

using Eigen::ArrayXcd;
using Eigen::ArrayXd;

// One-sided real FFT, unnormalized: X[k] = sum_n x[n] e^{-i 2 pi k n / N},
// k = 0 .. N/2. Mixed-radix, any N >= 1.
ArrayXcd rfft(const ArrayXd& x);

// Inverse of rfft for a length-n real signal (normalized by 1/n).
ArrayXd irfft(const ArrayXcd& spec, int n);

// Hann window. Periodic windows satisfy constant overlap-add at 50% hop;
// symmetric windows taper to zero at both ends.
ArrayXd hann_periodic(int n);
ArrayXd hann_symmetric(int n);

// Extract a zero-padded segment of length `size` centered on sample `center`.
ArrayXd segment_centered(const ArrayXd& x, Eigen::Index center, int size);

// Number of analysis frames for a clip of `len` samples at the given hop.
inline Eigen::Index frame_count(Eigen::Index len, int hop) {
  Eigen::Index n = len / hop;
  return n < 1 ? 1 : n;
}

}  // namespace hns::dsp
