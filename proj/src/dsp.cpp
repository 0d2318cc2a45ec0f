#include "hns/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <numbers>
#include <vector>

#include "hns/common.hpp"

namespace hns::dsp {

namespace {
constexpr double kPi = std::numbers::pi;
}

ArrayXcd rfft(const ArrayXd& x) {
  const int n = static_cast<int>(x.size());
  if (n < 1) throw InvalidArgument("rfft: empty input");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  return Eigen::Map<const ArrayXcd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

ArrayXd irfft(const ArrayXcd& spec, int n) {
  if (n < 1) throw InvalidArgument("irfft: output length must be positive");
  if (spec.size() != n / 2 + 1)
    throw InvalidArgument("irfft: spectrum size does not match output length");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> in(spec.data(), spec.data() + spec.size());
  std::vector<double> out;
  fft.inv(out, in, n);
  return Eigen::Map<const ArrayXd>(out.data(), n);
}

ArrayXd hann_periodic(int n) {
  ArrayXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

ArrayXd hann_symmetric(int n) {
  ArrayXd w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

ArrayXd segment_centered(const ArrayXd& x, Eigen::Index center, int size) {
  ArrayXd seg = ArrayXd::Zero(size);
  const Eigen::Index start = center - size / 2;
  for (int i = 0; i < size; ++i) {
    const Eigen::Index s = start + i;
    if (s >= 0 && s < x.size()) seg[i] = x[s];
  }
  return seg;
}

}  // namespace hns::dsp
