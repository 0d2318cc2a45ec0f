#include "hns/loss.hpp"

#include <algorithm>

#include "hns/common.hpp"

namespace hns {

void validate(const LossConfig& cfg) {
  if (cfg.fft_sizes.empty()) throw InvalidArgument("loss needs at least one fft size");
  for (int n : cfg.fft_sizes)
    if (n < 64 || (n & (n - 1)) != 0)
      throw InvalidArgument("loss fft sizes must be powers of two >= 64");
  if (cfg.overlap < 0.0 || cfg.overlap >= 1.0)
    throw InvalidArgument("loss overlap must be in [0, 1)");
  if (cfg.log_weight < 0.0) throw InvalidArgument("loss log weight must be >= 0");
  if (cfg.eps <= 0.0) throw InvalidArgument("loss eps must be > 0");
}

ad::Tensor multiscale_spectral_loss(const ad::Tensor& pred, const ad::Tensor& target,
                                    const LossConfig& cfg) {
  validate(cfg);
  if (pred.rank() != 1 || target.rank() != 1)
    throw InvalidArgument("loss inputs must be sample vectors");
  if (pred.shape[0] != target.shape[0]) throw InvalidArgument("loss inputs differ in length");
  const Eigen::Index n = pred.shape[0];

  ad::Tensor total = ad::Tensor::scalar(0.0);
  bool any = false;
  for (int size : cfg.fft_sizes) {
    if (size > n) continue;
    any = true;
    const int hop = std::max(1, int(double(size) * (1.0 - cfg.overlap)));
    ad::Tensor sp = ad::stft_magnitude(pred, size, hop);
    ad::Tensor st = ad::stft_magnitude(target, size, hop);
    ad::Tensor lin = ad::mean(ad::abs(ad::sub(sp, st)));
    ad::Tensor lg = ad::mean(
        ad::abs(ad::sub(ad::log(ad::add_scalar(sp, cfg.eps)), ad::log(ad::add_scalar(st, cfg.eps)))));
    total = ad::add(total, ad::add(lin, ad::mul_scalar(lg, cfg.log_weight)));
  }
  if (!any) throw InvalidArgument("input shorter than every loss fft size");
  return total;
}

double multiscale_spectral_loss(const AudioClip& pred, const AudioClip& target,
                                const LossConfig& cfg) {
  if (pred.sample_rate != target.sample_rate)
    throw InvalidArgument("loss inputs have different sample rates");
  return multiscale_spectral_loss(ad::Tensor::vector(pred.samples),
                                  ad::Tensor::vector(target.samples), cfg)
      .item();
}

}  // namespace hns
