#pragma once

#include <vector>

#include "hns/audio.hpp"
#include "hns/tensor.hpp"

namespace hns {

struct LossConfig {
  std::vector<int> fft_sizes = {2048, 1024, 512, 256, 128, 64};
  double overlap = 0.75;
  double log_weight = 1.0;
  double eps = 1e-7;
};

void validate(const LossConfig& cfg);

// Sum over FFT sizes of mean-L1 distance between linear magnitudes plus
// log_weight times mean-L1 between log magnitudes. Sizes longer than the
// input are skipped.
ad::Tensor multiscale_spectral_loss(const ad::Tensor& pred, const ad::Tensor& target,
                                    const LossConfig& cfg);
double multiscale_spectral_loss(const AudioClip& pred, const AudioClip& target,
                                const LossConfig& cfg);

}  // namespace hns
