#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "hns/audio.hpp"
#include "hns/nn.hpp"

namespace hns {

// A_out = (1-p) * A_pred + p * A_in where k*f0 < fs/2, else exactly 0.
// Rows are not renormalized after masking.
Eigen::ArrayXXd interpolate_harmonics(const Eigen::ArrayXXd& a_pred, const Eigen::ArrayXXd& a_in,
                                      double p, const Eigen::ArrayXd& f0_frames, double fs);

// Plain reconstruction / timbre transfer: features -> decoder -> render.
// Latent checkpoints additionally run MFCCs through the encoder.
AudioClip resynthesize(const AudioClip& input, const ModelCheckpoint& ckpt, std::uint64_t seed);

// The vocoding effect: like resynthesize, but the predicted harmonic
// distribution is blended with the input's measured harmonics before
// synthesis. Rejects latent checkpoints.
AudioClip cross_synthesize(const AudioClip& input, const ModelCheckpoint& ckpt, double p,
                           std::uint64_t seed);

}  // namespace hns
