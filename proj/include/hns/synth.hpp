#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "hns/audio.hpp"
#include "hns/tensor.hpp"

namespace hns {

struct SynthConfig {
  int sample_rate = 16000;
  int hop = 64;
};

// Per-frame synthesizer controls. Tensors may be taped (training) or plain
// values (inference); all three share the frame count.
struct SynthControls {
  ad::Tensor amplitude;   // [T], linear global amplitude a(n), > 0
  ad::Tensor harmonics;   // [T x K], rows in the probability simplex
  ad::Tensor noise_mags;  // [T x B], linear FIR magnitude samples, >= 0
  double frame_rate = 250.0;

  Eigen::Index frames() const { return amplitude.shape.empty() ? 0 : amplitude.shape[0]; }
};

// Linear interpolation from frame rate to sample rate; frame i lands on
// sample i*hop, the last frame is held to the end.
Eigen::ArrayXXd upsample_controls(const Eigen::ArrayXXd& frames, int hop);

// Differentiable graph paths (materialize [samples x K] intermediates).
ad::Tensor harmonic_synth_tensor(const ad::Tensor& f0_frames, const SynthControls& controls,
                                 const SynthConfig& cfg);
ad::Tensor noise_synth_tensor(const ad::Tensor& noise_mags, const SynthConfig& cfg,
                              std::uint64_t seed);
ad::Tensor render_tensor(const ad::Tensor& f0_frames, const SynthControls& controls,
                         const SynthConfig& cfg, std::uint64_t seed);

// Streaming inference paths: O(K) memory, identical math.
AudioClip harmonic_synth(const Eigen::ArrayXd& f0_frames, const SynthControls& controls,
                         const SynthConfig& cfg);
AudioClip noise_synth(const Eigen::ArrayXXd& noise_mags, const SynthConfig& cfg,
                      std::uint64_t seed);
AudioClip render(const Eigen::ArrayXd& f0_frames, const SynthControls& controls,
                 const SynthConfig& cfg, std::uint64_t seed);

}  // namespace hns
