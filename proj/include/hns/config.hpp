#pragma once

#include <cstdint>
#include <string>

#include "hns/features.hpp"
#include "hns/loss.hpp"
#include "hns/train.hpp"

namespace hns {

// Every numeric default of the pipeline lives here; the CLI loads, overrides,
// validates, and can dump the effective values back out.
struct PipelineConfig {
  int sample_rate = 16000;
  double frame_rate = 250.0;
  std::uint64_t seed = 0;
  double p = 0.7;  // xsynth interpolation factor

  int K = 64;  // harmonic count
  int B = 65;  // noise magnitude bins
  int hidden = 128;
  int latent_width = 16;

  PitchConfig pitch;
  LoudnessConfig loudness;
  MfccConfig mfcc;
  LossConfig loss;
  TrainConfig train;

  int hop() const;
};

void validate(const PipelineConfig& cfg);

// Plain `key = value` text with [section] tables; `#` starts a comment.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
std::string dump_config(const PipelineConfig& cfg);
std::uint64_t config_hash(const PipelineConfig& cfg);

}  // namespace hns
