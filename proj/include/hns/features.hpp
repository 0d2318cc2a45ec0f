#pragma once

#include <string>

#include <Eigen/Dense>

#include "hns/audio.hpp"

namespace hns {

struct PitchConfig {
  double f0_min = 60.0;
  double f0_max = 2000.0;
  double threshold = 0.15;
  double frame_rate = 250.0;
  int window = 1024;  // YIN integration window (analysis segment is 2x)
};

struct LoudnessConfig {
  double frame_rate = 250.0;
  int fft_size = 1024;
  double floor_db = -80.0;
};

struct MfccConfig {
  double frame_rate = 250.0;
  int fft_size = 1024;
  int n_mels = 128;
  int n_mfcc = 30;
};

struct FeatureTrack {
  Eigen::ArrayXd f0;          // Hz, 0 where unvoiced
  Eigen::ArrayXd loudness;    // dB
  Eigen::ArrayXd confidence;  // [0, 1]
  double frame_rate = 0.0;
};

struct MfccTrack {
  Eigen::ArrayXXd coefficients;  // [frames x n_mfcc]
  double frame_rate = 0.0;
};

struct HarmonicTrack {
  Eigen::ArrayXXd amplitudes;  // [frames x K], rows unit-sum or zero
  double frame_rate = 0.0;
};

FeatureTrack extract_pitch(const AudioClip& clip, const PitchConfig& cfg);
FeatureTrack extract_loudness(const AudioClip& clip, const LoudnessConfig& cfg);
MfccTrack extract_mfcc(const AudioClip& clip, const MfccConfig& cfg);
HarmonicTrack extract_input_harmonics(const AudioClip& clip, const FeatureTrack& track, int K);

// A-weighting gain in dB at frequency f (0 dB at 1 kHz by convention).
double a_weight_db(double f);

// Last voiced f0 held forward; 440 Hz before the first voiced frame.
Eigen::ArrayXd held_f0(const Eigen::ArrayXd& f0);

// Everything the pipeline extracts from one clip, as written to a .feat dump.
struct FeatureSet {
  Eigen::ArrayXd f0, loudness, confidence;
  Eigen::ArrayXXd mfcc;       // [frames x n_mfcc]
  Eigen::ArrayXXd harmonics;  // [frames x K]
  double frame_rate = 0.0;
};

struct FeatureExtractConfig {
  PitchConfig pitch;
  LoudnessConfig loudness;
  MfccConfig mfcc;
  int K = 64;
};

FeatureSet extract_features(const AudioClip& clip, const FeatureExtractConfig& cfg);

void write_features(const std::string& path, const FeatureSet& set);
FeatureSet read_features(const std::string& path);

}  // namespace hns
