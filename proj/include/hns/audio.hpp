#pragma once

#include <Eigen/Dense>
#include <string>

namespace hns {

// Mono audio buffer. Samples are nominally in [-1, 1]; the 16-bit writer
// clamps anything outside.
struct AudioClip {
  Eigen::ArrayXd samples;
  int sample_rate = 0;

  Eigen::Index length() const { return samples.size(); }
  double duration() const { return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0; }
  double rms() const;
};

// Reads a PCM WAV file (16-bit int or 32-bit IEEE float, little-endian).
// Multi-channel input is averaged down to mono.
//
// Throws IoError if the file cannot be opened, FormatError on a broken RIFF
// structure, UnsupportedError for encodings other than the two above.
AudioClip read_wav(const std::string& path);

// Writes a mono 16-bit PCM WAV. Out-of-range samples are clamped.
void write_wav(const AudioClip& clip, const std::string& path);

// Band-limited sample-rate conversion (Kaiser-windowed sinc, 32 taps per
// side, polyphase). Equal rates return the input unchanged. Output length is
// round(len * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace hns
