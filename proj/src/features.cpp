#include "hns/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "hns/common.hpp"
#include "hns/container.hpp"
#include "hns/dsp.hpp"

namespace hns {

namespace {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;

int hop_of(double sample_rate, double frame_rate) {
  const double hop = sample_rate / frame_rate;
  const int h = int(std::llround(hop));
  if (h < 1 || std::abs(hop - h) > 1e-9)
    throw InvalidArgument("sample_rate / frame_rate must be a positive integer hop");
  return h;
}

// Zero-padded segment [start, start + size) of x.
ArrayXd segment_from(const ArrayXd& x, Eigen::Index start, Eigen::Index size) {
  ArrayXd out = ArrayXd::Zero(size);
  const Eigen::Index lo = std::max<Eigen::Index>(start, 0);
  const Eigen::Index hi = std::min<Eigen::Index>(start + size, x.size());
  if (hi > lo) out.segment(lo - start, hi - lo) = x.segment(lo, hi - lo);
  return out;
}

struct YinResult {
  double f0 = 0.0;
  double confidence = 0.0;
};

YinResult yin_frame(const ArrayXd& seg, int W, int tau_min, int tau_max, double threshold,
                    double fs, double f0_min, double f0_max) {
  YinResult r;
  const double rms = std::sqrt(seg.head(W).square().mean());
  if (rms < 1e-4) return r;  // silence gate

  // Difference function and cumulative-mean normalization.
  ArrayXd d(tau_max + 1);
  d[0] = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau)
    d[tau] = (seg.head(W) - seg.segment(tau, W)).square().sum();
  ArrayXd dn(tau_max + 1);
  dn[0] = 1.0;
  double cum = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    cum += d[tau];
    dn[tau] = cum > 0.0 ? d[tau] * tau / cum : 1.0;
  }

  // First dip under the threshold, descended to its local minimum; otherwise
  // the global minimum (kept only for the confidence value).
  int best = -1;
  for (int tau = tau_min; tau <= tau_max; ++tau) {
    if (dn[tau] < threshold) {
      while (tau + 1 <= tau_max && dn[tau + 1] < dn[tau]) ++tau;
      best = tau;
      break;
    }
  }
  const bool voiced = best >= 0;
  if (!voiced) {
    int arg = tau_min;
    for (int tau = tau_min; tau <= tau_max; ++tau)
      if (dn[tau] < dn[arg]) arg = tau;
    best = arg;
  }
  r.confidence = std::clamp(1.0 - dn[best], 0.0, 1.0);
  if (!voiced) return r;

  // Parabolic interpolation around the dip.
  double tau_est = best;
  if (best > 1 && best < tau_max) {
    const double dm = dn[best - 1], d0 = dn[best], dp = dn[best + 1];
    const double denom = dm - 2.0 * d0 + dp;
    if (std::abs(denom) > 1e-12) {
      const double delta = std::clamp(0.5 * (dm - dp) / denom, -1.0, 1.0);
      tau_est = best + delta;
    }
  }
  const double f0 = fs / tau_est;
  if (f0 < f0_min || f0 > f0_max) {
    r.confidence = 0.0;
    return r;
  }
  r.f0 = f0;
  return r;
}

// HTK mel scale.
double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

double a_weight_db(double f) {
  if (f <= 0.0) return -200.0;
  const double f2 = f * f;
  const double c1 = 20.6 * 20.6, c2 = 107.7 * 107.7, c3 = 737.9 * 737.9, c4 = 12194.0 * 12194.0;
  const double ra = c4 * f2 * f2 / ((f2 + c1) * std::sqrt((f2 + c2) * (f2 + c3)) * (f2 + c4));
  return 20.0 * std::log10(ra) + 2.00;
}

Eigen::ArrayXd held_f0(const Eigen::ArrayXd& f0) {
  ArrayXd out(f0.size());
  double held = 440.0;
  for (Eigen::Index i = 0; i < f0.size(); ++i) {
    if (f0[i] > 0.0) held = f0[i];
    out[i] = held;
  }
  return out;
}

FeatureTrack extract_pitch(const AudioClip& clip, const PitchConfig& cfg) {
  if (clip.sample_rate <= 0) throw InvalidArgument("clip has no sample rate");
  const int W = cfg.window;
  if (clip.length() < W) throw InvalidArgument("clip shorter than one analysis window");
  const double fs = clip.sample_rate;
  const int hop = hop_of(fs, cfg.frame_rate);
  const int tau_max = std::min<int>(W, int(fs / cfg.f0_min));
  const int tau_min = std::max(2, int(fs / cfg.f0_max));
  if (tau_min >= tau_max) throw InvalidArgument("pitch range too narrow for this sample rate");

  const Eigen::Index T = dsp::frame_count(clip.length(), hop);
  FeatureTrack track;
  track.frame_rate = cfg.frame_rate;
  track.f0 = ArrayXd::Zero(T);
  track.loudness = ArrayXd::Zero(T);
  track.confidence = ArrayXd::Zero(T);
  const Eigen::Index seg_len = W + tau_max;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index center = t * hop;
    ArrayXd seg = segment_from(clip.samples, center - W / 2, seg_len);
    const YinResult r =
        yin_frame(seg, W, tau_min, tau_max, cfg.threshold, fs, cfg.f0_min, cfg.f0_max);
    track.f0[t] = r.f0;
    track.confidence[t] = r.confidence;
  }
  return track;
}

FeatureTrack extract_loudness(const AudioClip& clip, const LoudnessConfig& cfg) {
  if (clip.sample_rate <= 0) throw InvalidArgument("clip has no sample rate");
  const double fs = clip.sample_rate;
  const int hop = hop_of(fs, cfg.frame_rate);
  const int N = cfg.fft_size;
  const Eigen::Index T = dsp::frame_count(clip.length(), hop);

  const ArrayXd window = dsp::hann_periodic(N);
  // Mean-power calibration (Parseval): a full-scale sine reads -3.01 dB.
  const double norm = double(N) * window.square().sum();
  const Eigen::Index n_bins = N / 2 + 1;
  ArrayXd weight(n_bins);
  for (Eigen::Index k = 0; k < n_bins; ++k) {
    const double f = double(k) * fs / N;
    const double coef = (k == 0 || k == N / 2) ? 1.0 : 2.0;
    weight[k] = coef * std::pow(10.0, a_weight_db(f) / 10.0) / norm;
  }

  FeatureTrack track;
  track.frame_rate = cfg.frame_rate;
  track.f0 = ArrayXd::Zero(T);
  track.loudness = ArrayXd::Zero(T);
  track.confidence = ArrayXd::Zero(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    ArrayXd seg = dsp::segment_centered(clip.samples, t * hop, N) * window;
    const Eigen::ArrayXcd spec = dsp::rfft(seg);
    const double power = (weight * spec.abs2()).sum();
    track.loudness[t] = std::max(cfg.floor_db, 10.0 * std::log10(power + 1e-20));
  }
  return track;
}

MfccTrack extract_mfcc(const AudioClip& clip, const MfccConfig& cfg) {
  if (clip.sample_rate <= 0) throw InvalidArgument("clip has no sample rate");
  const double fs = clip.sample_rate;
  const int hop = hop_of(fs, cfg.frame_rate);
  const int N = cfg.fft_size;
  const int M = cfg.n_mels;
  const Eigen::Index n_bins = N / 2 + 1;
  const Eigen::Index T = dsp::frame_count(clip.length(), hop);

  // Triangular mel filterbank over FFT bin frequencies.
  ArrayXd mel_pts(M + 2);
  const double mel_hi = hz_to_mel(fs / 2.0);
  for (int i = 0; i < M + 2; ++i) mel_pts[i] = mel_hi * double(i) / (M + 1);
  ArrayXd hz_pts = mel_pts.unaryExpr([](double m) { return mel_to_hz(m); });
  ArrayXXd bank = ArrayXXd::Zero(M, n_bins);
  for (int m = 0; m < M; ++m) {
    const double lo = hz_pts[m], mid = hz_pts[m + 1], hi = hz_pts[m + 2];
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      const double f = double(k) * fs / N;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      bank(m, k) = w;
    }
  }

  // Orthonormal DCT-II, first n_mfcc rows.
  ArrayXXd dct(cfg.n_mfcc, M);
  for (int j = 0; j < cfg.n_mfcc; ++j) {
    const double scale = std::sqrt((j == 0 ? 1.0 : 2.0) / M);
    for (int m = 0; m < M; ++m)
      dct(j, m) = scale * std::cos(std::numbers::pi * j * (m + 0.5) / M);
  }

  const ArrayXd window = dsp::hann_periodic(N);
  MfccTrack out;
  out.frame_rate = cfg.frame_rate;
  out.coefficients.resize(T, cfg.n_mfcc);
  for (Eigen::Index t = 0; t < T; ++t) {
    ArrayXd seg = dsp::segment_centered(clip.samples, t * hop, N) * window;
    const ArrayXd mag = dsp::rfft(seg).abs();
    const ArrayXd energies = (bank.matrix() * mag.matrix()).array();
    const ArrayXd log_e = (energies + 1e-10).log();
    out.coefficients.row(t) = (dct.matrix() * log_e.matrix()).array().transpose();
  }
  return out;
}

HarmonicTrack extract_input_harmonics(const AudioClip& clip, const FeatureTrack& track, int K) {
  if (K < 1) throw InvalidArgument("K must be >= 1");
  if (clip.sample_rate <= 0) throw InvalidArgument("clip has no sample rate");
  const double fs = clip.sample_rate;
  const int hop = hop_of(fs, track.frame_rate);
  const Eigen::Index T = dsp::frame_count(clip.length(), hop);
  if (track.f0.size() != T)
    throw InvalidArgument("frame count mismatch between clip framing and feature track");

  const int N = 2048;
  const ArrayXd window = dsp::hann_periodic(N);
  const double nyquist = fs / 2.0;

  HarmonicTrack out;
  out.frame_rate = track.frame_rate;
  out.amplitudes = ArrayXXd::Zero(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double f0 = track.f0[t];
    if (f0 <= 0.0) continue;
    ArrayXd seg = dsp::segment_centered(clip.samples, t * hop, N) * window;
    const ArrayXd mag = dsp::rfft(seg).abs();
    for (int k = 1; k <= K; ++k) {
      const double fk = k * f0;
      if (fk >= nyquist) break;
      const double bin = fk * N / fs;
      const Eigen::Index i0 = Eigen::Index(bin);
      const double frac = bin - double(i0);
      double v = mag[i0];
      if (i0 + 1 < mag.size()) v = mag[i0] * (1.0 - frac) + mag[i0 + 1] * frac;
      out.amplitudes(t, k - 1) = v;
    }
    const double s = out.amplitudes.row(t).sum();
    if (s > 0.0) out.amplitudes.row(t) /= s;
  }
  return out;
}

FeatureSet extract_features(const AudioClip& clip, const FeatureExtractConfig& cfg) {
  FeatureTrack pitch = extract_pitch(clip, cfg.pitch);
  FeatureTrack loud = extract_loudness(clip, cfg.loudness);
  MfccTrack mfcc = extract_mfcc(clip, cfg.mfcc);
  HarmonicTrack harm = extract_input_harmonics(clip, pitch, cfg.K);

  FeatureSet set;
  set.f0 = std::move(pitch.f0);
  set.loudness = std::move(loud.loudness);
  set.confidence = std::move(pitch.confidence);
  set.mfcc = std::move(mfcc.coefficients);
  set.harmonics = std::move(harm.amplitudes);
  set.frame_rate = cfg.pitch.frame_rate;
  return set;
}

namespace {
constexpr char kFeatMagic[8] = {'H', 'N', 'S', 'F', 'E', 'A', 'T', '\0'};
constexpr std::uint32_t kFeatVersion = 1;
}  // namespace

void write_features(const std::string& path, const FeatureSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  bin::write_magic(os, kFeatMagic);
  bin::write_u32(os, kFeatVersion);
  bin::write_f64(os, set.frame_rate);
  std::vector<bin::NamedArray> arrays;
  arrays.push_back(bin::NamedArray::from("f0", set.f0));
  arrays.push_back(bin::NamedArray::from("loudness", set.loudness));
  arrays.push_back(bin::NamedArray::from("confidence", set.confidence));
  arrays.push_back(bin::NamedArray::from("mfcc", set.mfcc));
  arrays.push_back(bin::NamedArray::from("harmonics", set.harmonics));
  bin::write_named_arrays(os, arrays);
  if (!os) throw IoError("write failed: " + path);
}

FeatureSet read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  if (!bin::check_magic(is, kFeatMagic)) throw FormatError("not a feature dump: " + path);
  const std::uint32_t version = bin::read_u32(is);
  if (version != kFeatVersion)
    throw UnsupportedError("unsupported feature dump version " + std::to_string(version));
  FeatureSet set;
  set.frame_rate = bin::read_f64(is);
  const auto arrays = bin::read_named_arrays(is);
  set.f0 = bin::find_array(arrays, "f0").to_vector();
  set.loudness = bin::find_array(arrays, "loudness").to_vector();
  set.confidence = bin::find_array(arrays, "confidence").to_vector();
  set.mfcc = bin::find_array(arrays, "mfcc").to_matrix();
  set.harmonics = bin::find_array(arrays, "harmonics").to_matrix();
  if (set.f0.size() != set.loudness.size() || set.f0.size() != set.confidence.size() ||
      set.f0.size() != set.mfcc.rows() || set.f0.size() != set.harmonics.rows())
    throw FormatError("feature dump arrays disagree on frame count: " + path);
  return set;
}

}  // namespace hns
