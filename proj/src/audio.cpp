#include "hns/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <vector>

#include "hns/common.hpp"

namespace hns {

namespace {

constexpr double kPi = std::numbers::pi;

struct ByteReader {
  std::ifstream f;

  explicit ByteReader(const std::string& path) : f(path, std::ios::binary) {}

  bool read_exact(void* dst, std::size_t n) {
    f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(f.gcount()) == n;
  }

  template <typename T>
  bool read_le(T& out) {
    unsigned char buf[sizeof(T)];
    if (!read_exact(buf, sizeof(T))) return false;
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(buf[i]) << (8 * i);
    std::memcpy(&out, &v, sizeof(T));
    return true;
  }

  bool skip(std::uint32_t n) {
    f.seekg(n, std::ios::cur);
    return bool(f);
  }
};

template <typename T>
void append_le(std::vector<unsigned char>& out, T v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

double bessel_i0(double x) {
  // Series expansion; converges quickly for the beta values used here.
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (double(k) * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

}  // namespace

double AudioClip::rms() const {
  if (samples.size() == 0) return 0.0;
  return std::sqrt(samples.square().mean());
}

AudioClip read_wav(const std::string& path) {
  ByteReader r(path);
  if (!r.f) throw IoError("cannot open WAV file: " + path);

  char tag[4];
  std::uint32_t riff_size = 0;
  if (!r.read_exact(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("malformed RIFF header in " + path);
  if (!r.read_le(riff_size)) throw FormatError("truncated RIFF header in " + path);
  if (!r.read_exact(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("not a WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<unsigned char> data;
  bool have_data = false;

  while (r.read_exact(tag, 4)) {
    std::uint32_t chunk_size = 0;
    if (!r.read_le(chunk_size)) throw FormatError("truncated chunk header in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("fmt chunk too small in " + path);
      std::uint32_t byte_rate = 0;
      std::uint16_t block_align = 0;
      if (!r.read_le(format) || !r.read_le(channels) || !r.read_le(rate) ||
          !r.read_le(byte_rate) || !r.read_le(block_align) || !r.read_le(bits))
        throw FormatError("truncated fmt chunk in " + path);
      if (chunk_size > 16 && !r.skip(chunk_size - 16))
        throw FormatError("truncated fmt chunk in " + path);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      if (chunk_size > 0 && !r.read_exact(data.data(), chunk_size))
        throw FormatError("truncated data chunk in " + path);
      have_data = true;
    } else {
      if (!r.skip(chunk_size)) break;
    }
    if ((chunk_size & 1) != 0) r.skip(1);  // chunks are word-aligned
  }

  if (!have_fmt || !have_data) throw FormatError("missing fmt/data chunk in " + path);
  if (channels < 1 || rate == 0) throw FormatError("invalid fmt fields in " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool float32 = (format == 3 && bits == 32);
  if (!pcm16 && !float32)
    throw UnsupportedError("unsupported WAV encoding (format " + std::to_string(format) +
                           ", " + std::to_string(bits) + " bits) in " + path);

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n_frames = frame_bytes == 0 ? 0 : data.size() / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(static_cast<Eigen::Index>(n_frames));
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data.data() + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        std::int16_t v = static_cast<std::int16_t>(std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8));
        acc += double(v) / 32768.0;
      } else {
        std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                          (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
        float v;
        std::memcpy(&v, &u, 4);
        acc += double(v);
      }
    }
    clip.samples[static_cast<Eigen::Index>(i)] = acc / channels;
  }
  if (!clip.samples.isFinite().all()) throw FormatError("non-finite samples in " + path);
  return clip;
}

void write_wav(const AudioClip& clip, const std::string& path) {
  if (clip.sample_rate <= 0) throw InvalidArgument("write_wav: sample_rate must be positive");

  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_le<std::uint32_t>(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, 1);  // PCM
  append_le<std::uint16_t>(out, 1);  // mono
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  append_le<std::uint16_t>(out, 2);
  append_le<std::uint16_t>(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_le<std::uint32_t>(out, 2 * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    long q = std::lround(clip.samples[static_cast<Eigen::Index>(i)] * 32768.0);
    q = std::min(32767L, std::max(-32768L, q));
    append_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw InvalidArgument("resample: target rate must be positive");
  if (clip.sample_rate <= 0) throw InvalidArgument("resample: clip has no sample rate");
  if (target_rate == clip.sample_rate) return clip;

  constexpr int kTapsPerSide = 32;
  constexpr double kBeta = 10.0;
  const double ratio = double(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  const double i0b = bessel_i0(kBeta);

  auto kernel = [&](double t) {
    // t in input-sample units
    if (std::abs(t) > kTapsPerSide) return 0.0;
    const double u = t / kTapsPerSide;
    const double win = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
    const double arg = kPi * t * cutoff;
    const double s = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
    return cutoff * s * win;
  };

  const Eigen::Index in_len = clip.samples.size();
  const Eigen::Index out_len = static_cast<Eigen::Index>(std::llround(double(in_len) * target_rate / clip.sample_rate));

  // Polyphase: distinct fractional positions repeat with period
  // target / gcd(source, target).
  const long long g = std::gcd((long long)clip.sample_rate, (long long)target_rate);
  const long long phases = target_rate / g;
  const long long step_num = clip.sample_rate / g;  // input advance per output sample, in 1/phases units

  Eigen::ArrayXXd table;
  const bool use_table = phases <= 8192;
  if (use_table) {
    table.resize(phases, 2 * kTapsPerSide + 1);
    for (long long p = 0; p < phases; ++p) {
      const double frac = double(p) / phases;
      for (int j = -kTapsPerSide; j <= kTapsPerSide; ++j)
        table(p, j + kTapsPerSide) = kernel(double(j) - frac);
    }
  }

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const long long pos_units = i * step_num;  // position in 1/phases of an input sample
    const long long base = pos_units / phases;
    const long long phase = pos_units % phases;
    const double frac = double(phase) / phases;
    double acc = 0.0;
    for (int j = -kTapsPerSide; j <= kTapsPerSide; ++j) {
      const Eigen::Index s = base + j;
      if (s < 0 || s >= in_len) continue;
      const double w = use_table ? table(phase, j + kTapsPerSide) : kernel(double(j) - frac);
      acc += clip.samples[s] * w;
    }
    out.samples[i] = acc;
  }
  return out;
}

}  // namespace hns
