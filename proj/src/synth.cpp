#include "hns/synth.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "hns/common.hpp"
#include "hns/dsp.hpp"

namespace hns {

namespace {

using ad::RowArr2;
using ad::Tensor;
using Eigen::ArrayXd;
using Eigen::ArrayXXd;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_controls(const SynthControls& c) {
  if (c.amplitude.rank() != 1 || c.harmonics.rank() != 2 || c.noise_mags.rank() != 2)
    throw InvalidArgument("synth controls have wrong ranks");
  const Eigen::Index T = c.amplitude.shape[0];
  if (c.harmonics.shape[0] != T || c.noise_mags.shape[0] != T)
    throw InvalidArgument("synth controls disagree on frame count");
}

// Uniform white noise in [-1, 1), seeded; frames overlap by 50%, so the
// stream extends one hop past the rendered length.
std::shared_ptr<ArrayXd> make_noise_stream(Eigen::Index n, std::uint64_t seed) {
  auto stream = std::make_shared<ArrayXd>(n);
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = double(rng() >> 11) * 0x1.0p-53;
    (*stream)[i] = 2.0 * u - 1.0;
  }
  return stream;
}

// Linear-phase FIR from B magnitude samples: zero-phase irfft, circular
// shift to center, symmetric Hann window; odd length 2B-1.
ArrayXd fir_from_magnitudes(const ArrayXd& mags, const ArrayXd& fir_window) {
  const Eigen::Index B = mags.size();
  const Eigen::Index nf = 2 * (B - 1);
  Eigen::ArrayXcd spec = mags.cast<std::complex<double>>();
  ArrayXd kernel = dsp::irfft(spec, int(nf));
  ArrayXd fir(2 * B - 1);
  for (Eigen::Index n = 0; n < 2 * B - 1; ++n)
    fir[n] = fir_window[n] * kernel[(n + nf - (B - 1)) % nf];
  return fir;
}

ArrayXd noise_bank_forward(const RowArr2& mags, int hop, std::uint64_t seed,
                           std::shared_ptr<ArrayXd>* stream_out) {
  const Eigen::Index T = mags.rows();
  const Eigen::Index B = mags.cols();
  if (B < 2) throw InvalidArgument("noise_synth: B must be >= 2");
  if (hop < 1) throw InvalidArgument("noise_synth: hop must be >= 1");
  const Eigen::Index N = T * hop;
  const Eigen::Index F = 2 * hop;

  auto stream = make_noise_stream(N + hop, seed);
  const ArrayXd syn_window = dsp::hann_periodic(int(F));
  const ArrayXd fir_window = dsp::hann_symmetric(int(2 * B - 1));

  ArrayXd out = ArrayXd::Zero(N);
  ArrayXd frame(F);
  for (Eigen::Index t = 0; t < T; ++t) {
    frame = stream->segment(t * hop, F) * syn_window;
    const ArrayXd fir = fir_from_magnitudes(mags.row(t).transpose(), fir_window);
    const Eigen::Index base = t * hop - (B - 1);
    for (Eigen::Index j = 0; j < F + 2 * B - 2; ++j) {
      const Eigen::Index idx = base + j;
      if (idx < 0 || idx >= N) continue;
      const Eigen::Index n_lo = std::max<Eigen::Index>(0, j - F + 1);
      const Eigen::Index n_hi = std::min<Eigen::Index>(2 * B - 2, j);
      double acc = 0.0;
      for (Eigen::Index n = n_lo; n <= n_hi; ++n) acc += fir[n] * frame[j - n];
      out[idx] += acc;
    }
  }
  if (stream_out != nullptr) *stream_out = std::move(stream);
  return out;
}

// Per-sample controls interpolated on the fly; phase wrapped each step.
ArrayXd harmonic_forward_streaming(const ArrayXd& f0_frames, const ArrayXd& amp,
                                   const RowArr2& harm, int hop, double fs) {
  const Eigen::Index T = f0_frames.size();
  const Eigen::Index K = harm.cols();
  const double nyquist = fs / 2.0;
  ArrayXd out(T * hop);
  double phase = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index next = std::min(t + 1, T - 1);
    for (int j = 0; j < hop; ++j) {
      const double w = double(j) / hop;
      const double f0 = f0_frames[t] * (1.0 - w) + f0_frames[next] * w;
      const double a = amp[t] * (1.0 - w) + amp[next] * w;
      phase += f0 * (kTwoPi / fs);
      phase -= kTwoPi * std::floor(phase / kTwoPi);
      double acc = 0.0;
      for (Eigen::Index k = 1; k <= K; ++k) {
        if (k * f0 >= nyquist) break;
        const double A = harm(t, k - 1) * (1.0 - w) + harm(next, k - 1) * w;
        acc += A * std::sin(double(k) * phase);
      }
      out[t * hop + j] = a * acc;
    }
  }
  return out;
}

void check_f0(const ArrayXd& f0, Eigen::Index frames) {
  if (f0.size() != frames) throw InvalidArgument("f0 frame count does not match controls");
  if ((f0 < 0.0).any()) throw InvalidArgument("negative f0");
}

}  // namespace

Eigen::ArrayXXd upsample_controls(const Eigen::ArrayXXd& frames, int hop) {
  if (frames.rows() == 0) throw InvalidArgument("upsample_controls: empty input");
  if (hop < 1) throw InvalidArgument("upsample_controls: hop must be >= 1");
  const Eigen::Index T = frames.rows(), D = frames.cols();
  ArrayXXd out(T * hop, D);
  for (Eigen::Index i = 0; i < T; ++i) {
    const Eigen::Index next = std::min(i + 1, T - 1);
    for (int j = 0; j < hop; ++j) {
      const double w = double(j) / hop;
      out.row(i * hop + j) = frames.row(i) * (1.0 - w) + frames.row(next) * w;
    }
  }
  return out;
}

ad::Tensor harmonic_synth_tensor(const ad::Tensor& f0_frames, const SynthControls& controls,
                                 const SynthConfig& cfg) {
  check_controls(controls);
  if (f0_frames.rank() != 1) throw InvalidArgument("f0 must be a frame vector");
  check_f0(*f0_frames.data, controls.frames());
  const Eigen::Index K = controls.harmonics.shape[1];
  const int hop = cfg.hop;
  const double fs = cfg.sample_rate;

  Tensor f0_samp = ad::upsample_linear(f0_frames, hop);
  Tensor amp_samp = ad::upsample_linear(controls.amplitude, hop);
  Tensor harm_samp = ad::upsample_linear(controls.harmonics, hop);

  const Eigen::Index N = f0_samp.shape[0];
  Tensor omega = ad::mul_scalar(f0_samp, kTwoPi / fs);
  Tensor phi = ad::phase_cumsum(omega);

  ArrayXd kvec(K);
  for (Eigen::Index k = 0; k < K; ++k) kvec[k] = double(k + 1);

  // Nyquist mask from the upsampled f0 values; constant w.r.t. the tape.
  ArrayXXd mask(N, K);
  const double nyquist = fs / 2.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const double f0 = (*f0_samp.data)[n];
    for (Eigen::Index k = 0; k < K; ++k) mask(n, k) = (k + 1) * f0 < nyquist ? 1.0 : 0.0;
  }

  Tensor phases = ad::outer(phi, Tensor::vector(kvec));  // [N x K]
  Tensor sines = ad::sin(phases);
  Tensor weighted = ad::mul(ad::mul(harm_samp, Tensor::matrix(mask)), sines);
  Tensor mixed = ad::sum(weighted, 1);  // [N]
  return ad::mul(amp_samp, mixed);
}

ad::Tensor noise_synth_tensor(const ad::Tensor& noise_mags, const SynthConfig& cfg,
                              std::uint64_t seed) {
  if (noise_mags.rank() != 2) throw InvalidArgument("noise_mags must be [frames x B]");
  const Eigen::Index T = noise_mags.shape[0];
  const Eigen::Index B = noise_mags.shape[1];
  const int hop = cfg.hop;
  const Eigen::Index N = T * hop;
  const Eigen::Index F = 2 * hop;

  std::shared_ptr<ArrayXd> stream;
  ArrayXd value = noise_bank_forward(noise_mags.mat(), hop, seed, &stream);

  Tensor out;
  out.shape = {N};
  out.data = std::make_shared<ArrayXd>(std::move(value));
  if (!noise_mags.taped()) return out;

  auto syn_window = std::make_shared<ArrayXd>(dsp::hann_periodic(int(F)));
  auto fir_window = std::make_shared<ArrayXd>(dsp::hann_symmetric(int(2 * B - 1)));
  const int parent = noise_mags.node;
  out.tape = noise_mags.tape;
  out.node = out.tape->emit(
      ad::Op::noise_bank, {parent}, N,
      [parent, T, B, N, F, hop, stream, syn_window,
       fir_window](const ArrayXd& g, ad::Gradients& grads) {
        const Eigen::Index nf = 2 * (B - 1);
        ArrayXd& acc = grads.accumulate(parent, T * B);
        Eigen::Map<RowArr2> am(acc.data(), T, B);
        ArrayXd frame(F), gh(2 * B - 1), gy(nf);
        for (Eigen::Index t = 0; t < T; ++t) {
          frame = stream->segment(t * hop, F) * *syn_window;
          const Eigen::Index base = t * hop - (B - 1);
          // gh[n] = sum_i frame[i] * g[base + n + i]
          for (Eigen::Index n = 0; n < 2 * B - 1; ++n) {
            double s = 0.0;
            const Eigen::Index lo = std::max<Eigen::Index>(0, -(base + n));
            const Eigen::Index hi = std::min<Eigen::Index>(F - 1, N - 1 - base - n);
            for (Eigen::Index i = lo; i <= hi; ++i) s += frame[i] * g[base + n + i];
            gh[n] = s;
          }
          gy.setZero();
          for (Eigen::Index n = 0; n < 2 * B - 1; ++n)
            gy[(n + nf - (B - 1)) % nf] += (*fir_window)[n] * gh[n];
          const Eigen::ArrayXcd gspec = dsp::rfft(gy);
          for (Eigen::Index k = 0; k < B; ++k) {
            const double c = (k == 0 || k == B - 1) ? 1.0 : 2.0;
            am(t, k) += c / double(nf) * gspec[k].real();
          }
        }
      });
  return out;
}

ad::Tensor render_tensor(const ad::Tensor& f0_frames, const SynthControls& controls,
                         const SynthConfig& cfg, std::uint64_t seed) {
  Tensor harmonic = harmonic_synth_tensor(f0_frames, controls, cfg);
  Tensor noise = noise_synth_tensor(controls.noise_mags, cfg, seed);
  return ad::add(harmonic, noise);
}

AudioClip harmonic_synth(const Eigen::ArrayXd& f0_frames, const SynthControls& controls,
                         const SynthConfig& cfg) {
  check_controls(controls);
  check_f0(f0_frames, controls.frames());
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples = harmonic_forward_streaming(f0_frames, *controls.amplitude.data,
                                            controls.harmonics.mat(), cfg.hop, cfg.sample_rate);
  return clip;
}

AudioClip noise_synth(const Eigen::ArrayXXd& noise_mags, const SynthConfig& cfg,
                      std::uint64_t seed) {
  RowArr2 mags = noise_mags;
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples = noise_bank_forward(mags, cfg.hop, seed, nullptr);
  return clip;
}

AudioClip render(const Eigen::ArrayXd& f0_frames, const SynthControls& controls,
                 const SynthConfig& cfg, std::uint64_t seed) {
  AudioClip clip = harmonic_synth(f0_frames, controls, cfg);
  clip.samples += noise_bank_forward(controls.noise_mags.mat(), cfg.hop, seed, nullptr);
  return clip;
}

}  // namespace hns
