#include "hns/xsynth.hpp"

#include <cmath>
#include <optional>

#include "hns/common.hpp"
#include "hns/features.hpp"
#include "hns/synth.hpp"

namespace hns {

namespace {

using ad::Tensor;
using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::Index;

struct PipelineRun {
  AudioClip clip;          // input at the model rate
  FeatureTrack pitch;      // raw f0 + confidence
  ArrayXd held;            // synthesis f0
  SynthControls controls;  // decoder outputs (plain values)
  Model model;
};

PipelineRun run_decoder_pipeline(const AudioClip& input, const ModelCheckpoint& ckpt,
                                 std::uint64_t /*seed*/) {
  PipelineRun run;
  run.model = from_checkpoint(ckpt);
  Model& model = run.model;
  run.clip = input.sample_rate == model.sample_rate ? input : resample(input, model.sample_rate);

  PitchConfig pitch_cfg;
  pitch_cfg.frame_rate = model.frame_rate;
  LoudnessConfig loud_cfg;
  loud_cfg.frame_rate = model.frame_rate;
  run.pitch = extract_pitch(run.clip, pitch_cfg);
  FeatureTrack loud = extract_loudness(run.clip, loud_cfg);
  run.held = held_f0(run.pitch.f0);

  auto [f0c, loudc] = condition_inputs(run.pitch.f0, loud.loudness, model.loud_mean,
                                       model.loud_std, model.f0_scale);
  std::optional<Tensor> z;
  if (model.kind == ModelKind::latent) {
    MfccConfig mfcc_cfg;
    mfcc_cfg.frame_rate = model.frame_rate;
    mfcc_cfg.n_mfcc = model.cfg.n_mfcc;
    MfccTrack mfcc = extract_mfcc(run.clip, mfcc_cfg);
    z = encoder_forward(model.encoder, Tensor::matrix(mfcc.coefficients));
  }
  run.controls = decoder_forward(model.decoder, Tensor::vector(f0c), Tensor::vector(loudc), z,
                                 model.frame_rate);
  return run;
}

AudioClip synthesize(const PipelineRun& run, const ArrayXXd& harmonics, std::uint64_t seed) {
  const Model& model = run.model;
  const int hop = int(std::llround(model.sample_rate / model.frame_rate));
  SynthControls controls = run.controls;
  controls.harmonics = Tensor::matrix(harmonics);
  return render(run.held, controls, SynthConfig{model.sample_rate, hop}, seed);
}

}  // namespace

Eigen::ArrayXXd interpolate_harmonics(const Eigen::ArrayXXd& a_pred, const Eigen::ArrayXXd& a_in,
                                      double p, const Eigen::ArrayXd& f0_frames, double fs) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("interpolation factor p must be in [0, 1]");
  if (a_pred.rows() != a_in.rows() || a_pred.cols() != a_in.cols())
    throw InvalidArgument("harmonic matrices differ in shape");
  if (f0_frames.size() != a_pred.rows())
    throw InvalidArgument("f0 frame count does not match harmonic matrices");

  const double nyquist = fs / 2.0;
  ArrayXXd out(a_pred.rows(), a_pred.cols());
  for (Index t = 0; t < a_pred.rows(); ++t) {
    const double f0 = f0_frames[t];
    for (Index k = 0; k < a_pred.cols(); ++k) {
      if (double(k + 1) * f0 >= nyquist) {
        out(t, k) = 0.0;
      } else {
        out(t, k) = (1.0 - p) * a_pred(t, k) + p * a_in(t, k);
      }
    }
  }
  return out;
}

AudioClip resynthesize(const AudioClip& input, const ModelCheckpoint& ckpt, std::uint64_t seed) {
  PipelineRun run = run_decoder_pipeline(input, ckpt, seed);
  const ArrayXXd a_pred = run.controls.harmonics.to_matrix();
  const ArrayXXd zeros = ArrayXXd::Zero(a_pred.rows(), a_pred.cols());
  const ArrayXXd masked =
      interpolate_harmonics(a_pred, zeros, 0.0, run.pitch.f0, double(run.model.sample_rate));
  return synthesize(run, masked, seed);
}

AudioClip cross_synthesize(const AudioClip& input, const ModelCheckpoint& ckpt, double p,
                           std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("interpolation factor p must be in [0, 1]");
  if (ModelKind(ckpt.kind) == ModelKind::latent)
    throw InvalidArgument(
        "cross-synthesis needs a timbre-transfer checkpoint; this one has a latent encoder");
  PipelineRun run = run_decoder_pipeline(input, ckpt, seed);
  HarmonicTrack a_in = extract_input_harmonics(run.clip, run.pitch, run.model.cfg.K);
  const ArrayXXd a_out = interpolate_harmonics(run.controls.harmonics.to_matrix(),
                                               a_in.amplitudes, p, run.pitch.f0,
                                               double(run.model.sample_rate));
  return synthesize(run, a_out, seed);
}

}  // namespace hns
