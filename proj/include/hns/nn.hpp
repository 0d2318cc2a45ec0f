#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hns/container.hpp"
#include "hns/synth.hpp"
#include "hns/tensor.hpp"

namespace hns {

struct DenseP {
  ad::Tensor w;  // [in x out]
  ad::Tensor b;  // [out]
};

struct LayerNormP {
  ad::Tensor gain, bias;  // [width]
};

// dense -> layer norm -> leaky ReLU
struct StackLayerP {
  DenseP dense;
  LayerNormP ln;
};

// Gate order r, z, n on the 3H-wide column blocks.
struct GruP {
  ad::Tensor wx;  // [in x 3H]
  ad::Tensor wh;  // [H x 3H]
  ad::Tensor bx, bh;  // [3H]
};

struct DecoderConfig {
  int hidden = 128;
  int K = 64;
  int B = 65;
  int latent_width = 0;  // 0 = timbre-transfer (z-less) decoder
  int n_mfcc = 30;
};

struct DecoderParams {
  std::vector<StackLayerP> f0_stack, loud_stack, z_stack;  // two layers each
  GruP gru;
  StackLayerP out;
  DenseP head_amp, head_harm, head_noise;
};

struct EncoderParams {
  GruP gru;
  DenseP proj;
};

enum class ModelKind : std::uint32_t { timbre = 0, latent = 1 };

struct Model {
  ModelKind kind = ModelKind::timbre;
  DecoderConfig cfg;
  int sample_rate = 16000;
  double frame_rate = 250.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  double loud_mean = 0.0, loud_std = 1.0, f0_scale = 127.0;
  DecoderParams decoder;
  EncoderParams encoder;  // present only for latent models
};

// y = 2 * sigmoid(x)^ln(10) + 1e-7 — positive, bounded by 2 + 1e-7.
ad::Tensor exp_sigmoid(const ad::Tensor& x);
ad::Tensor leaky_relu(const ad::Tensor& x);  // slope 0.2

// Raw f0 (Hz, 0 = unvoiced) and loudness (dB) to decoder conditioning:
// held-forward f0 on the MIDI scale / f0_scale, standardized loudness.
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> condition_inputs(const Eigen::ArrayXd& f0_hz,
                                                           const Eigen::ArrayXd& loudness_db,
                                                           double loud_mean, double loud_std,
                                                           double f0_scale);

// Unrolled GRU over [frames x width]; returns the hidden sequence
// [frames x H]. The initial state is zero.
ad::Tensor gru_forward(const GruP& params, const ad::Tensor& x);

SynthControls decoder_forward(const DecoderParams& params, const ad::Tensor& f0_cond,
                              const ad::Tensor& loud_cond,
                              const std::optional<ad::Tensor>& z, double frame_rate);

ad::Tensor encoder_forward(const EncoderParams& params, const ad::Tensor& mfcc);

// Deterministic initialization: orthogonal recurrent blocks, Glorot-uniform
// dense weights, zero biases; the seed is recorded in the model.
Model init_model(ModelKind kind, const DecoderConfig& cfg, int sample_rate, double frame_rate,
                 std::uint64_t seed);

// Canonical parameter enumeration (fixed order shared by init, serialization,
// and the optimizer).
std::vector<std::pair<std::string, ad::Tensor*>> named_params(Model& model);

// Leaf copies of every parameter recorded on the tape, for one training pass.
Model watch_params(ad::Tape& tape, const Model& model);

struct ModelCheckpoint {
  std::uint32_t kind = 0;
  std::uint32_t K = 0, B = 0, hidden = 0, latent_width = 0, n_mfcc = 0;
  std::uint32_t sample_rate = 0;
  double frame_rate = 0.0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  double loud_mean = 0.0, loud_std = 1.0, f0_scale = 127.0;
  std::vector<bin::NamedArray> tensors;
};

ModelCheckpoint to_checkpoint(const Model& model);
Model from_checkpoint(const ModelCheckpoint& ckpt);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace hns
