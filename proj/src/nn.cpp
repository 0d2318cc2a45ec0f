#include "hns/nn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/QR>

#include "hns/common.hpp"
#include "hns/features.hpp"

namespace hns {

namespace {

using ad::RowArr2;
using ad::Tensor;
using Eigen::ArrayXd;
using Eigen::Index;

Tensor stack_layer(const StackLayerP& p, const Tensor& x) {
  Tensor y = ad::add(ad::matmul(x, p.dense.w), p.dense.b);
  y = ad::layer_norm(y, p.ln.gain, p.ln.bias);
  return leaky_relu(y);
}

Tensor stack2(const std::vector<StackLayerP>& layers, const Tensor& x) {
  Tensor y = x;
  for (const auto& layer : layers) y = stack_layer(layer, y);
  return y;
}

Tensor head(const DenseP& p, const Tensor& x) {
  return exp_sigmoid(ad::add(ad::matmul(x, p.w), p.b));
}

// Deterministic draws: raw mt19937_64 bits mapped to doubles, Box-Muller for
// normals — no library distributions, so streams are pinned bit-for-bit.
struct ParamRng {
  std::mt19937_64 rng;
  explicit ParamRng(std::uint64_t seed) : rng(seed) {}
  double uniform01() { return double(rng() >> 11) * 0x1.0p-53; }
  double normal() {
    const double u1 = (double(rng() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

Tensor glorot(ParamRng& rng, Index in, Index out) {
  const double limit = std::sqrt(6.0 / double(in + out));
  ArrayXd flat(in * out);
  for (Index i = 0; i < flat.size(); ++i) flat[i] = (2.0 * rng.uniform01() - 1.0) * limit;
  return Tensor::from_flat({in, out}, std::move(flat));
}

Eigen::MatrixXd orthogonal(ParamRng& rng, Index h) {
  Eigen::MatrixXd a(h, h);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < h; ++c) a(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(h, h);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index c = 0; c < h; ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

Tensor gru_recurrent(ParamRng& rng, Index h) {
  RowArr2 wh(h, 3 * h);
  for (int block = 0; block < 3; ++block)
    wh.middleCols(Index(block) * h, h) = orthogonal(rng, h).array();
  ArrayXd flat = Eigen::Map<const ArrayXd>(wh.data(), wh.size());
  return Tensor::from_flat({h, 3 * h}, std::move(flat));
}

StackLayerP stack_layer_shell(Index in, Index h) {
  StackLayerP p;
  p.dense.w = Tensor::zeros({in, h});
  p.dense.b = Tensor::zeros({h});
  p.ln.gain = Tensor::full({h}, 1.0);
  p.ln.bias = Tensor::zeros({h});
  return p;
}

GruP gru_shell(Index in, Index h) {
  GruP p;
  p.wx = Tensor::zeros({in, 3 * h});
  p.wh = Tensor::zeros({h, 3 * h});
  p.bx = Tensor::zeros({3 * h});
  p.bh = Tensor::zeros({3 * h});
  return p;
}

DenseP dense_shell(Index in, Index out) {
  return DenseP{Tensor::zeros({in, out}), Tensor::zeros({out})};
}

Model model_shell(ModelKind kind, const DecoderConfig& cfg, int sample_rate, double frame_rate) {
  if (cfg.hidden < 1 || cfg.K < 1 || cfg.B < 2)
    throw InvalidArgument("decoder config out of range");
  if (kind == ModelKind::latent && cfg.latent_width < 1)
    throw InvalidArgument("latent model needs latent_width >= 1");
  Model m;
  m.kind = kind;
  m.cfg = cfg;
  if (kind == ModelKind::timbre) m.cfg.latent_width = 0;
  m.sample_rate = sample_rate;
  m.frame_rate = frame_rate;

  const Index H = cfg.hidden;
  auto& d = m.decoder;
  d.f0_stack = {stack_layer_shell(1, H), stack_layer_shell(H, H)};
  d.loud_stack = {stack_layer_shell(1, H), stack_layer_shell(H, H)};
  int n_feats = 2;
  if (m.kind == ModelKind::latent) {
    d.z_stack = {stack_layer_shell(cfg.latent_width, H), stack_layer_shell(H, H)};
    n_feats = 3;
  }
  d.gru = gru_shell(Index(n_feats) * H, H);
  d.out = stack_layer_shell(H, H);
  d.head_amp = dense_shell(H, 1);
  d.head_harm = dense_shell(H, cfg.K);
  d.head_noise = dense_shell(H, cfg.B);
  if (m.kind == ModelKind::latent) {
    m.encoder.gru = gru_shell(cfg.n_mfcc, H);
    m.encoder.proj = dense_shell(H, cfg.latent_width);
  }
  return m;
}

}  // namespace

ad::Tensor exp_sigmoid(const ad::Tensor& x) {
  return ad::add_scalar(ad::mul_scalar(ad::pow(ad::sigmoid(x), std::numbers::ln10), 2.0), 1e-7);
}

ad::Tensor leaky_relu(const ad::Tensor& x) {
  return ad::add(ad::mul_scalar(x, 0.6), ad::mul_scalar(ad::abs(x), 0.4));
}

ad::Tensor gru_forward(const GruP& p, const ad::Tensor& x) {
  if (x.rank() != 2) throw InvalidArgument("gru input must be [frames x width]");
  if (x.shape[1] != p.wx.shape[0]) throw InvalidArgument("gru input width mismatch");
  const Index T = x.shape[0];
  const Index H = p.wh.shape[0];

  Tensor xg = ad::add(ad::matmul(x, p.wx), p.bx);  // [T x 3H]
  Tensor h = Tensor::zeros({1, H});
  std::vector<Tensor> rows;
  rows.reserve(size_t(T));
  for (Index t = 0; t < T; ++t) {
    Tensor xt = ad::slice(xg, 0, t, 1);
    Tensor hg = ad::add(ad::matmul(h, p.wh), p.bh);
    Tensor r = ad::sigmoid(ad::add(ad::slice(xt, 1, 0, H), ad::slice(hg, 1, 0, H)));
    Tensor z = ad::sigmoid(ad::add(ad::slice(xt, 1, H, H), ad::slice(hg, 1, H, H)));
    Tensor n = ad::tanh(
        ad::add(ad::slice(xt, 1, 2 * H, H), ad::mul(r, ad::slice(hg, 1, 2 * H, H))));
    h = ad::add(n, ad::mul(z, ad::sub(h, n)));  // (1-z) n + z h
    rows.push_back(h);
  }
  return ad::concat(rows, 0);
}

std::pair<Eigen::ArrayXd, Eigen::ArrayXd> condition_inputs(const Eigen::ArrayXd& f0_hz,
                                                           const Eigen::ArrayXd& loudness_db,
                                                           double loud_mean, double loud_std,
                                                           double f0_scale) {
  if (f0_hz.size() != loudness_db.size())
    throw InvalidArgument("f0 and loudness frame counts differ");
  const ArrayXd held = held_f0(f0_hz);
  ArrayXd f0_cond(held.size());
  for (Index i = 0; i < held.size(); ++i)
    f0_cond[i] = (69.0 + 12.0 * std::log2(held[i] / 440.0)) / f0_scale;
  ArrayXd loud_cond = (loudness_db - loud_mean) / std::max(loud_std, 1e-6);
  return {std::move(f0_cond), std::move(loud_cond)};
}

SynthControls decoder_forward(const DecoderParams& params, const ad::Tensor& f0_cond,
                              const ad::Tensor& loud_cond,
                              const std::optional<ad::Tensor>& z, double frame_rate) {
  if (f0_cond.rank() != 1 || loud_cond.rank() != 1)
    throw InvalidArgument("decoder conditioning must be frame vectors");
  const Index T = f0_cond.shape[0];
  if (loud_cond.shape[0] != T) throw InvalidArgument("decoder input frame counts differ");
  const bool wants_z = !params.z_stack.empty();
  if (z.has_value() && !wants_z) throw InvalidArgument("z supplied to a z-less decoder");
  if (!z.has_value() && wants_z) throw InvalidArgument("latent decoder requires z frames");
  if (z.has_value() && (z->rank() != 2 || z->shape[0] != T))
    throw InvalidArgument("z frame count does not match conditioning");

  std::vector<Tensor> feats;
  feats.push_back(stack2(params.f0_stack, ad::reshape(f0_cond, {T, 1})));
  feats.push_back(stack2(params.loud_stack, ad::reshape(loud_cond, {T, 1})));
  if (z.has_value()) feats.push_back(stack2(params.z_stack, *z));

  Tensor hseq = gru_forward(params.gru, ad::concat(feats, 1));
  Tensor h2 = stack_layer(params.out, hseq);

  SynthControls controls;
  controls.amplitude = ad::reshape(head(params.head_amp, h2), {T});
  controls.harmonics = ad::row_normalize(head(params.head_harm, h2));
  controls.noise_mags = head(params.head_noise, h2);
  controls.frame_rate = frame_rate;
  return controls;
}

ad::Tensor encoder_forward(const EncoderParams& params, const ad::Tensor& mfcc) {
  if (mfcc.rank() != 2) throw InvalidArgument("mfcc input must be [frames x n_mfcc]");
  if (mfcc.shape[1] != params.gru.wx.shape[0])
    throw InvalidArgument("mfcc width does not match encoder");
  Tensor hseq = gru_forward(params.gru, mfcc);
  return ad::add(ad::matmul(hseq, params.proj.w), params.proj.b);
}

Model init_model(ModelKind kind, const DecoderConfig& cfg, int sample_rate, double frame_rate,
                 std::uint64_t seed) {
  Model m = model_shell(kind, cfg, sample_rate, frame_rate);
  m.seed = seed;
  ParamRng rng(seed);
  const Index H = cfg.hidden;

  auto fill_stack = [&](std::vector<StackLayerP>& stack, Index in) {
    stack[0].dense.w = glorot(rng, in, H);
    stack[1].dense.w = glorot(rng, H, H);
  };
  auto& d = m.decoder;
  fill_stack(d.f0_stack, 1);
  fill_stack(d.loud_stack, 1);
  if (m.kind == ModelKind::latent) fill_stack(d.z_stack, cfg.latent_width);
  d.gru.wx = glorot(rng, d.gru.wx.shape[0], 3 * H);
  d.gru.wh = gru_recurrent(rng, H);
  d.out.dense.w = glorot(rng, H, H);
  d.head_amp.w = glorot(rng, H, 1);
  d.head_harm.w = glorot(rng, H, cfg.K);
  d.head_noise.w = glorot(rng, H, cfg.B);
  if (m.kind == ModelKind::latent) {
    m.encoder.gru.wx = glorot(rng, cfg.n_mfcc, 3 * H);
    m.encoder.gru.wh = gru_recurrent(rng, H);
    m.encoder.proj.w = glorot(rng, H, cfg.latent_width);
  }
  return m;
}

std::vector<std::pair<std::string, ad::Tensor*>> named_params(Model& model) {
  std::vector<std::pair<std::string, ad::Tensor*>> out;
  auto add_stack = [&](const std::string& prefix, std::vector<StackLayerP>& stack) {
    for (size_t i = 0; i < stack.size(); ++i) {
      const std::string base = prefix + ".l" + std::to_string(i);
      out.emplace_back(base + ".w", &stack[i].dense.w);
      out.emplace_back(base + ".b", &stack[i].dense.b);
      out.emplace_back(base + ".ln_g", &stack[i].ln.gain);
      out.emplace_back(base + ".ln_b", &stack[i].ln.bias);
    }
  };
  auto add_gru = [&](const std::string& prefix, GruP& gru) {
    out.emplace_back(prefix + ".wx", &gru.wx);
    out.emplace_back(prefix + ".wh", &gru.wh);
    out.emplace_back(prefix + ".bx", &gru.bx);
    out.emplace_back(prefix + ".bh", &gru.bh);
  };
  auto add_dense = [&](const std::string& prefix, DenseP& dense) {
    out.emplace_back(prefix + ".w", &dense.w);
    out.emplace_back(prefix + ".b", &dense.b);
  };

  auto& d = model.decoder;
  add_stack("dec.f0", d.f0_stack);
  add_stack("dec.loud", d.loud_stack);
  if (!d.z_stack.empty()) add_stack("dec.z", d.z_stack);
  add_gru("dec.gru", d.gru);
  out.emplace_back("dec.out.w", &d.out.dense.w);
  out.emplace_back("dec.out.b", &d.out.dense.b);
  out.emplace_back("dec.out.ln_g", &d.out.ln.gain);
  out.emplace_back("dec.out.ln_b", &d.out.ln.bias);
  add_dense("dec.head_amp", d.head_amp);
  add_dense("dec.head_harm", d.head_harm);
  add_dense("dec.head_noise", d.head_noise);
  if (model.kind == ModelKind::latent) {
    add_gru("enc.gru", model.encoder.gru);
    add_dense("enc.proj", model.encoder.proj);
  }
  return out;
}

Model watch_params(ad::Tape& tape, const Model& model) {
  Model watched = model;
  for (auto& [name, tensor] : named_params(watched)) *tensor = tape.watch(*tensor);
  return watched;
}

ModelCheckpoint to_checkpoint(const Model& model) {
  ModelCheckpoint ckpt;
  ckpt.kind = std::uint32_t(model.kind);
  ckpt.K = std::uint32_t(model.cfg.K);
  ckpt.B = std::uint32_t(model.cfg.B);
  ckpt.hidden = std::uint32_t(model.cfg.hidden);
  ckpt.latent_width = std::uint32_t(model.cfg.latent_width);
  ckpt.n_mfcc = std::uint32_t(model.cfg.n_mfcc);
  ckpt.sample_rate = std::uint32_t(model.sample_rate);
  ckpt.frame_rate = model.frame_rate;
  ckpt.step = model.step;
  ckpt.seed = model.seed;
  ckpt.loud_mean = model.loud_mean;
  ckpt.loud_std = model.loud_std;
  ckpt.f0_scale = model.f0_scale;

  Model copy = model;  // tensors share storage; copying is cheap
  for (auto& [name, tensor] : named_params(copy)) {
    bin::NamedArray arr;
    arr.name = name;
    for (Index d : tensor->shape) arr.shape.push_back(std::uint64_t(d));
    arr.data.resize(size_t(tensor->size()));
    for (Index i = 0; i < tensor->size(); ++i) arr.data[size_t(i)] = float((*tensor->data)[i]);
    ckpt.tensors.push_back(std::move(arr));
  }
  return ckpt;
}

Model from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind > 1) throw FormatError("checkpoint has unknown model kind");
  DecoderConfig cfg;
  cfg.hidden = int(ckpt.hidden);
  cfg.K = int(ckpt.K);
  cfg.B = int(ckpt.B);
  cfg.latent_width = int(ckpt.latent_width);
  cfg.n_mfcc = int(ckpt.n_mfcc);
  Model m = model_shell(ModelKind(ckpt.kind), cfg, int(ckpt.sample_rate), ckpt.frame_rate);
  m.step = ckpt.step;
  m.seed = ckpt.seed;
  m.loud_mean = ckpt.loud_mean;
  m.loud_std = ckpt.loud_std;
  m.f0_scale = ckpt.f0_scale;

  for (auto& [name, tensor] : named_params(m)) {
    const bin::NamedArray* found = nullptr;
    for (const auto& arr : ckpt.tensors)
      if (arr.name == name) {
        found = &arr;
        break;
      }
    if (found == nullptr) throw FormatError("checkpoint is missing tensor " + name);
    if (found->shape.size() != tensor->shape.size())
      throw FormatError("checkpoint tensor " + name + " has wrong rank");
    for (size_t i = 0; i < found->shape.size(); ++i)
      if (Index(found->shape[i]) != tensor->shape[i])
        throw FormatError("checkpoint tensor " + name + " has wrong shape");
    ArrayXd flat(tensor->size());
    for (Index i = 0; i < flat.size(); ++i) flat[i] = double(found->data[size_t(i)]);
    *tensor = Tensor::from_flat(tensor->shape, std::move(flat));
  }
  return m;
}

namespace {
constexpr char kCkptMagic[8] = {'H', 'N', 'S', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  bin::write_magic(os, kCkptMagic);
  bin::write_u32(os, kCkptVersion);
  bin::write_u32(os, ckpt.kind);
  bin::write_u32(os, ckpt.K);
  bin::write_u32(os, ckpt.B);
  bin::write_u32(os, ckpt.hidden);
  bin::write_u32(os, ckpt.latent_width);
  bin::write_u32(os, ckpt.n_mfcc);
  bin::write_u32(os, ckpt.sample_rate);
  bin::write_f64(os, ckpt.frame_rate);
  bin::write_u64(os, ckpt.step);
  bin::write_u64(os, ckpt.seed);
  bin::write_f64(os, ckpt.loud_mean);
  bin::write_f64(os, ckpt.loud_std);
  bin::write_f64(os, ckpt.f0_scale);
  bin::write_named_arrays(os, ckpt.tensors);
  if (!os) throw IoError("write failed: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  if (!bin::check_magic(is, kCkptMagic)) throw FormatError("not a checkpoint file: " + path);
  const std::uint32_t version = bin::read_u32(is);
  if (version != kCkptVersion)
    throw UnsupportedError("unsupported checkpoint version " + std::to_string(version));
  ModelCheckpoint ckpt;
  ckpt.kind = bin::read_u32(is);
  ckpt.K = bin::read_u32(is);
  ckpt.B = bin::read_u32(is);
  ckpt.hidden = bin::read_u32(is);
  ckpt.latent_width = bin::read_u32(is);
  ckpt.n_mfcc = bin::read_u32(is);
  ckpt.sample_rate = bin::read_u32(is);
  ckpt.frame_rate = bin::read_f64(is);
  ckpt.step = bin::read_u64(is);
  ckpt.seed = bin::read_u64(is);
  ckpt.loud_mean = bin::read_f64(is);
  ckpt.loud_std = bin::read_f64(is);
  ckpt.f0_scale = bin::read_f64(is);
  ckpt.tensors = bin::read_named_arrays(is);
  from_checkpoint(ckpt);  // validates architecture/tensor consistency
  return ckpt;
}

}  // namespace hns
