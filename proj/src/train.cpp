#include "hns/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hns/common.hpp"
#include "hns/dsp.hpp"
#include "hns/synth.hpp"

namespace hns {

namespace {

using ad::Tensor;
using Eigen::ArrayXd;
using Eigen::Index;

double to_unit(std::uint64_t x) { return double(x >> 11) * 0x1.0p-53; }

const TrainItem& pick_item(const Dataset& set, std::uint64_t r) {
  return set.items[size_t(r % std::uint64_t(set.items.size()))];
}

WindowDraw finish_draw(const TrainItem& item, bool from_vocal, std::uint64_t base,
                       Eigen::Index clip_frames) {
  const Index n_frames = item.feats.f0.size();
  if (clip_frames > n_frames)
    throw InvalidArgument("training window is longer than clip " + item.name);
  WindowDraw draw;
  draw.item = &item;
  draw.from_vocal = from_vocal;
  draw.start_frame = Index(splitmix64(base + 3) % std::uint64_t(n_frames - clip_frames + 1));
  draw.noise_seed = splitmix64(base + 4);
  return draw;
}

void check_dataset(const Dataset& set) {
  if (set.items.empty()) throw InvalidArgument("dataset is empty");
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1 || cfg.clip_samples < 1 || cfg.steps < 1 || cfg.checkpoint_every < 1)
    throw InvalidArgument("train config fields must be positive");
  if (cfg.lr <= 0.0 || cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 ||
      cfg.beta2 >= 1.0 || cfg.adam_eps <= 0.0)
    throw InvalidArgument("optimizer hyperparameters out of range");
  if (cfg.checkpoint_every > cfg.steps)
    throw InvalidArgument("checkpoint_every must be <= total steps");
}

void adam_step(std::vector<Eigen::ArrayXd>& params, const std::vector<Eigen::ArrayXd>& grads,
               AdamState& state, const AdamHyper& hyper) {
  if (params.size() != grads.size()) throw InvalidArgument("adam: parameter/gradient mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i] = ArrayXd::Zero(params[i].size());
      state.v[i] = ArrayXd::Zero(params[i].size());
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam: state size mismatch");
  state.step += 1;
  const double t = double(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size())
      throw InvalidArgument("adam: shape mismatch");
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i].square();
    params[i] -= hyper.lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + hyper.eps);
  }
}

TrainItem make_train_item(AudioClip clip, FeatureSet feats, std::string name) {
  TrainItem item;
  item.held = held_f0(feats.f0);
  item.clip = std::move(clip);
  item.feats = std::move(feats);
  item.name = std::move(name);
  return item;
}

Dataset load_dataset(const std::string& dir, int expected_rate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InvalidArgument("not a directory: " + dir);
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    if (p.extension() == ".wav") stems.push_back(p.stem().string());
  }
  std::sort(stems.begin(), stems.end());

  Dataset set;
  for (const auto& stem : stems) {
    const std::string wav_path = (fs::path(dir) / (stem + ".wav")).string();
    const std::string feat_path = (fs::path(dir) / (stem + ".feat")).string();
    if (!fs::exists(feat_path))
      throw InvalidArgument("missing feature dump for " + wav_path + " (run `features` first)");
    AudioClip clip = read_wav(wav_path);
    if (clip.sample_rate != expected_rate)
      throw InvalidArgument("clip " + wav_path + " is not at the model sample rate");
    set.items.push_back(make_train_item(std::move(clip), read_features(feat_path), stem));
  }
  if (set.items.empty()) throw InvalidArgument("no .wav files in " + dir);
  return set;
}

MixedDataset mix_datasets(const Dataset& vocal, const Dataset& instrument, double ratio) {
  check_dataset(vocal);
  check_dataset(instrument);
  if (!(ratio > 0.0 && ratio < 1.0))
    throw InvalidArgument("mix ratio must lie in the open interval (0, 1)");
  return MixedDataset{&vocal, &instrument, ratio};
}

WindowDraw draw_window(const Dataset& set, std::uint64_t seed, int step, int elem,
                       Eigen::Index clip_frames) {
  check_dataset(set);
  const std::uint64_t base = mix_seed(seed, std::uint64_t(step), std::uint64_t(elem));
  return finish_draw(pick_item(set, splitmix64(base + 2)), true, base, clip_frames);
}

WindowDraw draw_window(const MixedDataset& mix, std::uint64_t seed, int step, int elem,
                       Eigen::Index clip_frames) {
  if (mix.vocal == nullptr || mix.instrument == nullptr)
    throw InvalidArgument("mixed dataset is not initialized");
  const std::uint64_t base = mix_seed(seed, std::uint64_t(step), std::uint64_t(elem));
  const bool from_vocal = to_unit(splitmix64(base + 1)) < mix.ratio;
  const Dataset& set = from_vocal ? *mix.vocal : *mix.instrument;
  check_dataset(set);
  return finish_draw(pick_item(set, splitmix64(base + 2)), from_vocal, base, clip_frames);
}

namespace {

struct ItemCond {
  ArrayXd f0_cond, loud_cond;
};

TrainResult train_impl(const std::vector<const Dataset*>& sets,
                       const std::function<WindowDraw(int, int)>& draw, ModelKind kind,
                       const DecoderConfig& dcfg, int sample_rate, double frame_rate,
                       const TrainConfig& tcfg, const LossConfig& lcfg, const StepHook& on_step) {
  validate(tcfg);
  validate(lcfg);
  const double hop_f = double(sample_rate) / frame_rate;
  const int hop = int(std::llround(hop_f));
  if (hop < 1 || std::abs(hop_f - hop) > 1e-9)
    throw InvalidArgument("sample_rate / frame_rate must be a positive integer hop");
  if (tcfg.clip_samples % hop != 0)
    throw InvalidArgument("clip_samples must be a multiple of the hop");
  const Index clip_frames = tcfg.clip_samples / hop;

  // Validate the data and gather loudness statistics.
  double loud_sum = 0.0, loud_sq = 0.0;
  Index loud_n = 0;
  for (const Dataset* set : sets) {
    check_dataset(*set);
    for (const TrainItem& item : set->items) {
      if (item.clip.sample_rate != sample_rate)
        throw InvalidArgument("clip " + item.name + " is not at the model sample rate");
      const Index n_frames = dsp::frame_count(item.clip.length(), hop);
      if (item.feats.f0.size() != n_frames)
        throw InvalidArgument("features of " + item.name + " do not match the clip framing");
      if (clip_frames > n_frames)
        throw InvalidArgument("training window is longer than clip " + item.name);
      if (kind == ModelKind::latent && item.feats.mfcc.cols() != dcfg.n_mfcc)
        throw InvalidArgument("latent training needs " + std::to_string(dcfg.n_mfcc) +
                              "-wide MFCCs, clip " + item.name + " has " +
                              std::to_string(item.feats.mfcc.cols()));
      loud_sum += item.feats.loudness.sum();
      loud_sq += item.feats.loudness.square().sum();
      loud_n += item.feats.loudness.size();
    }
  }
  const double loud_mean = loud_sum / double(loud_n);
  const double loud_var = std::max(0.0, loud_sq / double(loud_n) - loud_mean * loud_mean);
  const double loud_std = std::max(std::sqrt(loud_var), 1e-6);

  Model model = init_model(kind, dcfg, sample_rate, frame_rate, tcfg.seed);
  model.loud_mean = loud_mean;
  model.loud_std = loud_std;

  // Per-item conditioning under the frozen statistics.
  std::vector<std::vector<ItemCond>> conds(sets.size());
  for (size_t s = 0; s < sets.size(); ++s)
    for (const TrainItem& item : sets[s]->items) {
      auto [f0c, loudc] = condition_inputs(item.feats.f0, item.feats.loudness, loud_mean,
                                           loud_std, model.f0_scale);
      conds[s].push_back({std::move(f0c), std::move(loudc)});
    }
  auto cond_of = [&](const TrainItem* item) -> const ItemCond& {
    for (size_t s = 0; s < sets.size(); ++s) {
      const auto& items = sets[s]->items;
      if (item >= items.data() && item < items.data() + items.size())
        return conds[s][size_t(item - items.data())];
    }
    throw Error("window draw points outside the training sets");
  };

  auto names = named_params(model);
  std::vector<ArrayXd> flat(names.size());
  for (size_t i = 0; i < names.size(); ++i) flat[i] = *names[i].second->data;

  AdamState adam;
  const AdamHyper hyper{tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps};
  const SynthConfig synth_cfg{sample_rate, hop};

  TrainResult result;
  result.losses.reserve(size_t(tcfg.steps));
  std::vector<ArrayXd> grad_sum(names.size());

  for (int step = 1; step <= tcfg.steps; ++step) {
    for (size_t i = 0; i < names.size(); ++i) grad_sum[i] = ArrayXd::Zero(flat[i].size());
    double loss_sum = 0.0;

    for (int elem = 0; elem < tcfg.batch_size; ++elem) {
      const WindowDraw win = draw(step, elem);
      const TrainItem& item = *win.item;
      const ItemCond& cond = cond_of(win.item);
      const Index sf = win.start_frame;

      ad::Tape tape;
      Model watched = watch_params(tape, model);

      Tensor f0c = Tensor::vector(cond.f0_cond.segment(sf, clip_frames));
      Tensor loudc = Tensor::vector(cond.loud_cond.segment(sf, clip_frames));
      std::optional<Tensor> z;
      if (kind == ModelKind::latent) {
        ad::RowArr2 mfcc_win = item.feats.mfcc.middleRows(sf, clip_frames);
        Tensor mfcc = Tensor::from_flat({clip_frames, Index(dcfg.n_mfcc)},
                                        Eigen::Map<const ArrayXd>(mfcc_win.data(), mfcc_win.size()));
        z = encoder_forward(watched.encoder, mfcc);
      }
      SynthControls controls = decoder_forward(watched.decoder, f0c, loudc, z, frame_rate);
      Tensor f0_synth = Tensor::vector(item.held.segment(sf, clip_frames));
      Tensor pred = render_tensor(f0_synth, controls, synth_cfg, win.noise_seed);
      Tensor target = Tensor::vector(item.clip.samples.segment(sf * hop, tcfg.clip_samples));
      Tensor loss = multiscale_spectral_loss(pred, target, lcfg);

      ad::Gradients grads = ad::backward(tape, loss);
      auto watched_names = named_params(watched);
      for (size_t i = 0; i < names.size(); ++i)
        grad_sum[i] += grads.get(*watched_names[i].second);
      loss_sum += loss.item();
    }

    for (auto& g : grad_sum) g /= double(tcfg.batch_size);
    adam_step(flat, grad_sum, adam, hyper);
    for (size_t i = 0; i < names.size(); ++i)
      *names[i].second = Tensor::from_flat(names[i].second->shape, flat[i]);

    const double loss_avg = loss_sum / double(tcfg.batch_size);
    result.losses.push_back(loss_avg);
    if (on_step) on_step(step, loss_avg);

    if (step % tcfg.checkpoint_every == 0 || step == tcfg.steps) {
      model.step = std::uint64_t(step);
      result.checkpoints.push_back(to_checkpoint(model));
    }
  }
  return result;
}

}  // namespace

TrainResult train(const Dataset& data, ModelKind kind, const DecoderConfig& dcfg,
                  int sample_rate, double frame_rate, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const StepHook& on_step) {
  const double hop_f = double(sample_rate) / frame_rate;
  const Index clip_frames = Index(tcfg.clip_samples / std::max(1, int(std::llround(hop_f))));
  return train_impl({&data},
                    [&, clip_frames](int step, int elem) {
                      return draw_window(data, tcfg.seed, step, elem, clip_frames);
                    },
                    kind, dcfg, sample_rate, frame_rate, tcfg, lcfg, on_step);
}

TrainResult train(const MixedDataset& data, ModelKind kind, const DecoderConfig& dcfg,
                  int sample_rate, double frame_rate, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const StepHook& on_step) {
  if (data.vocal == nullptr || data.instrument == nullptr)
    throw InvalidArgument("mixed dataset is not initialized");
  const double hop_f = double(sample_rate) / frame_rate;
  const Index clip_frames = Index(tcfg.clip_samples / std::max(1, int(std::llround(hop_f))));
  return train_impl({data.vocal, data.instrument},
                    [&, clip_frames](int step, int elem) {
                      return draw_window(data, tcfg.seed, step, elem, clip_frames);
                    },
                    kind, dcfg, sample_rate, frame_rate, tcfg, lcfg, on_step);
}

}  // namespace hns
