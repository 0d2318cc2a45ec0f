#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hns/features.hpp"
#include "hns/loss.hpp"
#include "hns/nn.hpp"

namespace hns {

struct TrainConfig {
  int batch_size = 4;
  int clip_samples = 16000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps = 2000;
  int checkpoint_every = 500;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::ArrayXd> m, v;
  std::uint64_t step = 0;
};

// Standard bias-corrected Adam over a flat parameter list. State buffers are
// allocated lazily on the first call.
void adam_step(std::vector<Eigen::ArrayXd>& params, const std::vector<Eigen::ArrayXd>& grads,
               AdamState& state, const AdamHyper& hyper);

struct TrainItem {
  std::string name;
  AudioClip clip;
  FeatureSet feats;
  Eigen::ArrayXd held;  // held-forward f0 for synthesis
};

TrainItem make_train_item(AudioClip clip, FeatureSet feats, std::string name);

struct Dataset {
  std::vector<TrainItem> items;
};

// Loads stem.wav + stem.feat pairs from a directory, sorted by name.
Dataset load_dataset(const std::string& dir, int expected_rate);

// A sampling specification over two sources; ratio = fraction of windows
// drawn from the vocal set, open interval (0, 1).
struct MixedDataset {
  const Dataset* vocal = nullptr;
  const Dataset* instrument = nullptr;
  double ratio = 0.5;
};

MixedDataset mix_datasets(const Dataset& vocal, const Dataset& instrument, double ratio);

struct WindowDraw {
  const TrainItem* item = nullptr;
  Eigen::Index start_frame = 0;
  bool from_vocal = true;
  std::uint64_t noise_seed = 0;
};

WindowDraw draw_window(const Dataset& set, std::uint64_t seed, int step, int elem,
                       Eigen::Index clip_frames);
WindowDraw draw_window(const MixedDataset& mix, std::uint64_t seed, int step, int elem,
                       Eigen::Index clip_frames);

struct TrainResult {
  std::vector<ModelCheckpoint> checkpoints;
  std::vector<double> losses;  // one mean batch loss per step
};

using StepHook = std::function<void(int step, double loss)>;

TrainResult train(const Dataset& data, ModelKind kind, const DecoderConfig& dcfg,
                  int sample_rate, double frame_rate, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const StepHook& on_step = nullptr);
TrainResult train(const MixedDataset& data, ModelKind kind, const DecoderConfig& dcfg,
                  int sample_rate, double frame_rate, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const StepHook& on_step = nullptr);

}  // namespace hns
