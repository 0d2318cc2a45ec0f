#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hns/common.hpp"
#include "hns/config.hpp"
#include "hns/features.hpp"
#include "hns/nn.hpp"
#include "hns/train.hpp"
#include "hns/xsynth.hpp"

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw hns::InvalidArgument("no such file: " + path);
}

hns::AudioClip load_at_rate(const std::string& path, int rate) {
  require_file(path);
  hns::AudioClip clip = hns::read_wav(path);
  if (clip.sample_rate != rate) clip = hns::resample(clip, rate);
  return clip;
}

void announce(const hns::PipelineConfig& cfg, const std::string& dump_path) {
  std::cout << "seed " << cfg.seed << "\n";
  std::cout << "config " << std::hex << std::setw(16) << std::setfill('0')
            << hns::config_hash(cfg) << std::dec << std::setfill(' ') << "\n";
  if (!dump_path.empty()) {
    std::ofstream os(dump_path);
    if (!os) throw hns::IoError("cannot write config dump: " + dump_path);
    os << hns::dump_config(cfg);
  }
}

hns::FeatureExtractConfig extract_config(const hns::PipelineConfig& cfg) {
  hns::FeatureExtractConfig fx;
  fx.pitch = cfg.pitch;
  fx.loudness = cfg.loudness;
  fx.mfcc = cfg.mfcc;
  fx.K = cfg.K;
  return fx;
}

int run_features(const hns::PipelineConfig& cfg, const std::string& in_path,
                 const std::string& out_path) {
  const hns::AudioClip clip = load_at_rate(in_path, cfg.sample_rate);
  const hns::FeatureSet set = hns::extract_features(clip, extract_config(cfg));
  hns::write_features(out_path, set);
  std::cout << "frames " << set.f0.size() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir, out_dir, kind = "timbre", mix;
};

int run_train(hns::PipelineConfig cfg, const TrainArgs& args) {
  const bool mixed = !args.mix.empty();
  if (mixed == !args.data_dir.empty())
    throw hns::InvalidArgument("pass either a data directory or --mix, not both");

  const hns::ModelKind kind =
      args.kind == "latent" ? hns::ModelKind::latent : hns::ModelKind::timbre;
  hns::DecoderConfig dcfg;
  dcfg.hidden = cfg.hidden;
  dcfg.K = cfg.K;
  dcfg.B = cfg.B;
  dcfg.latent_width = kind == hns::ModelKind::latent ? cfg.latent_width : 0;
  dcfg.n_mfcc = cfg.mfcc.n_mfcc;
  cfg.train.seed = cfg.seed;

  fs::create_directories(args.out_dir);
  std::ofstream metrics(fs::path(args.out_dir) / "metrics.log");
  if (!metrics) throw hns::IoError("cannot write metrics log in " + args.out_dir);
  const auto on_step = [&](int step, double loss) {
    metrics << step << "\t" << std::setprecision(17) << loss << "\n";
    if (step % 100 == 0) std::cerr << "step " << step << " loss " << loss << "\n";
  };

  hns::TrainResult result;
  hns::Dataset vocal, instrument;
  if (mixed) {
    const auto c1 = args.mix.find(':');
    const auto c2 = args.mix.rfind(':');
    if (c1 == std::string::npos || c2 == c1)
      throw hns::InvalidArgument("--mix expects vocal_dir:instrument_dir:ratio");
    vocal = hns::load_dataset(args.mix.substr(0, c1), cfg.sample_rate);
    instrument = hns::load_dataset(args.mix.substr(c1 + 1, c2 - c1 - 1), cfg.sample_rate);
    const double ratio = std::stod(args.mix.substr(c2 + 1));
    const hns::MixedDataset mix = hns::mix_datasets(vocal, instrument, ratio);
    result = hns::train(mix, kind, dcfg, cfg.sample_rate, cfg.frame_rate, cfg.train, cfg.loss,
                        on_step);
  } else {
    vocal = hns::load_dataset(args.data_dir, cfg.sample_rate);
    result = hns::train(vocal, kind, dcfg, cfg.sample_rate, cfg.frame_rate, cfg.train, cfg.loss,
                        on_step);
  }

  for (const auto& ckpt : result.checkpoints) {
    const std::string name = "ckpt_" + std::to_string(ckpt.step) + ".bin";
    hns::save_checkpoint(ckpt, (fs::path(args.out_dir) / name).string());
  }
  std::cout << "checkpoints " << result.checkpoints.size() << "\n";
  return 0;
}

int run_resynth(const hns::PipelineConfig& cfg, const std::string& in_path,
                const std::string& ckpt_path, const std::string& out_path) {
  require_file(in_path);
  require_file(ckpt_path);
  const hns::ModelCheckpoint ckpt = hns::load_checkpoint(ckpt_path);
  const hns::AudioClip input = hns::read_wav(in_path);
  const hns::AudioClip out = hns::resynthesize(input, ckpt, cfg.seed);
  hns::write_wav(out, out_path);
  return 0;
}

int run_xsynth(const hns::PipelineConfig& cfg, const std::string& in_path,
               const std::string& ckpt_path, const std::string& out_path, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw hns::InvalidArgument("--p must be in [0, 1]");
  require_file(in_path);
  require_file(ckpt_path);
  const hns::ModelCheckpoint ckpt = hns::load_checkpoint(ckpt_path);
  const hns::AudioClip input = hns::read_wav(in_path);
  const hns::AudioClip out = hns::cross_synthesize(input, ckpt, p, cfg.seed);
  hns::write_wav(out, out_path);
  return 0;
}

int run_inspect(const std::string& ckpt_path) {
  require_file(ckpt_path);
  const hns::ModelCheckpoint c = hns::load_checkpoint(ckpt_path);
  std::cout << "kind " << (c.kind == 1 ? "latent" : "timbre") << "\n";
  std::cout << "step " << c.step << "\n";
  std::cout << "harmonics " << c.K << "\n";
  std::cout << "noise_bins " << c.B << "\n";
  std::cout << "hidden " << c.hidden << "\n";
  std::cout << "latent_width " << c.latent_width << "\n";
  std::cout << "n_mfcc " << c.n_mfcc << "\n";
  std::cout << "sample_rate " << c.sample_rate << "\n";
  std::cout << "frame_rate " << c.frame_rate << "\n";
  std::cout << "init_seed " << c.seed << "\n";
  std::cout << "loudness_mean " << c.loud_mean << "\n";
  std::cout << "loudness_std " << c.loud_std << "\n";
  std::uint64_t total = 0;
  for (const auto& t : c.tensors) total += t.element_count();
  std::cout << "tensors " << c.tensors.size() << "\n";
  std::cout << "parameters " << total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"harmonic-plus-noise synthesis toolkit"};
  app.require_subcommand(1);

  std::string config_path, dump_path;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "config file (key = value text)");
  app.add_option("--seed", seed_flag, "override the config seed");
  app.add_option("--dump-config", dump_path, "write the effective config to this path");

  std::string in_path, out_path, ckpt_path;
  auto* c_feat = app.add_subcommand("features", "extract features from a WAV into a .feat dump");
  c_feat->add_option("input", in_path, "input WAV")->required();
  c_feat->add_option("output", out_path, "output .feat path")->required();

  TrainArgs targs;
  std::optional<int> steps_flag, every_flag, batch_flag;
  std::optional<double> lr_flag;
  auto* c_train = app.add_subcommand("train", "train a model on a directory of wav+feat pairs");
  c_train->add_option("data_dir", targs.data_dir, "directory of stem.wav + stem.feat pairs");
  c_train->add_option("--kind", targs.kind, "model kind")
      ->check(CLI::IsMember({"timbre", "latent"}))
      ->required();
  c_train->add_option("--mix", targs.mix, "vocal_dir:instrument_dir:ratio");
  c_train->add_option("--out", targs.out_dir, "output directory")->required();
  c_train->add_option("--steps", steps_flag, "override train.steps");
  c_train->add_option("--checkpoint-every", every_flag, "override train.checkpoint_every");
  c_train->add_option("--batch-size", batch_flag, "override train.batch_size");
  c_train->add_option("--lr", lr_flag, "override train.lr");

  auto* c_resynth = app.add_subcommand("resynth", "reconstruct / timbre-transfer a WAV");
  c_resynth->add_option("input", in_path, "input WAV")->required();
  c_resynth->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
  c_resynth->add_option("output", out_path, "output WAV")->required();

  double p = -1.0;
  auto* c_xsynth = app.add_subcommand("xsynth", "blend model and input harmonics (vocoding)");
  c_xsynth->add_option("input", in_path, "input WAV")->required();
  c_xsynth->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
  c_xsynth->add_option("output", out_path, "output WAV")->required();
  c_xsynth->add_option("--p", p, "interpolation factor in [0, 1]");

  auto* c_inspect = app.add_subcommand("inspect", "print checkpoint metadata");
  c_inspect->add_option("checkpoint", ckpt_path, "model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    hns::PipelineConfig cfg;
    if (!config_path.empty()) {
      require_file(config_path);
      cfg = hns::load_config(config_path);
    }
    if (seed_flag) cfg.seed = *seed_flag;
    if (steps_flag) cfg.train.steps = *steps_flag;
    if (every_flag) cfg.train.checkpoint_every = *every_flag;
    if (batch_flag) cfg.train.batch_size = *batch_flag;
    if (lr_flag) cfg.train.lr = *lr_flag;
    if (p < 0.0 && c_xsynth->parsed() && c_xsynth->count("--p") == 0) p = cfg.p;
    hns::validate(cfg);
    announce(cfg, dump_path);

    if (c_feat->parsed()) return run_features(cfg, in_path, out_path);
    if (c_train->parsed()) return run_train(cfg, targs);
    if (c_resynth->parsed()) return run_resynth(cfg, in_path, ckpt_path, out_path);
    if (c_xsynth->parsed()) return run_xsynth(cfg, in_path, ckpt_path, out_path, p);
    if (c_inspect->parsed()) return run_inspect(ckpt_path);
    return 2;
  } catch (const hns::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
