#include "hns/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hns/common.hpp"

namespace hns {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + ": expected a number, got '" + v + "'");
  }
}

std::vector<int> to_int_list(const std::string& key, std::string v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw InvalidArgument("config key " + key + ": expected a list like [2048, 1024]");
  v = v.substr(1, v.size() - 2);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(int(to_int(key, part)));
  }
  if (out.empty()) throw InvalidArgument("config key " + key + ": empty list");
  return out;
}

void apply_kv(PipelineConfig& c, const std::string& key, const std::string& v) {
  if (key == "sample_rate") c.sample_rate = int(to_int(key, v));
  else if (key == "frame_rate") c.frame_rate = to_double(key, v);
  else if (key == "seed") c.seed = std::uint64_t(to_int(key, v));
  else if (key == "p") c.p = to_double(key, v);
  else if (key == "model.harmonics") c.K = int(to_int(key, v));
  else if (key == "model.noise_bins") c.B = int(to_int(key, v));
  else if (key == "model.hidden") c.hidden = int(to_int(key, v));
  else if (key == "model.latent_width") c.latent_width = int(to_int(key, v));
  else if (key == "pitch.f0_min") c.pitch.f0_min = to_double(key, v);
  else if (key == "pitch.f0_max") c.pitch.f0_max = to_double(key, v);
  else if (key == "pitch.threshold") c.pitch.threshold = to_double(key, v);
  else if (key == "pitch.window") c.pitch.window = int(to_int(key, v));
  else if (key == "loudness.fft_size") c.loudness.fft_size = int(to_int(key, v));
  else if (key == "loudness.floor_db") c.loudness.floor_db = to_double(key, v);
  else if (key == "mfcc.fft_size") c.mfcc.fft_size = int(to_int(key, v));
  else if (key == "mfcc.n_mels") c.mfcc.n_mels = int(to_int(key, v));
  else if (key == "mfcc.n_mfcc") c.mfcc.n_mfcc = int(to_int(key, v));
  else if (key == "loss.fft_sizes") c.loss.fft_sizes = to_int_list(key, v);
  else if (key == "loss.overlap") c.loss.overlap = to_double(key, v);
  else if (key == "loss.log_weight") c.loss.log_weight = to_double(key, v);
  else if (key == "loss.eps") c.loss.eps = to_double(key, v);
  else if (key == "train.batch_size") c.train.batch_size = int(to_int(key, v));
  else if (key == "train.clip_samples") c.train.clip_samples = int(to_int(key, v));
  else if (key == "train.lr") c.train.lr = to_double(key, v);
  else if (key == "train.beta1") c.train.beta1 = to_double(key, v);
  else if (key == "train.beta2") c.train.beta2 = to_double(key, v);
  else if (key == "train.adam_eps") c.train.adam_eps = to_double(key, v);
  else if (key == "train.steps") c.train.steps = int(to_int(key, v));
  else if (key == "train.checkpoint_every") c.train.checkpoint_every = int(to_int(key, v));
  else throw InvalidArgument("unknown config key: " + key);
}

std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

int PipelineConfig::hop() const {
  const double h = double(sample_rate) / frame_rate;
  const int hi = int(std::llround(h));
  if (hi < 1 || std::abs(h - hi) > 1e-9)
    throw InvalidArgument("sample_rate / frame_rate must be a positive integer hop");
  return hi;
}

void validate(const PipelineConfig& cfg) {
  if (cfg.sample_rate < 1000) throw InvalidArgument("sample_rate must be >= 1000");
  if (cfg.frame_rate <= 0.0) throw InvalidArgument("frame_rate must be positive");
  cfg.hop();
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0)) throw InvalidArgument("p must be in [0, 1]");
  if (cfg.K < 1 || cfg.B < 2 || cfg.hidden < 1 || cfg.latent_width < 1)
    throw InvalidArgument("model dimensions out of range");
  if (cfg.pitch.f0_min <= 0.0 || cfg.pitch.f0_max <= cfg.pitch.f0_min)
    throw InvalidArgument("pitch range must satisfy 0 < f0_min < f0_max");
  if (cfg.pitch.threshold <= 0.0 || cfg.pitch.threshold >= 1.0)
    throw InvalidArgument("pitch threshold must be in (0, 1)");
  if (cfg.pitch.window < 64) throw InvalidArgument("pitch window too small");
  if (cfg.loudness.fft_size < 64 || cfg.mfcc.fft_size < 64)
    throw InvalidArgument("analysis fft sizes too small");
  if (cfg.mfcc.n_mels < cfg.mfcc.n_mfcc || cfg.mfcc.n_mfcc < 1)
    throw InvalidArgument("mfcc needs 1 <= n_mfcc <= n_mels");
  validate(cfg.loss);
  validate(cfg.train);
  if (cfg.train.clip_samples % cfg.hop() != 0)
    throw InvalidArgument("train.clip_samples must be a multiple of the hop");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InvalidArgument("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_kv(cfg, section.empty() ? key : section + "." + key, value);
  }
  // Analysis frame rates always follow the pipeline frame rate.
  cfg.pitch.frame_rate = cfg.frame_rate;
  cfg.loudness.frame_rate = cfg.frame_rate;
  cfg.mfcc.frame_rate = cfg.frame_rate;
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const PipelineConfig& c) {
  std::ostringstream os;
  os << "sample_rate = " << c.sample_rate << "\n";
  os << "frame_rate = " << format_double(c.frame_rate) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "p = " << format_double(c.p) << "\n";
  os << "\n[model]\n";
  os << "harmonics = " << c.K << "\n";
  os << "noise_bins = " << c.B << "\n";
  os << "hidden = " << c.hidden << "\n";
  os << "latent_width = " << c.latent_width << "\n";
  os << "\n[pitch]\n";
  os << "f0_min = " << format_double(c.pitch.f0_min) << "\n";
  os << "f0_max = " << format_double(c.pitch.f0_max) << "\n";
  os << "threshold = " << format_double(c.pitch.threshold) << "\n";
  os << "window = " << c.pitch.window << "\n";
  os << "\n[loudness]\n";
  os << "fft_size = " << c.loudness.fft_size << "\n";
  os << "floor_db = " << format_double(c.loudness.floor_db) << "\n";
  os << "\n[mfcc]\n";
  os << "fft_size = " << c.mfcc.fft_size << "\n";
  os << "n_mels = " << c.mfcc.n_mels << "\n";
  os << "n_mfcc = " << c.mfcc.n_mfcc << "\n";
  os << "\n[loss]\n";
  os << "fft_sizes = [";
  for (size_t i = 0; i < c.loss.fft_sizes.size(); ++i)
    os << (i ? ", " : "") << c.loss.fft_sizes[i];
  os << "]\n";
  os << "overlap = " << format_double(c.loss.overlap) << "\n";
  os << "log_weight = " << format_double(c.loss.log_weight) << "\n";
  os << "eps = " << format_double(c.loss.eps) << "\n";
  os << "\n[train]\n";
  os << "batch_size = " << c.train.batch_size << "\n";
  os << "clip_samples = " << c.train.clip_samples << "\n";
  os << "lr = " << format_double(c.train.lr) << "\n";
  os << "beta1 = " << format_double(c.train.beta1) << "\n";
  os << "beta2 = " << format_double(c.train.beta2) << "\n";
  os << "adam_eps = " << format_double(c.train.adam_eps) << "\n";
  os << "steps = " << c.train.steps << "\n";
  os << "checkpoint_every = " << c.train.checkpoint_every << "\n";
  return os.str();
}

std::uint64_t config_hash(const PipelineConfig& cfg) { return fnv1a64(dump_config(cfg)); }

}  // namespace hns
