#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "delivr/bias.hpp"
#include "delivr/common.hpp"
#include "delivr/synth.hpp"

namespace delivr {

/// Which bias components the model applies — the rows of the ablation.
enum class BiasMode { none, space, space_time, full };

inline std::string to_string(BiasMode m) {
  switch (m) {
    case BiasMode::none: return "none";
    case BiasMode::space: return "space";
    case BiasMode::space_time: return "space_time";
    case BiasMode::full: return "full";
  }
  return "?";
}
inline BiasMode bias_mode_from_string(const std::string& s) {
  if (s == "none") return BiasMode::none;
  if (s == "space") return BiasMode::space;
  if (s == "space_time") return BiasMode::space_time;
  if (s == "full") return BiasMode::full;
  throw ConfigError("unknown bias mode '" + s + "' (expected none|space|space_time|full)");
}

struct ModelConfig {
  int frames = 5;  // clip window length T
  int patch_size = 8;
  int width = 64;  // token width d
  int heads = 4;
  int layers = 4;
  double theta_max = 0.35;  // rotation bound, radians
  std::uint64_t seed = 1;

  void validate() const {
    if (frames < 1) throw ConfigError("model: frames must be >= 1");
    if (patch_size < 1 || width < 1 || heads < 1 || layers < 1)
      throw ConfigError("model: architecture sizes must be positive");
    if (width % heads != 0) throw ConfigError("model: width must be divisible by heads");
    // theta_max == 0 is the "head disabled" configuration (identity rotations)
    if (!(theta_max >= 0)) throw ConfigError("model: theta_max must be >= 0");
  }
};

struct BiasConfig {
  BiasMode mode = BiasMode::full;
  BiasParams params;  // alpha, kappa, tau, delta, mask_mode

  void validate() const {
    if (!(params.kappa > 0)) throw ConfigError("bias: kappa must be > 0");
    if (!(params.tau > 0)) throw ConfigError("bias: tau must be > 0");
    if (params.delta < 0) throw ConfigError("bias: delta must be >= 0");
  }
};

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  int train_clips = 64;
  int eval_clips = 8;
  int log_every = 50;
  double lr = 2e-4;
  double lr_min = 1e-6;
  double weight_decay = 0.0;
  double beta = 0.5;          // velocity-regularizer smoothness mix
  double lambda_theta = 0.02;
  double lambda_v = 0.02;

  void validate() const {
    if (steps < 0 || batch < 1 || train_clips < 1 || eval_clips < 1 || log_every < 1)
      throw ConfigError("train: non-positive budget field");
    if (!(lr > 0) || lr_min < 0 || weight_decay < 0)
      throw ConfigError("train: bad learning-rate or decay value");
    if (!(beta >= 0 && beta <= 1)) throw ConfigError("train: beta must be in [0,1]");
    if (lambda_theta < 0 || lambda_v < 0) throw ConfigError("train: negative loss weight");
  }
};

struct RunConfig {
  ModelConfig model;
  BiasConfig bias;
  synth::SynthConfig synth;
  TrainConfig train;

  void validate() const {
    model.validate();
    bias.validate();
    train.validate();
    auto s = synth;
    s.frames = model.frames;  // window length is owned by the model section
    s.validate();
    if (s.height % model.patch_size != 0 || s.width % model.patch_size != 0)
      throw ConfigError("synth frame size must be divisible by model.patch_size");
  }

  /// Synth config with the window length filled in from the model section.
  synth::SynthConfig synth_effective() const {
    auto s = synth;
    s.frames = model.frames;
    return s;
  }
};

namespace cfgdetail {

using ordered_json = nlohmann::ordered_json;

struct SectionReader {
  const ordered_json& j;
  std::string section;
  std::vector<std::string> known;

  template <class T>
  void read(const char* key, T& out) {
    known.emplace_back(key);
    if (j.contains(key)) j.at(key).get_to(out);
  }
  void read_str(const char* key, std::string& out) {
    known.emplace_back(key);
    if (j.contains(key)) out = j.at(key).get<std::string>();
  }
  void finish() const {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw ConfigError("unknown key '" + it.key() + "' in section [" + section + "]");
    }
  }
};

}  // namespace cfgdetail

inline nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["model"] = {{"frames", cfg.model.frames},       {"patch_size", cfg.model.patch_size},
                {"width", cfg.model.width},         {"heads", cfg.model.heads},
                {"layers", cfg.model.layers},       {"theta_max", cfg.model.theta_max},
                {"seed", cfg.model.seed}};
  j["bias"] = {{"mode", to_string(cfg.bias.mode)},
               {"alpha", cfg.bias.params.alpha},
               {"kappa", cfg.bias.params.kappa},
               {"tau", cfg.bias.params.tau},
               {"delta", cfg.bias.params.delta},
               {"mask_mode", to_string(cfg.bias.params.mask_mode)}};
  j["synth"] = {{"height", cfg.synth.height},
                {"width", cfg.synth.width},
                {"channels", cfg.synth.channels},
                {"octaves", cfg.synth.octaves},
                {"rotation_model", synth::to_string(cfg.synth.rotation_model)},
                {"max_angular_velocity", cfg.synth.max_angular_velocity},
                {"rotation_clamp", cfg.synth.rotation_clamp},
                {"streak_density", cfg.synth.streak_density},
                {"streak_length", cfg.synth.streak_length},
                {"streak_width", cfg.synth.streak_width},
                {"streak_intensity", cfg.synth.streak_intensity},
                {"streak_drift", cfg.synth.streak_drift},
                {"noise_sigma", cfg.synth.noise_sigma},
                {"fixed_base_seed", cfg.synth.fixed_base_seed}};
  j["train"] = {{"steps", cfg.train.steps},
                {"batch", cfg.train.batch},
                {"train_clips", cfg.train.train_clips},
                {"eval_clips", cfg.train.eval_clips},
                {"log_every", cfg.train.log_every},
                {"lr", cfg.train.lr},
                {"lr_min", cfg.train.lr_min},
                {"weight_decay", cfg.train.weight_decay},
                {"beta", cfg.train.beta},
                {"lambda_theta", cfg.train.lambda_theta},
                {"lambda_v", cfg.train.lambda_v}};
  return j;
}

inline RunConfig config_from_json(const nlohmann::ordered_json& j) {
  RunConfig cfg;
  static const std::vector<std::string> sections = {"model", "bias", "synth", "train"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(sections.begin(), sections.end(), it.key()) == sections.end())
      throw ConfigError("unknown config section [" + it.key() + "]");
    if (!it.value().is_object())
      throw ConfigError("config section [" + it.key() + "] must be an object");
  }
  if (j.contains("model")) {
    cfgdetail::SectionReader r{j.at("model"), "model", {}};
    r.read("frames", cfg.model.frames);
    r.read("patch_size", cfg.model.patch_size);
    r.read("width", cfg.model.width);
    r.read("heads", cfg.model.heads);
    r.read("layers", cfg.model.layers);
    r.read("theta_max", cfg.model.theta_max);
    r.read("seed", cfg.model.seed);
    r.finish();
  }
  if (j.contains("bias")) {
    cfgdetail::SectionReader r{j.at("bias"), "bias", {}};
    std::string mode = to_string(cfg.bias.mode), mask = to_string(cfg.bias.params.mask_mode);
    r.read_str("mode", mode);
    r.read("alpha", cfg.bias.params.alpha);
    r.read("kappa", cfg.bias.params.kappa);
    r.read("tau", cfg.bias.params.tau);
    r.read("delta", cfg.bias.params.delta);
    r.read_str("mask_mode", mask);
    r.finish();
    cfg.bias.mode = bias_mode_from_string(mode);
    cfg.bias.params.mask_mode = mask_mode_from_string(mask);
  }
  if (j.contains("synth")) {
    cfgdetail::SectionReader r{j.at("synth"), "synth", {}};
    std::string rot = synth::to_string(cfg.synth.rotation_model);
    r.read("height", cfg.synth.height);
    r.read("width", cfg.synth.width);
    r.read("channels", cfg.synth.channels);
    r.read("octaves", cfg.synth.octaves);
    r.read_str("rotation_model", rot);
    r.read("max_angular_velocity", cfg.synth.max_angular_velocity);
    r.read("rotation_clamp", cfg.synth.rotation_clamp);
    r.read("streak_density", cfg.synth.streak_density);
    r.read("streak_length", cfg.synth.streak_length);
    r.read("streak_width", cfg.synth.streak_width);
    r.read("streak_intensity", cfg.synth.streak_intensity);
    r.read("streak_drift", cfg.synth.streak_drift);
    r.read("noise_sigma", cfg.synth.noise_sigma);
    r.read("fixed_base_seed", cfg.synth.fixed_base_seed);
    r.finish();
    cfg.synth.rotation_model = synth::rotation_model_from_string(rot);
  }
  if (j.contains("train")) {
    cfgdetail::SectionReader r{j.at("train"), "train", {}};
    r.read("steps", cfg.train.steps);
    r.read("batch", cfg.train.batch);
    r.read("train_clips", cfg.train.train_clips);
    r.read("eval_clips", cfg.train.eval_clips);
    r.read("log_every", cfg.train.log_every);
    r.read("lr", cfg.train.lr);
    r.read("lr_min", cfg.train.lr_min);
    r.read("weight_decay", cfg.train.weight_decay);
    r.read("beta", cfg.train.beta);
    r.read("lambda_theta", cfg.train.lambda_theta);
    r.read("lambda_v", cfg.train.lambda_v);
    r.finish();
  }
  cfg.validate();
  return cfg;
}

inline std::string config_dump(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// FNV-1a over the canonical serialization.
inline std::string config_hash(const RunConfig& cfg) {
  const std::string s = config_dump(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Markdown reference for every config key and its default.
inline std::string config_reference_markdown() {
  const RunConfig d;
  std::ostringstream os;
  os << "# Configuration reference\n\n"
     << "A run configuration is a JSON file with four sections: `model`, `bias`,\n"
     << "`synth`, `train`. Missing keys take the defaults below; unknown keys are\n"
     << "rejected. The clip window length is always `model.frames`; the synth\n"
     << "section deliberately has no frame-count key.\n\n";
  auto row = [&os](const std::string& key, const std::string& def, const std::string& doc) {
    os << "| `" << key << "` | " << def << " | " << doc << " |\n";
  };
  auto head = [&os](const std::string& section) {
    os << "## [" << section << "]\n\n| key | default | meaning |\n|---|---|---|\n";
  };
  auto num = [](double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };
  head("model");
  row("frames", num(d.model.frames), "clip window length T");
  row("patch_size", num(d.model.patch_size), "square patch edge in pixels");
  row("width", num(d.model.width), "token width d");
  row("heads", num(d.model.heads), "attention heads (must divide width)");
  row("layers", num(d.model.layers), "transformer blocks");
  row("theta_max", num(d.model.theta_max), "rotation bound in radians");
  row("seed", num(static_cast<double>(d.model.seed)), "master seed for init and data");
  os << "\n";
  head("bias");
  row("mode", to_string(d.bias.mode), "none | space | space_time | full (ablation rows)");
  row("alpha", num(d.bias.params.alpha), "temporal bias weight");
  row("kappa", num(d.bias.params.kappa), "angular difference scale");
  row("tau", num(d.bias.params.tau), "temporal decay rate");
  row("delta", num(d.bias.params.delta), "band half-width in frames");
  row("mask_mode", to_string(d.bias.params.mask_mode),
      "hard (block out-of-band logits) | hadamard (zero the bias only)");
  os << "\n";
  head("synth");
  row("height", num(d.synth.height), "frame height in pixels");
  row("width", num(d.synth.width), "frame width in pixels");
  row("channels", num(d.synth.channels), "1 (grayscale) or 3 (RGB)");
  row("octaves", num(d.synth.octaves), "value-noise octaves of the base texture");
  row("rotation_model", synth::to_string(d.synth.rotation_model),
      "constant_velocity | random_walk");
  row("max_angular_velocity", num(d.synth.max_angular_velocity),
      "rad/frame: walk step std, or |omega| bound for constant velocity");
  row("rotation_clamp", num(d.synth.rotation_clamp), "clamp on |theta| in radians");
  row("streak_density", num(d.synth.streak_density), "rain streaks per 1024 pixels");
  row("streak_length", num(d.synth.streak_length), "mean streak length in pixels");
  row("streak_width", num(d.synth.streak_width), "streak half-width in pixels");
  row("streak_intensity", num(d.synth.streak_intensity), "additive streak brightness");
  row("streak_drift", num(d.synth.streak_drift), "streak angle drift per frame, radians");
  row("noise_sigma", num(d.synth.noise_sigma), "Gaussian pixel noise std");
  row("fixed_base_seed", num(static_cast<double>(d.synth.fixed_base_seed)),
      ">= 0 shares one base texture across clips; -1 derives it per clip");
  os << "\n";
  head("train");
  row("steps", num(d.train.steps), "optimizer steps");
  row("batch", num(d.train.batch), "clips per step");
  row("train_clips", num(d.train.train_clips), "size of the training pool");
  row("eval_clips", num(d.train.eval_clips), "held-out clips (disjoint seeds)");
  row("log_every", num(d.train.log_every), "steps between report snapshots");
  row("lr", num(d.train.lr), "initial learning rate");
  row("lr_min", num(d.train.lr_min), "cosine-annealed floor");
  row("weight_decay", num(d.train.weight_decay), "AdamW decoupled weight decay");
  row("beta", num(d.train.beta), "velocity regularizer smoothness mix in [0,1]");
  row("lambda_theta", num(d.train.lambda_theta), "rotation regularizer weight");
  row("lambda_v", num(d.train.lambda_v), "velocity regularizer weight");
  os << "\n";
  return os.str();
}

}  // namespace delivr
