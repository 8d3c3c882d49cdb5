#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "delivr/common.hpp"
#include "delivr/io.hpp"

namespace delivr::synth {

enum class RotationModel { constant_velocity, random_walk };

inline std::string to_string(RotationModel m) {
  return m == RotationModel::constant_velocity ? "constant_velocity" : "random_walk";
}
inline RotationModel rotation_model_from_string(const std::string& s) {
  if (s == "constant_velocity") return RotationModel::constant_velocity;
  if (s == "random_walk") return RotationModel::random_walk;
  throw ConfigError("unknown rotation model '" + s + "'");
}

struct SynthConfig {
  int height = 32, width = 32, frames = 5, channels = 1;
  int octaves = 3;
  RotationModel rotation_model = RotationModel::random_walk;
  double max_angular_velocity = 0.02;  // rad/frame: walk step std or |omega| bound
  double rotation_clamp = 0.3;         // |theta| bound, radians
  double streak_density = 12.0;        // streaks per 1024 pixels
  double streak_length = 10.0;         // pixels
  double streak_width = 1.2;           // pixels
  double streak_intensity = 0.5;
  double streak_drift = 0.06;          // rad/frame drift of the streak angle
  double noise_sigma = 0.02;
  std::int64_t fixed_base_seed = -1;   // >= 0: all clips share one base texture

  void validate() const {
    if (height <= 0 || width <= 0 || frames <= 0 || (channels != 1 && channels != 3))
      throw ConfigError("synth: degenerate clip dimensions");
    if (octaves < 1 || octaves > 8) throw ConfigError("synth: octaves must be in [1,8]");
    if (max_angular_velocity < 0 || rotation_clamp < 0 || streak_density < 0 ||
        streak_length <= 0 || streak_width <= 0 || streak_intensity < 0 || noise_sigma < 0)
      throw ConfigError("synth: negative or zero scale parameter");
  }
};

struct ClipSample {
  int frames = 0, height = 0, width = 0, channels = 0;
  std::vector<float> rainy;         // T*H*W*C, values in [0,1]
  std::vector<float> clean_center;  // H*W*C
  std::vector<double> true_angles;  // T
  double streak_angle = 0.0;        // base streak orientation
  std::uint64_t seed = 0;

  int center() const { return frames / 2; }
};

namespace detail {

/// Multi-octave value noise in [0.05, 0.95].
inline std::vector<double> base_texture(int h, int w, int octaves, Rng& rng) {
  std::vector<double> img(static_cast<std::size_t>(h) * w, 0.0);
  double amp = 1.0;
  for (int o = 0; o < octaves; ++o, amp *= 0.5) {
    const int g = 4 << o;  // lattice cells per side
    std::vector<double> lattice(static_cast<std::size_t>(g + 1) * (g + 1));
    for (auto& v : lattice) v = rng.uniform01();
    for (int r = 0; r < h; ++r) {
      double fy = (r + 0.5) / h * g;
      int y0 = std::min(static_cast<int>(fy), g - 1);
      double wy = fy - y0;
      for (int c = 0; c < w; ++c) {
        double fx = (c + 0.5) / w * g;
        int x0 = std::min(static_cast<int>(fx), g - 1);
        double wx = fx - x0;
        double v00 = lattice[y0 * (g + 1) + x0], v01 = lattice[y0 * (g + 1) + x0 + 1];
        double v10 = lattice[(y0 + 1) * (g + 1) + x0], v11 = lattice[(y0 + 1) * (g + 1) + x0 + 1];
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        img[static_cast<std::size_t>(r) * w + c] += amp * v;
      }
    }
  }
  double lo = img[0], hi = img[0];
  for (double v : img) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span = hi - lo;
  for (auto& v : img) v = span > 0 ? 0.05 + 0.9 * (v - lo) / span : 0.5;
  return img;
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

/// Rotate about the image center with bilinear sampling and reflect padding.
inline std::vector<double> rotate_image(const std::vector<double>& src, int h, int w,
                                        double theta) {
  std::vector<double> dst(src.size());
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double c = std::cos(theta), s = std::sin(theta);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      // inverse map: source = R(-theta) * (dst - center) + center
      double dx = col - cx, dy = r - cy;
      double sx = c * dx + s * dy + cx;
      double sy = -s * dx + c * dy + cy;
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      double wx = sx - x0, wy = sy - y0;
      auto at = [&](int yy, int xx) {
        return src[static_cast<std::size_t>(reflect_index(yy, h)) * w + reflect_index(xx, w)];
      };
      dst[static_cast<std::size_t>(r) * w + col] =
          (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
          wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
    }
  }
  return dst;
}

/// Additive rain streak: a soft-edged line segment.
inline void stamp_streak(std::vector<double>& img, int h, int w, double cx, double cy,
                         double angle, double length, double width, double intensity) {
  // direction measured from vertical (rain falls downward)
  const double dx = std::sin(angle), dy = std::cos(angle);
  const double half = length / 2.0;
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half - width - 1)));
  const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + half + width + 1)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half - width - 1)));
  const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + half + width + 1)));
  for (int r = y_lo; r <= y_hi; ++r) {
    for (int col = x_lo; col <= x_hi; ++col) {
      double px = col - cx, py = r - cy;
      double along = px * dx + py * dy;
      if (std::abs(along) > half) continue;
      double perp = px * dy - py * dx;
      double fall = 1.0 - (perp / width) * (perp / width);
      if (fall <= 0) continue;
      img[static_cast<std::size_t>(r) * w + col] += intensity * fall;
    }
  }
}

}  // namespace detail

inline std::vector<double> sample_angles(const SynthConfig& cfg, Rng& rng) {
  std::vector<double> angles(cfg.frames, 0.0);
  if (cfg.rotation_model == RotationModel::constant_velocity) {
    double omega = rng.uniform(-cfg.max_angular_velocity, cfg.max_angular_velocity);
    double mid = (cfg.frames - 1) / 2.0;
    for (int t = 0; t < cfg.frames; ++t) angles[t] = (t - mid) * omega;
  } else {
    double theta = 0.0;
    for (int t = 0; t < cfg.frames; ++t) {
      if (t > 0) theta += rng.normal(0.0, cfg.max_angular_velocity);
      theta = std::clamp(theta, -cfg.rotation_clamp, cfg.rotation_clamp);
      angles[t] = theta;
    }
  }
  return angles;
}

/// Deterministic per (config, seed): base texture, per-frame rotation, rain
/// streaks with frame-coupled orientation, then pixel noise. The clean target
/// is the rotated center frame before any degradation.
inline ClipSample generate_clip(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int h = cfg.height, w = cfg.width, t_frames = cfg.frames, ch = cfg.channels;

  Rng base_rng(cfg.fixed_base_seed >= 0
                   ? derive_seed(static_cast<std::uint64_t>(cfg.fixed_base_seed), 11)
                   : derive_seed(seed, 11));
  Rng rot_rng(derive_seed(seed, 23));
  Rng streak_rng(derive_seed(seed, 37));
  Rng noise_rng(derive_seed(seed, 53));

  ClipSample clip;
  clip.frames = t_frames;
  clip.height = h;
  clip.width = w;
  clip.channels = ch;
  clip.seed = seed;
  clip.rainy.resize(static_cast<std::size_t>(t_frames) * h * w * ch);
  clip.clean_center.resize(static_cast<std::size_t>(h) * w * ch);

  const auto base = detail::base_texture(h, w, cfg.octaves, base_rng);
  clip.true_angles = sample_angles(cfg, rot_rng);
  clip.streak_angle = streak_rng.uniform(-kPi / 4.0, kPi / 4.0);

  const int streak_count =
      static_cast<int>(std::lround(cfg.streak_density * (static_cast<double>(h) * w) / 1024.0));

  for (int t = 0; t < t_frames; ++t) {
    auto frame = detail::rotate_image(base, h, w, clip.true_angles[t]);
    if (t == clip.center()) {
      for (int i = 0; i < h * w; ++i)
        for (int c = 0; c < ch; ++c)
          clip.clean_center[static_cast<std::size_t>(i) * ch + c] =
              static_cast<float>(std::clamp(frame[i], 0.0, 1.0));
    }
    for (int k = 0; k < streak_count; ++k) {
      double cx = streak_rng.uniform(0.0, w - 1.0);
      double cy = streak_rng.uniform(0.0, h - 1.0);
      double angle = clip.streak_angle + cfg.streak_drift * t + 0.05 * streak_rng.normal();
      double length = cfg.streak_length * streak_rng.uniform(0.7, 1.3);
      double intensity = cfg.streak_intensity * streak_rng.uniform(0.6, 1.0);
      detail::stamp_streak(frame, h, w, cx, cy, angle, length, cfg.streak_width, intensity);
    }
    for (int i = 0; i < h * w; ++i) {
      for (int c = 0; c < ch; ++c) {
        double v = frame[i];
        if (cfg.noise_sigma > 0) v += noise_rng.normal(0.0, cfg.noise_sigma);
        clip.rainy[(static_cast<std::size_t>(t) * h * w + i) * ch + c] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return clip;
}

inline io::ClipRecord to_record(const ClipSample& clip, const std::string& config_echo) {
  io::ClipRecord r;
  r.config_echo = config_echo;
  r.t = static_cast<std::uint32_t>(clip.frames);
  r.h = static_cast<std::uint32_t>(clip.height);
  r.w = static_cast<std::uint32_t>(clip.width);
  r.c = static_cast<std::uint32_t>(clip.channels);
  r.rainy = clip.rainy;
  r.clean_center = clip.clean_center;
  r.true_angles.assign(clip.true_angles.begin(), clip.true_angles.end());
  r.streak_angle = static_cast<float>(clip.streak_angle);
  r.seed = clip.seed;
  return r;
}

inline ClipSample from_record(const io::ClipRecord& r) {
  ClipSample clip;
  clip.frames = static_cast<int>(r.t);
  clip.height = static_cast<int>(r.h);
  clip.width = static_cast<int>(r.w);
  clip.channels = static_cast<int>(r.c);
  clip.rainy = r.rainy;
  clip.clean_center = r.clean_center;
  clip.true_angles.assign(r.true_angles.begin(), r.true_angles.end());
  clip.streak_angle = r.streak_angle;
  clip.seed = r.seed;
  return clip;
}

}  // namespace delivr::synth
