#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delivr/bias.hpp"
#include "delivr/config.hpp"
#include "delivr/coords.hpp"
#include "delivr/io.hpp"
#include "delivr/so2.hpp"
#include "delivr/tensor.hpp"

namespace delivr {

/// Patchify a clip: [T,H,W,C] pixels -> [T*N, patch^2*C] rows, frame-major
/// tokens, patches row-major within each frame, pixels row-major within each
/// patch. The layout matches token_index everywhere.
template <class S>
std::vector<S> patchify(std::span<const float> clip, int t_frames, int h, int w, int c, int ps) {
  if (h % ps != 0 || w % ps != 0)
    throw ConfigError("patchify: frame size not divisible by patch size");
  const int gr = h / ps, gc = w / ps, n = gr * gc, psc = ps * ps * c;
  std::vector<S> out(static_cast<std::size_t>(t_frames) * n * psc);
  for (int t = 0; t < t_frames; ++t)
    for (int pr = 0; pr < gr; ++pr)
      for (int pc = 0; pc < gc; ++pc) {
        const std::size_t row = token_index(t, pr * gc + pc, n);
        S* dst = out.data() + row * psc;
        for (int i = 0; i < ps; ++i)
          for (int j = 0; j < ps; ++j)
            for (int ch = 0; ch < c; ++ch)
              *dst++ = static_cast<S>(
                  clip[((static_cast<std::size_t>(t) * h + pr * ps + i) * w + pc * ps + j) * c +
                       ch]);
      }
  return out;
}

/// Inverse of patchify for a single frame: [N, patch^2*C] -> [H,W,C].
template <class S>
std::vector<float> unpatchify(const std::vector<S>& rows, int h, int w, int c, int ps) {
  const int gr = h / ps, gc = w / ps, psc = ps * ps * c;
  std::vector<float> img(static_cast<std::size_t>(h) * w * c);
  for (int pr = 0; pr < gr; ++pr)
    for (int pc = 0; pc < gc; ++pc) {
      const S* src = rows.data() + static_cast<std::size_t>(pr * gc + pc) * psc;
      for (int i = 0; i < ps; ++i)
        for (int j = 0; j < ps; ++j)
          for (int ch = 0; ch < c; ++ch)
            img[((static_cast<std::size_t>(pr * ps + i)) * w + pc * ps + j) * c + ch] =
                static_cast<float>(*src++);
    }
  return img;
}

/// The DeLiVR-style restoration model: linear patch embedding, an SO(2) head
/// predicting one bounded angle per frame, biased pre-norm attention blocks
/// sharing a single fused spatiotemporal bias, and a linear center-frame
/// decoder. The bias path is part of the recorded graph, so gradients flow
/// from the loss back into the head through the exp-map coordinates.
template <class S>
class Model {
 public:
  struct Dims {
    int frames, height, width, channels;
    int patch, grid_rows, grid_cols, n_patches, psc, d, heads, layers;
  };

  struct Output {
    Tensor<S> pred;    // [N, patch^2*C], center frame in patch rows
    Tensor<S> angles;  // [T]
    bool angles_differentiable = false;
    std::vector<double> angle_values;  // diagnostics
    std::vector<double> velocities;    // |wrap(theta_t - theta_{t-1})|
    double b_space_norm = 0.0, b_time_norm = 0.0;
  };

  Model(const ModelConfig& mc, const BiasConfig& bc, int height, int width, int channels)
      : mc_(mc), bc_(bc) {
    mc_.validate();
    bc_.validate();
    if (height % mc.patch_size != 0 || width % mc.patch_size != 0)
      throw ConfigError("model: frame size not divisible by patch size");
    if (mc.frames % 2 == 0)
      throw ConfigError("model: frames must be odd so the center frame is defined");
    if (mc.width % 2 != 0) throw ConfigError("model: width must be even for the head MLP");
    dims_.frames = mc.frames;
    dims_.height = height;
    dims_.width = width;
    dims_.channels = channels;
    dims_.patch = mc.patch_size;
    dims_.grid_rows = height / mc.patch_size;
    dims_.grid_cols = width / mc.patch_size;
    dims_.n_patches = dims_.grid_rows * dims_.grid_cols;
    dims_.psc = mc.patch_size * mc.patch_size * channels;
    dims_.d = mc.width;
    dims_.heads = mc.heads;
    dims_.layers = mc.layers;
    init_params();
    init_constants();
  }

  const Dims& dims() const { return dims_; }
  const ModelConfig& model_config() const { return mc_; }
  const BiasConfig& bias_config() const { return bc_; }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  Output forward(Graph<S>& g, std::span<const float> clip,
                 const std::optional<std::vector<double>>& override_angles = {}) {
    const auto& dm = dims_;
    const std::size_t expected =
        static_cast<std::size_t>(dm.frames) * dm.height * dm.width * dm.channels;
    if (clip.size() != expected)
      throw ShapeError("forward: clip has " + std::to_string(clip.size()) +
                       " values, expected " + std::to_string(expected));
    const int t_frames = dm.frames, n = dm.n_patches, d = dm.d;

    auto x0 = g.constant({static_cast<std::size_t>(t_frames) * n,
                          static_cast<std::size_t>(dm.psc)},
                         patchify<S>(clip, t_frames, dm.height, dm.width, dm.channels, dm.patch));
    auto tokens = g.add_rowvec(g.matmul(x0, g.param(p("embed.w"))), g.param(p("embed.b")));

    Output out;

    // SO(2) head on the initial embeddings (one bounded angle per frame).
    if (override_angles) {
      if (static_cast<int>(override_angles->size()) != t_frames)
        throw ShapeError("forward: override angles length " +
                         std::to_string(override_angles->size()) + ", expected " +
                         std::to_string(t_frames));
      out.angles = g.constant_cast({static_cast<std::size_t>(t_frames)}, *override_angles);
      out.angles_differentiable = false;
    } else if (bc_.mode == BiasMode::none || mc_.theta_max == 0.0) {
      out.angles = g.constant({static_cast<std::size_t>(t_frames)},
                              std::vector<S>(t_frames, S(0)));
      out.angles_differentiable = false;
    } else {
      auto pooled = g.block_mean_rows(tokens, t_frames);  // [T, d]
      auto h1 = g.relu(g.add_rowvec(g.matmul(pooled, g.param(p("head.fc1.w"))),
                                    g.param(p("head.fc1.b"))));
      auto omega_raw = g.add_rowvec(g.matmul(h1, g.param(p("head.fc2.w"))),
                                    g.param(p("head.fc2.b")));  // [T, 1]
      auto flat = g.reshape(omega_raw, {static_cast<std::size_t>(t_frames)});
      out.angles = g.mul_scalar(g.tanh_(flat), static_cast<S>(mc_.theta_max));
      out.angles_differentiable = true;
    }

    // Bias construction inside the graph.
    Tensor<S> bias;
    std::shared_ptr<const std::vector<std::uint8_t>> blocked;
    if (bc_.mode != BiasMode::none) {
      auto cos_tok = g.broadcast_frames(g.cos_(out.angles), n);
      auto sin_tok = g.broadcast_frames(g.sin_(out.angles), n);
      auto bx = g.constant_cast({static_cast<std::size_t>(t_frames) * n}, base_x_);
      auto by = g.constant_cast({static_cast<std::size_t>(t_frames) * n}, base_y_);
      auto bz = g.constant_cast({static_cast<std::size_t>(t_frames) * n}, base_z_);
      auto cx = g.sub(g.mul(bx, cos_tok), g.mul(by, sin_tok));
      auto cy = g.add(g.mul(bx, sin_tok), g.mul(by, cos_tok));
      const Shape col{static_cast<std::size_t>(t_frames) * n, 1};
      auto coords = g.concat_cols({g.reshape(cx, col), g.reshape(cy, col), g.reshape(bz, col)});
      auto b_space = g.matmul(coords, g.transpose(coords));  // [TN, TN]
      bias = b_space;
      out.b_space_norm = frob(b_space.value());
      if (bc_.mode == BiasMode::space_time || bc_.mode == BiasMode::full) {
        auto colv = g.reshape(out.angles, {static_cast<std::size_t>(t_frames), 1});
        auto ones = g.constant({1, static_cast<std::size_t>(t_frames)},
                               std::vector<S>(t_frames, S(1)));
        auto tiled = g.matmul(colv, ones);  // theta_t over rows
        auto diff = g.sub(tiled, g.transpose(tiled));
        auto btime = g.mul_scalar(g.abs_(g.wrap_angle(diff)),
                                  static_cast<S>(-1.0 / bc_.params.kappa));
        out.b_time_norm = frob(btime.value());
        auto btime_tok = g.broadcast_frame_matrix(btime, n);
        bias = g.add(bias, g.mul_scalar(btime_tok, static_cast<S>(bc_.params.alpha)));
      }
      if (bc_.mode == BiasMode::full) {
        bias = g.mul(bias, g.constant_cast(bias.shape(), decay_tok_));
        if (bc_.params.mask_mode == MaskMode::hard) {
          blocked = blocked_tok_;
        } else {
          bias = g.mul(bias, g.constant_cast(bias.shape(), mask_tok_));
        }
      }
    }

    for (int l = 0; l < dims_.layers; ++l) tokens = block(g, tokens, l, bias, blocked);

    auto final_norm = g.layer_norm(tokens, g.param(p("final_ln.g")), g.param(p("final_ln.b")));
    auto center = g.slice_rows(final_norm, static_cast<std::size_t>(t_frames / 2) * n, n);
    out.pred = g.add_rowvec(g.matmul(center, g.param(p("decode.w"))), g.param(p("decode.b")));

    out.angle_values.resize(t_frames);
    for (int t = 0; t < t_frames; ++t)
      out.angle_values[t] = static_cast<double>(out.angles.value()[t]);
    out.velocities.resize(t_frames > 1 ? t_frames - 1 : 0);
    for (int t = 1; t < t_frames; ++t)
      out.velocities[t - 1] = std::abs(wrap_pi(out.angle_values[t] - out.angle_values[t - 1]));
    (void)d;
    return out;
  }

  /// Unfold decoder output rows into an H x W x C frame.
  std::vector<float> to_frame(const std::vector<S>& pred_rows) const {
    return unpatchify<S>(pred_rows, dims_.height, dims_.width, dims_.channels, dims_.patch);
  }

  void save(const std::string& path) const {
    std::vector<io::NamedTensorF32> out;
    out.reserve(params_.size());
    for (const auto& pr : params_) {
      io::NamedTensorF32 t;
      t.name = pr.name;
      t.shape = pr.shape;
      t.data.resize(pr.numel());
      for (std::size_t i = 0; i < pr.numel(); ++i) t.data[i] = static_cast<float>(pr.value[i]);
      out.push_back(std::move(t));
    }
    io::write_checkpoint(path, out);
  }

  void load(const std::string& path) {
    auto in = io::read_checkpoint(path);
    if (in.size() != params_.size())
      throw io::CorruptFile("checkpoint has " + std::to_string(in.size()) +
                            " parameters, model needs " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < in.size(); ++i) {
      auto& pr = params_[i];
      if (in[i].name != pr.name || in[i].shape != pr.shape)
        throw io::CorruptFile("checkpoint parameter mismatch at '" + in[i].name +
                              "' (expected '" + pr.name + "')");
      for (std::size_t k = 0; k < pr.numel(); ++k) pr.value[k] = static_cast<S>(in[i].data[k]);
    }
  }

 private:
  Param<S>& p(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter " + name);
    return params_[it->second];
  }

  Param<S>& add_param(const std::string& name, Shape shape) {
    params_.emplace_back(name, std::move(shape));
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  void uniform_init(Param<S>& pr, Rng& rng, double fan_in) {
    const double s = 1.0 / std::sqrt(fan_in);
    for (auto& v : pr.value) v = static_cast<S>(rng.uniform(-s, s));
  }

  void init_params() {
    Rng rng(derive_seed(mc_.seed, 101));
    const auto d = static_cast<std::size_t>(dims_.d);
    const auto psc = static_cast<std::size_t>(dims_.psc);
    uniform_init(add_param("embed.w", {psc, d}), rng, dims_.psc);
    add_param("embed.b", {d});
    uniform_init(add_param("head.fc1.w", {d, d / 2}), rng, dims_.d);
    add_param("head.fc1.b", {d / 2});
    add_param("head.fc2.w", {d / 2, 1});  // zero: training starts at identity rotations
    add_param("head.fc2.b", {1});
    for (int l = 0; l < dims_.layers; ++l) {
      const std::string pre = "block" + std::to_string(l) + ".";
      auto& ln1g = add_param(pre + "ln1.g", {d});
      std::fill(ln1g.value.begin(), ln1g.value.end(), S(1));
      add_param(pre + "ln1.b", {d});
      for (const char* nm : {"wq", "wk", "wv", "wo"}) {
        uniform_init(add_param(pre + nm + std::string(".w"), {d, d}), rng, dims_.d);
        add_param(pre + nm + std::string(".b"), {d});
      }
      auto& ln2g = add_param(pre + "ln2.g", {d});
      std::fill(ln2g.value.begin(), ln2g.value.end(), S(1));
      add_param(pre + "ln2.b", {d});
      uniform_init(add_param(pre + "ffn1.w", {d, 4 * d}), rng, dims_.d);
      add_param(pre + "ffn1.b", {4 * d});
      uniform_init(add_param(pre + "ffn2.w", {4 * d, d}), rng, 4.0 * dims_.d);
      add_param(pre + "ffn2.b", {d});
    }
    auto& fg = add_param("final_ln.g", {d});
    std::fill(fg.value.begin(), fg.value.end(), S(1));
    add_param("final_ln.b", {d});
    uniform_init(add_param("decode.w", {d, psc}), rng, dims_.d);
    add_param("decode.b", {psc});
  }

  void init_constants() {
    const int t_frames = dims_.frames, n = dims_.n_patches;
    const std::size_t tn = static_cast<std::size_t>(t_frames) * n;
    grid_ = build_grid(dims_.grid_rows, dims_.grid_cols);
    base_x_.resize(tn);
    base_y_.resize(tn);
    base_z_.resize(tn);
    for (int t = 0; t < t_frames; ++t)
      for (int i = 0; i < n; ++i) {
        const auto& pt = grid_.points[i];
        const std::size_t k = token_index(t, i, n);
        base_x_[k] = pt.x();
        base_y_[k] = pt.y();
        base_z_[k] = pt.z();
      }
    const auto decay = decay_matrix(t_frames, bc_.params.tau);
    const auto mask = band_mask(t_frames, bc_.params.delta);
    decay_tok_.resize(tn * tn);
    mask_tok_.resize(tn * tn);
    auto blocked = std::make_shared<std::vector<std::uint8_t>>(tn * tn, 0);
    for (int tf = 0; tf < t_frames; ++tf)
      for (int sf = 0; sf < t_frames; ++sf)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const std::size_t k = token_index(tf, i, n) * tn + token_index(sf, j, n);
            decay_tok_[k] = decay(tf, sf);
            mask_tok_[k] = mask(tf, sf);
            (*blocked)[k] = mask(tf, sf) == 0.0 ? 1 : 0;
          }
    blocked_tok_ = std::move(blocked);
  }

  Tensor<S> block(Graph<S>& g, Tensor<S> x, int l, Tensor<S> bias,
                  const std::shared_ptr<const std::vector<std::uint8_t>>& blocked) {
    const std::string pre = "block" + std::to_string(l) + ".";
    const std::size_t dh = static_cast<std::size_t>(dims_.d) / dims_.heads;
    auto a_in = g.layer_norm(x, g.param(p(pre + "ln1.g")), g.param(p(pre + "ln1.b")));
    auto q = g.add_rowvec(g.matmul(a_in, g.param(p(pre + "wq.w"))), g.param(p(pre + "wq.b")));
    auto k = g.add_rowvec(g.matmul(a_in, g.param(p(pre + "wk.w"))), g.param(p(pre + "wk.b")));
    auto v = g.add_rowvec(g.matmul(a_in, g.param(p(pre + "wv.w"))), g.param(p(pre + "wv.b")));
    std::vector<Tensor<S>> head_out;
    head_out.reserve(dims_.heads);
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int hh = 0; hh < dims_.heads; ++hh) {
      auto qh = g.slice_cols(q, hh * dh, dh);
      auto kh = g.slice_cols(k, hh * dh, dh);
      auto vh = g.slice_cols(v, hh * dh, dh);
      auto logits = g.mul_scalar(g.matmul(qh, g.transpose(kh)), scale);
      if (bias.valid()) logits = g.add(logits, bias);
      if (blocked) logits = g.mask_fill(logits, blocked, static_cast<S>(-1e9));
      head_out.push_back(g.matmul(g.softmax(logits), vh));
    }
    auto merged = dims_.heads == 1 ? head_out[0] : g.concat_cols(head_out);
    auto attn = g.add_rowvec(g.matmul(merged, g.param(p(pre + "wo.w"))),
                             g.param(p(pre + "wo.b")));
    x = g.add(x, attn);
    auto f_in = g.layer_norm(x, g.param(p(pre + "ln2.g")), g.param(p(pre + "ln2.b")));
    auto h1 = g.relu(
        g.add_rowvec(g.matmul(f_in, g.param(p(pre + "ffn1.w"))), g.param(p(pre + "ffn1.b"))));
    auto f_out =
        g.add_rowvec(g.matmul(h1, g.param(p(pre + "ffn2.w"))), g.param(p(pre + "ffn2.b")));
    return g.add(x, f_out);
  }

  static double frob(const std::vector<S>& v) {
    double acc = 0;
    for (S x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
  }

  ModelConfig mc_;
  BiasConfig bc_;
  Dims dims_{};
  std::deque<Param<S>> params_;
  std::map<std::string, std::size_t> index_;
  CoordGrid grid_;
  std::vector<double> base_x_, base_y_, base_z_;
  std::vector<double> decay_tok_, mask_tok_;
  std::shared_ptr<const std::vector<std::uint8_t>> blocked_tok_;
};

}  // namespace delivr
