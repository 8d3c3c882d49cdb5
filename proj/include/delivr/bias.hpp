#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "delivr/common.hpp"
#include "delivr/coords.hpp"
#include "delivr/so2.hpp"

namespace delivr {

enum class MaskMode { hard, hadamard };

inline std::string to_string(MaskMode m) { return m == MaskMode::hard ? "hard" : "hadamard"; }

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "hard") return MaskMode::hard;
  if (s == "hadamard") return MaskMode::hadamard;
  throw ConfigError("unknown mask_mode '" + s + "' (expected hard|hadamard)");
}

struct BiasParams {
  double alpha = 1.0;  // temporal weight
  double kappa = 1.0;  // angle scale
  double tau = 2.0;    // decay rate
  int delta = 2;       // band half-width
  MaskMode mask_mode = MaskMode::hard;
};

/// B_space[(t,i),(s,j)] = <p~_{t,i}, p~_{s,j}>, token-level Gram matrix of the
/// rotated coordinates. Frame-major flattening via token_index.
inline Eigen::MatrixXd spatial_bias(const RotatedCoords& rc) {
  const std::size_t tn = rc.points.size();
  Eigen::MatrixXd c(tn, 3);
  for (std::size_t k = 0; k < tn; ++k) c.row(k) = rc.points[k].transpose();
  return c * c.transpose();
}

/// B_time[t,s] = -angular_diff(R_t, R_s) / kappa. Zero diagonal, entries in [-pi/kappa, 0].
inline Eigen::MatrixXd temporal_bias(const std::vector<double>& angles, double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("temporal_bias: kappa must be > 0");
  const auto t = static_cast<Eigen::Index>(angles.size());
  Eigen::MatrixXd b(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < t; ++j)
      b(i, j) = -std::abs(wrap_pi(angles[j] - angles[i])) / kappa;
  return b;
}

/// D[t,s] = exp(-|t-s| / tau).
inline Eigen::MatrixXd decay_matrix(std::size_t frames, double tau) {
  if (!(tau > 0.0)) throw ConfigError("decay_matrix: tau must be > 0");
  const auto t = static_cast<Eigen::Index>(frames);
  Eigen::MatrixXd d(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < t; ++j)
      d(i, j) = std::exp(-std::abs(static_cast<double>(i - j)) / tau);
  return d;
}

/// M[t,s] = 1 iff |t-s| <= delta.
inline Eigen::MatrixXd band_mask(std::size_t frames, int delta) {
  if (delta < 0) throw ConfigError("band_mask: delta must be >= 0");
  const auto t = static_cast<Eigen::Index>(frames);
  Eigen::MatrixXd m(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < t; ++j)
      m(i, j) = std::abs(static_cast<long>(i - j)) <= delta ? 1.0 : 0.0;
  return m;
}

/// The five matrices of the fused mechanism plus their parameters.
/// b_total carries the literal fusion (B_space + alpha*B_time) . D . M at the
/// token level; whether out-of-band pairs are additionally hard-blocked at the
/// logits is the consumer's job (params.mask_mode).
struct BiasStack {
  std::size_t frames = 0, n = 0;
  Eigen::MatrixXd b_space;  // (T*N) x (T*N)
  Eigen::MatrixXd b_time;   // T x T
  Eigen::MatrixXd decay;    // T x T
  Eigen::MatrixXd mask;     // T x T, binary
  Eigen::MatrixXd b_total;  // (T*N) x (T*N)
  BiasParams params;

  bool blocked(std::size_t t, std::size_t s) const { return mask(t, s) == 0.0; }

  std::size_t blocked_token_pairs() const {
    std::size_t count = 0;
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t s = 0; s < frames; ++s)
        if (blocked(t, s)) count += n * n;
    return count;
  }
};

struct FusedBias {
  Eigen::MatrixXd b_total;                  // token level
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> blocked_tok;  // token level
};

/// Broadcast the frame-level factors over each N x N token block and fuse:
/// B_total[(t,i),(s,j)] = (B_space[(t,i),(s,j)] + alpha * B_time[t,s]) * D[t,s] * M[t,s].
inline FusedBias fuse_total(const Eigen::MatrixXd& b_space, const Eigen::MatrixXd& b_time,
                            const Eigen::MatrixXd& decay, const Eigen::MatrixXd& mask,
                            double alpha) {
  const Eigen::Index t = b_time.rows();
  if (b_time.cols() != t || decay.rows() != t || decay.cols() != t || mask.rows() != t ||
      mask.cols() != t)
    throw std::logic_error("fuse_total: frame-level shape mismatch");
  if (b_space.rows() != b_space.cols() || b_space.rows() % t != 0)
    throw std::logic_error("fuse_total: token-level shape mismatch");
  const Eigen::Index n = b_space.rows() / t;

  FusedBias out;
  out.b_total.resize(b_space.rows(), b_space.cols());
  out.blocked_tok.resize(b_space.rows(), b_space.cols());
  for (Eigen::Index tf = 0; tf < t; ++tf) {
    for (Eigen::Index sf = 0; sf < t; ++sf) {
      auto block = out.b_total.block(tf * n, sf * n, n, n);
      block = (b_space.block(tf * n, sf * n, n, n).array() + alpha * b_time(tf, sf)) *
              decay(tf, sf) * mask(tf, sf);
      out.blocked_tok.block(tf * n, sf * n, n, n).setConstant(mask(tf, sf) == 0.0);
    }
  }
  return out;
}

inline BiasStack build_bias_stack(const CoordGrid& grid, const std::vector<double>& angles,
                                  const BiasParams& params) {
  BiasStack st;
  st.frames = angles.size();
  st.n = grid.size();
  st.params = params;
  st.b_space = spatial_bias(rotate_coords(grid, angles));
  st.b_time = temporal_bias(angles, params.kappa);
  st.decay = decay_matrix(st.frames, params.tau);
  st.mask = band_mask(st.frames, params.delta);
  st.b_total = fuse_total(st.b_space, st.b_time, st.decay, st.mask, params.alpha).b_total;
  return st;
}

}  // namespace delivr
