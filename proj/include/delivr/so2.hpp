#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "delivr/common.hpp"

namespace delivr {

using Mat2 = Eigen::Matrix2d;

namespace detail {
inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw ValidationError(std::string(what) + ": non-finite value");
}
}  // namespace detail

/// hat: angle -> 2x2 skew-symmetric algebra element [[0, -t], [t, 0]].
inline Mat2 hat(double theta) {
  detail::require_finite(theta, "hat");
  Mat2 m;
  m << 0.0, -theta, theta, 0.0;
  return m;
}

/// vee: inverse of hat. Exact for matrices produced by hat().
inline double vee(const Mat2& m) { return (m(1, 0) - m(0, 1)) / 2.0; }

/// Planar rotation stored as its canonical angle in (-pi, pi].
/// The 2x2 matrix is a derived view, so group invariants (orthogonality,
/// unit determinant) hold by construction and never drift under composition.
class Rotation2 {
 public:
  Rotation2() = default;

  static Rotation2 from_angle(double theta) {
    detail::require_finite(theta, "Rotation2::from_angle");
    return Rotation2(wrap_pi(theta));
  }

  static Rotation2 identity() { return Rotation2(); }

  double angle() const { return angle_; }

  Mat2 matrix() const {
    double c = std::cos(angle_), s = std::sin(angle_);
    Mat2 m;
    m << c, -s, s, c;
    return m;
  }

  Rotation2 inverse() const { return Rotation2(wrap_pi(-angle_)); }

  Rotation2 operator*(const Rotation2& rhs) const {
    return Rotation2(wrap_pi(angle_ + rhs.angle_));
  }

 private:
  explicit Rotation2(double canonical) : angle_(canonical) {}
  double angle_ = 0.0;
};

/// Exponential map so(2) -> SO(2) for a scalar algebra element.
inline Rotation2 exp_so2(double theta) {
  detail::require_finite(theta, "exp_so2");
  return Rotation2::from_angle(theta);
}

/// Logarithm map, principal branch (-pi, pi].
inline double log_so2(const Rotation2& r) { return r.angle(); }

/// Logarithm from a raw matrix; rejects matrices that are not rotations.
inline double log_so2(const Mat2& m, double tol = 1e-9) {
  Mat2 gram = m.transpose() * m;
  double ortho_err = (gram - Mat2::Identity()).cwiseAbs().maxCoeff();
  double det_err = std::abs(m.determinant() - 1.0);
  if (!std::isfinite(ortho_err) || ortho_err > tol || det_err > tol) {
    throw ValidationError("log_so2: matrix is not a rotation (orthogonality residual " +
                          std::to_string(ortho_err) + ", det residual " +
                          std::to_string(det_err) + ")");
  }
  return std::atan2(m(1, 0), m(0, 0));
}

/// Unconstrained head output plus the rotation bound.
struct TangentParam {
  double omega_raw = 0.0;
  double theta_max = 0.35;  // radians
};

/// Soft bound: theta_max * tanh(omega_raw). Strictly inside (-theta_max, theta_max),
/// smooth and monotone in omega_raw.
inline double bounded_angle(double omega_raw, double theta_max) {
  if (!(theta_max > 0.0)) throw ConfigError("bounded_angle: theta_max must be > 0");
  detail::require_finite(omega_raw, "bounded_angle");
  return theta_max * std::tanh(omega_raw);
}

inline double bounded_angle(const TangentParam& p) {
  return bounded_angle(p.omega_raw, p.theta_max);
}

/// Relative rotation ra^T * rb.
inline Rotation2 rel_rotation(const Rotation2& ra, const Rotation2& rb) {
  return Rotation2::from_angle(rb.angle() - ra.angle());
}

/// Geodesic angular distance |log(ra^T rb)|, in [0, pi]. Symmetric.
inline double angular_diff(const Rotation2& ra, const Rotation2& rb) {
  return std::abs(wrap_pi(rb.angle() - ra.angle()));
}

/// Lie-velocity sequence v_t = angular_diff(R_{t-1}, R_t), t = 2..T.
inline std::vector<double> velocity_sequence(const std::vector<Rotation2>& rotations) {
  if (rotations.size() < 2)
    throw std::invalid_argument("velocity_sequence: need at least 2 rotations");
  std::vector<double> v(rotations.size() - 1);
  for (std::size_t t = 1; t < rotations.size(); ++t)
    v[t - 1] = angular_diff(rotations[t - 1], rotations[t]);
  return v;
}

/// (1-beta) * mean(v_t) + beta * mean(|v_t - v_{t-1}|).
/// The smoothness mean is over consecutive pairs and is 0 for a single element.
inline double velocity_reg(const std::vector<double>& v, double beta) {
  if (v.empty()) throw std::invalid_argument("velocity_reg: empty sequence");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("velocity_reg: beta must be in [0,1]");
  double mean_v = 0.0;
  for (double x : v) mean_v += x;
  mean_v /= static_cast<double>(v.size());
  double mean_dv = 0.0;
  if (v.size() > 1) {
    for (std::size_t i = 1; i < v.size(); ++i) mean_dv += std::abs(v[i] - v[i - 1]);
    mean_dv /= static_cast<double>(v.size() - 1);
  }
  return (1.0 - beta) * mean_v + beta * mean_dv;
}

/// Rotation magnitude regularizer: mean of squared angles.
inline double rotation_reg(const std::vector<double>& angles) {
  if (angles.empty()) throw std::invalid_argument("rotation_reg: empty sequence");
  double acc = 0.0;
  for (double a : angles) acc += a * a;
  return acc / static_cast<double>(angles.size());
}

}  // namespace delivr
