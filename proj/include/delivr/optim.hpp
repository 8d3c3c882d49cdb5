#pragma once

#include <cmath>
#include <vector>

#include "delivr/common.hpp"
#include "delivr/tensor.hpp"

namespace delivr {

/// Cosine-annealed learning rate from lr0 down to lr_min over total_steps.
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
  if (total_steps == 0) return lr0;
  double s = std::min<double>(static_cast<double>(step), static_cast<double>(total_steps));
  double t = s / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(kPi * t));
}

/// AdamW: Adam moments with decoupled weight decay. weight_decay = 0 reduces
/// to plain Adam.
template <class S>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(const std::vector<Param<S>*>& params, Options opt = {})
      : params_(params), opt_(opt) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->numel(), S(0));
      v_[i].assign(params[i]->numel(), S(0));
    }
  }

  void step(double lr) {
    ++t_;
    const S b1 = static_cast<S>(opt_.beta1), b2 = static_cast<S>(opt_.beta2);
    const S bias1 = static_cast<S>(1.0 - std::pow(opt_.beta1, t_));
    const S bias2 = static_cast<S>(1.0 - std::pow(opt_.beta2, t_));
    const S eps = static_cast<S>(opt_.eps);
    const S wd = static_cast<S>(opt_.weight_decay);
    const S step_lr = static_cast<S>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      for (std::size_t k = 0; k < p.numel(); ++k) {
        S g = p.grad[k];
        m_[i][k] = b1 * m_[i][k] + (S(1) - b1) * g;
        v_[i][k] = b2 * v_[i][k] + (S(1) - b2) * g * g;
        S mhat = m_[i][k] / bias1;
        S vhat = v_[i][k] / bias2;
        p.value[k] -= step_lr * (mhat / (std::sqrt(vhat) + eps) + wd * p.value[k]);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Param<S>*> params_;
  Options opt_;
  std::vector<std::vector<S>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace delivr
