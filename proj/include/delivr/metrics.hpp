#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "delivr/common.hpp"

namespace delivr {

/// PSNR in dB for unit-range images. Identical images return +inf.
inline double psnr(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("psnr: size mismatch or empty input");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_kernel_11() {
  std::vector<double> k(11);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    double x = i - 5;
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

inline std::vector<double> to_luma(std::span<const float> img, std::size_t h, std::size_t w,
                                   std::size_t c) {
  std::vector<double> out(h * w);
  if (c == 1) {
    for (std::size_t i = 0; i < h * w; ++i) out[i] = img[i];
  } else if (c == 3) {
    for (std::size_t i = 0; i < h * w; ++i)
      out[i] = 0.299 * img[3 * i] + 0.587 * img[3 * i + 1] + 0.114 * img[3 * i + 2];
  } else {
    throw std::invalid_argument("ssim: only 1- or 3-channel images supported");
  }
  return out;
}

/// Separable valid-region Gaussian filter. Output has size
/// (h-10) x (w-10), anchored so out(0,0) covers input rows/cols [0,11).
inline std::vector<double> gauss_valid(const std::vector<double>& img, std::size_t h,
                                       std::size_t w) {
  static const std::vector<double> k = gaussian_kernel_11();
  const std::size_t oh = h - 10, ow = w - 10;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * img[r * w + c + i];
      tmp[r * ow + c] = acc;
    }
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * tmp[(r + i) * ow + c];
      out[r * ow + c] = acc;
    }
  return out;
}

}  // namespace detail

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1. Multi-channel images are converted to luma first.
/// The mean is taken over positions where the full window fits.
inline double ssim(std::span<const float> pred, std::span<const float> target, std::size_t h,
                   std::size_t w, std::size_t c) {
  if (pred.size() != target.size() || pred.size() != h * w * c)
    throw std::invalid_argument("ssim: size mismatch");
  if (h < 11 || w < 11) throw std::invalid_argument("ssim: image smaller than 11x11 window");
  const auto x = detail::to_luma(pred, h, w, c);
  const auto y = detail::to_luma(target, h, w, c);

  auto mul = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
  };

  const auto mu_x = detail::gauss_valid(x, h, w);
  const auto mu_y = detail::gauss_valid(y, h, w);
  const auto xx = detail::gauss_valid(mul(x, x), h, w);
  const auto yy = detail::gauss_valid(mul(y, y), h, w);
  const auto xy = detail::gauss_valid(mul(x, y), h, w);

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    double vx = xx[i] - mu_x[i] * mu_x[i];
    double vy = yy[i] - mu_y[i] * mu_y[i];
    double cxy = xy[i] - mu_x[i] * mu_y[i];
    double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cxy + c2);
    double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_x.size());
}

/// Pearson correlation; 0 when either side has (numerically) no variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("pearson: size mismatch or empty");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa < 1e-18 || sbb < 1e-18) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace delivr
