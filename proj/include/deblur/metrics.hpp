#pragma once

#include "deblur/tensor.hpp"

namespace deblur {

// Reported when the MSE is exactly zero, and as a general upper clamp so
// reports stay finite.
inline constexpr double kPsnrCap = 99.0;

// 10*log10(1/MSE) over all channels and pixels of [0,1] images.
double psnr(const Tensor& a, const Tensor& b);

// Single-scale SSIM on the luma channel (BT.601 weights for RGB input):
// 11x11 Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2, valid windowing.
double ssim(const Tensor& a, const Tensor& b);

// Five-level multi-scale SSIM with weights
// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333); requires min(H,W) >= 176.
double ms_ssim(const Tensor& a, const Tensor& b);

inline constexpr int kMsSsimLevels = 5;
inline constexpr int kMsSsimMinSide = 176;

} // namespace deblur
