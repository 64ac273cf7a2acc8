#pragma once

#include "pmcr/tensor.hpp"

namespace pmcr {

// Peak signal-to-noise ratio in dB over [0,1] images (both inputs are
// clamped to [0,1] first). Identical images report the 99 dB cap.
template <class T>
double psnr(const TensorT<T>& pred, const TensorT<T>& gt);

// Single-scale structural similarity: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range, computed per channel over
// valid window positions and averaged.
template <class T>
double ssim(const TensorT<T>& pred, const TensorT<T>& gt);

// Root-mean-squared intensity difference on the 0..255 scale.
template <class T>
double interpolation_error(const TensorT<T>& pred, const TensorT<T>& gt);

}  // namespace pmcr
