#pragma once

#include <vector>

#include "pmcr/tensor.hpp"

namespace pmcr {

// Image pyramid: level 0 is the input, each further level halves both
// spatial dims via 2x2 average pooling.
template <class T>
struct ImagePyramidT {
  std::vector<TensorT<T>> levels;
};

using ImagePyramid = ImagePyramidT<float>;

struct CropRecord {
  int orig_h = 0;
  int orig_w = 0;
  int padded_h = 0;
  int padded_w = 0;
};

// Bilinear backward warp: out(p) = x sampled at p + flow(p). flow is
// (n,2,h,w) with channel 0 = +x displacement in pixels, channel 1 = +y.
// Out-of-range samples clamp to the border. Differentiable in x and flow.
template <class T>
TensorT<T> backward_warp(const TensorT<T>& x, const TensorT<T>& flow);

// 2x2 average pooling; h and w must be even.
template <class T>
TensorT<T> avg_downsample2x(const TensorT<T>& x);

template <class T>
ImagePyramidT<T> build_pyramid(const TensorT<T>& image, int levels = 4);

// Pads bottom/right by symmetric reflection up to the next multiple of m;
// crop_back inverts exactly.
template <class T>
TensorT<T> pad_to_multiple(const TensorT<T>& image, int m, CropRecord& rec);
template <class T>
TensorT<T> crop_back(const TensorT<T>& x, const CropRecord& rec);

}  // namespace pmcr
