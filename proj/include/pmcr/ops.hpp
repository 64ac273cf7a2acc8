#pragma once

#include <vector>

#include "pmcr/tensor.hpp"

namespace pmcr {

// Convolution descriptor. kernel is (out_c, in_c/groups, kh, kw); bias is
// (1, out_c, 1, 1) or empty. Both may sit on a tape, in which case conv ops
// record gradients for them.
template <class T>
struct ConvSpecT {
  TensorT<T> kernel;
  TensorT<T> bias;
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

using ConvSpec = ConvSpecT<float>;

namespace debug {
// test hook: perturbs conv2d's input gradient so gradient checking must fail
extern bool corrupt_conv_backward;
}  // namespace debug

// Cross-correlation with zero padding. Output spatial size is
// floor((h + 2*padding - kh)/stride) + 1.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec);

// Transposed convolution (adjoint of conv2d's linear map). Output spatial
// size is (h-1)*stride - 2*padding + kh.
template <class T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const ConvSpecT<T>& spec);

// Interleaving channel permutation: c_out = (c_in % (c/groups))*groups + c_in/(c/groups).
template <class T>
TensorT<T> channel_shuffle(const TensorT<T>& x, int groups);

// y = x for x >= 0, slope_c * x otherwise; slope is (1, c, 1, 1), learnable.
template <class T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope);

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x);

// Elementwise ops; a 1-channel tensor broadcasts over the other's channels.
template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
TensorT<T> scalar_mul(const TensorT<T>& x, T s);
template <class T>
TensorT<T> scalar_add(const TensorT<T>& x, T s);

// Reductions to a (1,1,1,1) scalar tensor.
template <class T>
TensorT<T> mean(const TensorT<T>& x);
template <class T>
TensorT<T> sum(const TensorT<T>& x);

// Channel-axis concatenation / slicing.
template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& xs);
template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int count);

// Symmetric (edge-inclusive) reflection padding on bottom/right only, and
// its top-left-anchored inverse crop.
template <class T>
TensorT<T> reflect_pad_br(const TensorT<T>& x, int pad_h, int pad_w);
template <class T>
TensorT<T> crop_tl(const TensorT<T>& x, int out_h, int out_w);

}  // namespace pmcr
