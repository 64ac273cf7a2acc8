#pragma once

// Independent reference implementations (naive nested loops, no im2col, no
// Eigen) used as oracles against the library kernels, plus tensor builders
// for randomized tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "pmcr/ops.hpp"
#include "pmcr/rng.hpp"
#include "pmcr/tensor.hpp"

namespace pmcr::testutil {

template <class T>
TensorT<T> random_tensor(Shape4 s, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t(s);
  for (size_t i = 0; i < t.numel(); i++) t.mutable_data()[i] = T(rng.uniform(lo, hi));
  return t;
}

template <class T>
TensorT<T> filled(Shape4 s, T v) {
  return TensorT<T>(s, v);
}

// |a-b| <= tol * max(1, |a|, |b|), reported as the worst ratio
template <class T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (!(a.shape() == b.shape())) return 1e30;
  double worst = 0;
  for (size_t i = 0; i < a.numel(); i++) {
    const double x = double(a.data()[i]), y = double(b.data()[i]);
    worst = std::max(worst, std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}));
  }
  return worst;
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (!(a.shape() == b.shape())) return 1e30;
  double worst = 0;
  for (size_t i = 0; i < a.numel(); i++)
    worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return worst;
}

template <class T>
bool bitwise_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (size_t i = 0; i < a.numel(); i++)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

// Six-loop cross-correlation, accumulated in double.
template <class T>
TensorT<T> naive_conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
  const Shape4& ks = spec.kernel.shape();
  const int stride = spec.stride, pad = spec.padding, groups = spec.groups;
  const int cpg = ks.c, ocpg = ks.n / groups;
  const int oh = (x.h() + 2 * pad - ks.h) / stride + 1;
  const int ow = (x.w() + 2 * pad - ks.w) / stride + 1;
  TensorT<T> out(Shape4{x.n(), ks.n, oh, ow});
  for (int n = 0; n < x.n(); n++)
    for (int oc = 0; oc < ks.n; oc++) {
      const int g = oc / ocpg;
      for (int oy = 0; oy < oh; oy++)
        for (int ox = 0; ox < ow; ox++) {
          double acc = spec.bias.empty() ? 0.0 : double(spec.bias.data()[oc]);
          for (int ic = 0; ic < cpg; ic++)
            for (int ky = 0; ky < ks.h; ky++)
              for (int kx = 0; kx < ks.w; kx++) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += double(x.at(n, g * cpg + ic, iy, ix)) *
                       double(spec.kernel.at(oc, ic, ky, kx));
              }
          out.mutable_data()[out.index(n, oc, oy, ox)] = T(acc);
        }
    }
  return out;
}

// Direct scatter definition of the transposed convolution.
template <class T>
TensorT<T> naive_conv_transpose2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
  const Shape4& ks = spec.kernel.shape();
  const int stride = spec.stride, pad = spec.padding, groups = spec.groups;
  const int cpg = ks.c, ocpg = ks.n / groups;
  const int oh = (x.h() - 1) * stride - 2 * pad + ks.h;
  const int ow = (x.w() - 1) * stride - 2 * pad + ks.w;
  std::vector<double> acc(size_t(x.n()) * ks.n * oh * ow, 0.0);
  auto at = [&](int n, int oc, int y, int xx) -> double& {
    return acc[((size_t(n) * ks.n + oc) * oh + y) * ow + xx];
  };
  for (int n = 0; n < x.n(); n++)
    for (int g = 0; g < groups; g++)
      for (int ic = 0; ic < cpg; ic++)
        for (int iy = 0; iy < x.h(); iy++)
          for (int ix = 0; ix < x.w(); ix++) {
            const double v = double(x.at(n, g * cpg + ic, iy, ix));
            for (int oc = 0; oc < ocpg; oc++)
              for (int ky = 0; ky < ks.h; ky++)
                for (int kx = 0; kx < ks.w; kx++) {
                  const int oy = iy * stride + ky - pad;
                  const int ox = ix * stride + kx - pad;
                  if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                  at(n, g * ocpg + oc, oy, ox) +=
                      v * double(spec.kernel.at(g * ocpg + oc, ic, ky, kx));
                }
          }
  TensorT<T> out(Shape4{x.n(), ks.n, oh, ow});
  for (size_t i = 0; i < out.numel(); i++) {
    double v = acc[i];
    if (!spec.bias.empty()) v += double(spec.bias.data()[(i / (size_t(oh) * ow)) % size_t(ks.n)]);
    out.mutable_data()[i] = T(v);
  }
  return out;
}

// inner product <a, b> over all elements, in double
template <class T>
double dot(const TensorT<T>& a, const TensorT<T>& b) {
  double acc = 0;
  for (size_t i = 0; i < a.numel(); i++) acc += double(a.data()[i]) * double(b.data()[i]);
  return acc;
}

}  // namespace pmcr::testutil
