#include "pmcr/warp.hpp"

#include <cmath>

#include "pmcr/ops.hpp"

namespace pmcr {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

template <class T>
TensorT<T> backward_warp(const TensorT<T>& x, const TensorT<T>& flow) {
  if (flow.c() != 2)
    throw std::invalid_argument("backward_warp: flow must have 2 channels, got " +
                                std::to_string(flow.c()));
  if (x.n() != flow.n() || x.h() != flow.h() || x.w() != flow.w())
    throw std::invalid_argument("backward_warp: image " + x.shape().str() + " vs flow " +
                                flow.shape().str());
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const size_t plane = size_t(h) * w;
  TensorT<T> out(x.shape());

  for (int in = 0; in < n; in++) {
    const T* fx = flow.data() + size_t(in) * 2 * plane;
    const T* fy = fx + plane;
    for (int y = 0; y < h; y++) {
      for (int xx = 0; xx < w; xx++) {
        const size_t p = size_t(y) * w + xx;
        const T sx = T(xx) + fx[p];
        const T sy = T(y) + fy[p];
        const T fx0 = std::floor(sx);
        const T fy0 = std::floor(sy);
        const T wx = sx - fx0;
        const T wy = sy - fy0;
        // clamp in floating point first so huge displacements cannot
        // overflow the int conversion
        const int ix = int(std::max(T(-1), std::min(T(w), fx0)));
        const int iy = int(std::max(T(-1), std::min(T(h), fy0)));
        const int x0 = clampi(ix, 0, w - 1);
        const int x1 = clampi(ix + 1, 0, w - 1);
        const int y0 = clampi(iy, 0, h - 1);
        const int y1 = clampi(iy + 1, 0, h - 1);
        for (int ic = 0; ic < c; ic++) {
          const T* src = x.data() + (size_t(in) * c + ic) * plane;
          const T v00 = src[size_t(y0) * w + x0];
          const T v01 = src[size_t(y0) * w + x1];
          const T v10 = src[size_t(y1) * w + x0];
          const T v11 = src[size_t(y1) * w + x1];
          out.mutable_data()[(size_t(in) * c + ic) * plane + p] =
              (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
              wy * ((T(1) - wx) * v10 + wx * v11);
        }
      }
    }
  }

  TapeT<T>* tape = nullptr;
  if (x.tape != nullptr || flow.tape != nullptr) {
    tape = x.tape != nullptr ? x.tape : flow.tape;
    if (x.tape != nullptr && flow.tape != nullptr && x.tape != flow.tape)
      throw std::invalid_argument("backward_warp: inputs recorded on different tapes");
  }
  if (tape != nullptr) {
    TensorT<T> xs = x.detached();
    TensorT<T> fs = flow.detached();
    out.tape = tape;
    out.node = tape->alloc_slot(out.numel());
    const int out_node = out.node;
    const int x_node = x.tape == tape ? x.node : -1;
    const int f_node = flow.tape == tape ? flow.node : -1;
    tape->record([tape, out_node, x_node, f_node, xs, fs, n, c, h, w, plane]() {
      const std::vector<T>& gy = tape->grad(out_node);
      for (int in = 0; in < n; in++) {
        const T* fx = fs.data() + size_t(in) * 2 * plane;
        const T* fy = fx + plane;
        for (int y = 0; y < h; y++) {
          for (int xx = 0; xx < w; xx++) {
            const size_t p = size_t(y) * w + xx;
            const T sx = T(xx) + fx[p];
            const T sy = T(y) + fy[p];
            const T fx0 = std::floor(sx);
            const T fy0 = std::floor(sy);
            const T wx = sx - fx0;
            const T wy = sy - fy0;
            const int ix = int(std::max(T(-1), std::min(T(w), fx0)));
            const int iy = int(std::max(T(-1), std::min(T(h), fy0)));
            const int x0 = clampi(ix, 0, w - 1);
            const int x1 = clampi(ix + 1, 0, w - 1);
            const int y0 = clampi(iy, 0, h - 1);
            const int y1 = clampi(iy + 1, 0, h - 1);
            T dsx(0), dsy(0);
            for (int ic = 0; ic < c; ic++) {
              const size_t base = (size_t(in) * c + ic) * plane;
              const T g = gy[base + p];
              if (x_node >= 0) {
                T* gx = tape->grad(x_node).data() + base;
                gx[size_t(y0) * w + x0] += g * (T(1) - wy) * (T(1) - wx);
                gx[size_t(y0) * w + x1] += g * (T(1) - wy) * wx;
                gx[size_t(y1) * w + x0] += g * wy * (T(1) - wx);
                gx[size_t(y1) * w + x1] += g * wy * wx;
              }
              if (f_node >= 0) {
                const T* src = xs.data() + base;
                const T v00 = src[size_t(y0) * w + x0];
                const T v01 = src[size_t(y0) * w + x1];
                const T v10 = src[size_t(y1) * w + x0];
                const T v11 = src[size_t(y1) * w + x1];
                dsx += g * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
                dsy += g * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
              }
            }
            if (f_node >= 0) {
              std::vector<T>& gf = tape->grad(f_node);
              gf[size_t(in) * 2 * plane + p] += dsx;
              gf[size_t(in) * 2 * plane + plane + p] += dsy;
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> avg_downsample2x(const TensorT<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw std::invalid_argument("avg_downsample2x: odd spatial dims " + x.shape().str());
  const int h = x.h(), w = x.w(), oh = h / 2, ow = w / 2;
  const int planes = x.n() * x.c();
  TensorT<T> out(Shape4{x.n(), x.c(), oh, ow});
  for (int p = 0; p < planes; p++) {
    const T* src = x.data() + size_t(p) * h * w;
    T* dst = out.mutable_data() + size_t(p) * oh * ow;
    for (int y = 0; y < oh; y++)
      for (int xx = 0; xx < ow; xx++) {
        const T* r0 = src + size_t(2 * y) * w + 2 * xx;
        const T* r1 = r0 + w;
        dst[size_t(y) * ow + xx] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
      }
  }
  if (x.tape != nullptr) {
    TapeT<T>* tape = x.tape;
    out.tape = tape;
    out.node = tape->alloc_slot(out.numel());
    const int out_node = out.node, x_node = x.node;
    tape->record([tape, out_node, x_node, planes, h, w, oh, ow]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (int p = 0; p < planes; p++) {
        const T* src = gy.data() + size_t(p) * oh * ow;
        T* dst = gx.data() + size_t(p) * h * w;
        for (int y = 0; y < oh; y++)
          for (int xx = 0; xx < ow; xx++) {
            const T g = src[size_t(y) * ow + xx] * T(0.25);
            T* r0 = dst + size_t(2 * y) * w + 2 * xx;
            T* r1 = r0 + w;
            r0[0] += g;
            r0[1] += g;
            r1[0] += g;
            r1[1] += g;
          }
      }
    });
  }
  return out;
}

template <class T>
ImagePyramidT<T> build_pyramid(const TensorT<T>& image, int levels) {
  if (levels < 1) throw std::invalid_argument("build_pyramid: levels must be >= 1");
  const int div = 1 << (levels - 1);
  if (image.h() % div != 0 || image.w() % div != 0)
    throw std::invalid_argument("build_pyramid: " + image.shape().str() +
                                " not divisible by " + std::to_string(div));
  ImagePyramidT<T> pyr;
  pyr.levels.reserve(size_t(levels));
  pyr.levels.push_back(image);
  for (int l = 1; l < levels; l++) pyr.levels.push_back(avg_downsample2x(pyr.levels.back()));
  return pyr;
}

template <class T>
TensorT<T> pad_to_multiple(const TensorT<T>& image, int m, CropRecord& rec) {
  if (m < 1) throw std::invalid_argument("pad_to_multiple: m must be >= 1");
  rec.orig_h = image.h();
  rec.orig_w = image.w();
  rec.padded_h = (image.h() + m - 1) / m * m;
  rec.padded_w = (image.w() + m - 1) / m * m;
  return reflect_pad_br(image, rec.padded_h - image.h(), rec.padded_w - image.w());
}

template <class T>
TensorT<T> crop_back(const TensorT<T>& x, const CropRecord& rec) {
  if (x.h() != rec.padded_h || x.w() != rec.padded_w)
    throw std::invalid_argument("crop_back: tensor " + x.shape().str() +
                                " does not match crop record");
  return crop_tl(x, rec.orig_h, rec.orig_w);
}

#define PMCR_INSTANTIATE_WARP(T)                                                   \
  template TensorT<T> backward_warp<T>(const TensorT<T>&, const TensorT<T>&);      \
  template TensorT<T> avg_downsample2x<T>(const TensorT<T>&);                      \
  template ImagePyramidT<T> build_pyramid<T>(const TensorT<T>&, int);              \
  template TensorT<T> pad_to_multiple<T>(const TensorT<T>&, int, CropRecord&);     \
  template TensorT<T> crop_back<T>(const TensorT<T>&, const CropRecord&);

PMCR_INSTANTIATE_WARP(float)
PMCR_INSTANTIATE_WARP(double)

}  // namespace pmcr
