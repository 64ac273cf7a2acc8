#include "pmcr/ops.hpp"

#include <Eigen/Core>

#include <cmath>

#include "pmcr/threading.hpp"

namespace pmcr {

namespace debug {
bool corrupt_conv_backward = false;
}

namespace {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// Resolves the common tape of a set of inputs (nullptr when all detached).
template <class T>
TapeT<T>* tape_of(std::initializer_list<const TensorT<T>*> xs) {
  TapeT<T>* tape = nullptr;
  for (const auto* x : xs) {
    if (x->empty() || x->tape == nullptr) continue;
    if (tape != nullptr && tape != x->tape)
      throw std::invalid_argument("op inputs are recorded on different tapes");
    tape = x->tape;
  }
  return tape;
}

template <class T>
void attach(TensorT<T>& out, TapeT<T>* tape) {
  out.tape = tape;
  out.node = tape->alloc_slot(out.numel());
}

struct ConvDims {
  int n, in_c, h, w;
  int out_c, kh, kw;
  int stride, pad, groups;
  int cpg, ocpg;  // in/out channels per group
  int oh, ow;
};

template <class T>
ConvDims conv_dims(const TensorT<T>& x, const ConvSpecT<T>& spec, bool transposed) {
  if (x.empty() || spec.kernel.empty()) throw std::invalid_argument("conv: empty tensor");
  const Shape4& ks = spec.kernel.shape();
  ConvDims d;
  d.n = x.n();
  d.in_c = x.c();
  d.h = x.h();
  d.w = x.w();
  d.out_c = ks.n;
  d.kh = ks.h;
  d.kw = ks.w;
  d.stride = spec.stride;
  d.pad = spec.padding;
  d.groups = spec.groups;
  if (d.stride < 1 || d.pad < 0 || d.groups < 1)
    throw std::invalid_argument("conv: stride must be >= 1, padding >= 0, groups >= 1");
  if (d.in_c % d.groups != 0 || d.out_c % d.groups != 0)
    throw std::invalid_argument("conv: channels (" + std::to_string(d.in_c) + "->" +
                                std::to_string(d.out_c) + ") not divisible by groups " +
                                std::to_string(d.groups));
  d.cpg = d.in_c / d.groups;
  d.ocpg = d.out_c / d.groups;
  if (ks.c != d.cpg)
    throw std::invalid_argument("conv: kernel expects " + std::to_string(ks.c * d.groups) +
                                " input channels, got " + std::to_string(d.in_c));
  if (!spec.bias.empty() && spec.bias.numel() != size_t(d.out_c))
    throw std::invalid_argument("conv: bias length " + std::to_string(spec.bias.numel()) +
                                " does not match out channels " + std::to_string(d.out_c));
  if (transposed) {
    d.oh = (d.h - 1) * d.stride - 2 * d.pad + d.kh;
    d.ow = (d.w - 1) * d.stride - 2 * d.pad + d.kw;
  } else {
    if (d.h + 2 * d.pad < d.kh || d.w + 2 * d.pad < d.kw)
      throw std::invalid_argument("conv: input " + x.shape().str() +
                                  " too small for kernel/stride/padding");
    d.oh = (d.h + 2 * d.pad - d.kh) / d.stride + 1;
    d.ow = (d.w + 2 * d.pad - d.kw) / d.stride + 1;
  }
  if (d.oh < 1 || d.ow < 1)
    throw std::invalid_argument("conv: input " + x.shape().str() +
                                " too small for kernel/stride/padding");
  return d;
}

// Gathers kh*kw patches of one sample-group image plane block into a
// (c*kh*kw) x (oh*ow) row-major matrix. Positions are iy = oi*stride+di-pad.
template <class T>
void im2col(const T* src, int c, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, MatRM<T>& col) {
  for (int ic = 0; ic < c; ic++) {
    const T* plane = src + size_t(ic) * h * w;
    for (int di = 0; di < kh; di++) {
      for (int dj = 0; dj < kw; dj++) {
        T* row = col.data() + (size_t(ic) * kh * kw + size_t(di) * kw + dj) * col.cols();
        for (int oi = 0; oi < oh; oi++) {
          const int iy = oi * stride + di - pad;
          T* dst = row + size_t(oi) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* srow = plane + size_t(iy) * w;
          for (int oj = 0; oj < ow; oj++) {
            const int ix = oj * stride + dj - pad;
            dst[oj] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the column matrix back into the image.
template <class T>
void col2im_add(const MatRM<T>& col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, T* dst) {
  for (int ic = 0; ic < c; ic++) {
    T* plane = dst + size_t(ic) * h * w;
    for (int di = 0; di < kh; di++) {
      for (int dj = 0; dj < kw; dj++) {
        const T* row = col.data() + (size_t(ic) * kh * kw + size_t(di) * kw + dj) * col.cols();
        for (int oi = 0; oi < oh; oi++) {
          const int iy = oi * stride + di - pad;
          if (iy < 0 || iy >= h) continue;
          T* drow = plane + size_t(iy) * w;
          const T* srow = row + size_t(oi) * ow;
          for (int oj = 0; oj < ow; oj++) {
            const int ix = oj * stride + dj - pad;
            if (ix >= 0 && ix < w) drow[ix] += srow[oj];
          }
        }
      }
    }
  }
}

// GEMM out = a * b with optional column chunking across worker threads.
// Each output column is produced entirely by one chunk, so results do not
// depend on the partition for a fixed thread count.
template <class T>
void gemm(MapRM<T> out, CMapRM<T> a, const MatRM<T>& b) {
  const int threads = num_threads();
  const Eigen::Index cols = b.cols();
  if (threads <= 1 || cols < 256) {
    out.noalias() = a * b;
    return;
  }
  parallel_for(threads, [&](int job) {
    const Eigen::Index lo = cols * job / threads;
    const Eigen::Index hi = cols * (job + 1) / threads;
    if (hi > lo) out.middleCols(lo, hi - lo).noalias() = a * b.middleCols(lo, hi - lo);
  });
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
  const ConvDims d = conv_dims(x, spec, /*transposed=*/false);
  TensorT<T> out(Shape4{d.n, d.out_c, d.oh, d.ow});

  const int K = d.cpg * d.kh * d.kw;
  const size_t P = size_t(d.oh) * d.ow;
  const size_t in_plane = size_t(d.h) * d.w;

  MatRM<T> col(K, Eigen::Index(P));
  for (int in = 0; in < d.n; in++) {
    for (int g = 0; g < d.groups; g++) {
      const T* xg = x.data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * in_plane;
      im2col(xg, d.cpg, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, col);
      CMapRM<T> wm(spec.kernel.data() + size_t(g) * d.ocpg * K, d.ocpg, K);
      MapRM<T> ym(out.mutable_data() + (size_t(in) * d.out_c + size_t(g) * d.ocpg) * P,
                  d.ocpg, Eigen::Index(P));
      gemm(ym, wm, col);
      if (!spec.bias.empty()) {
        for (int oc = 0; oc < d.ocpg; oc++)
          ym.row(oc).array() += spec.bias.data()[size_t(g) * d.ocpg + oc];
      }
    }
  }

  TapeT<T>* tape = tape_of<T>({&x, &spec.kernel, &spec.bias});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node;
    const int x_node = x.tape == tape ? x.node : -1;
    const int k_node = spec.kernel.tape == tape ? spec.kernel.node : -1;
    const int b_node = (!spec.bias.empty() && spec.bias.tape == tape) ? spec.bias.node : -1;
    TensorT<T> xs = x.detached();
    TensorT<T> ks = spec.kernel.detached();
    tape->record([tape, d, K, P, in_plane, xs, ks, out_node, x_node, k_node, b_node]() {
      const std::vector<T>& gy = tape->grad(out_node);
      MatRM<T> col(K, Eigen::Index(P));
      MatRM<T> dcol(K, Eigen::Index(P));
      for (int in = 0; in < d.n; in++) {
        for (int g = 0; g < d.groups; g++) {
          CMapRM<T> dym(gy.data() + (size_t(in) * d.out_c + size_t(g) * d.ocpg) * P, d.ocpg,
                        Eigen::Index(P));
          if (k_node >= 0) {
            const T* xg = xs.data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * in_plane;
            im2col(xg, d.cpg, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, col);
            MapRM<T> dwm(tape->grad(k_node).data() + size_t(g) * d.ocpg * K, d.ocpg, K);
            dwm.noalias() += dym * col.transpose();
          }
          if (x_node >= 0) {
            CMapRM<T> wm(ks.data() + size_t(g) * d.ocpg * K, d.ocpg, K);
            dcol.noalias() = wm.transpose() * dym;
            T* gx = tape->grad(x_node).data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * in_plane;
            col2im_add(dcol, d.cpg, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, gx);
          }
          if (b_node >= 0) {
            T* gb = tape->grad(b_node).data() + size_t(g) * d.ocpg;
            for (int oc = 0; oc < d.ocpg; oc++) gb[oc] += dym.row(oc).sum();
          }
        }
      }
      if (debug::corrupt_conv_backward && x_node >= 0) tape->grad(x_node)[0] += T(0.01);
    });
  }
  return out;
}

template <class T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
  const ConvDims d = conv_dims(x, spec, /*transposed=*/true);
  TensorT<T> out(Shape4{d.n, d.out_c, d.oh, d.ow});

  const int KT = d.ocpg * d.kh * d.kw;
  const size_t hw = size_t(d.h) * d.w;
  const size_t out_plane = size_t(d.oh) * d.ow;

  // kernel rearranged per group: (cpg) x (ocpg*kh*kw)
  auto build_wt = [&](int g, MatRM<T>& wt) {
    for (int oc = 0; oc < d.ocpg; oc++) {
      const T* kr = spec.kernel.data() + (size_t(g) * d.ocpg + oc) * d.cpg * d.kh * d.kw;
      for (int ic = 0; ic < d.cpg; ic++)
        for (int t = 0; t < d.kh * d.kw; t++)
          wt(ic, oc * d.kh * d.kw + t) = kr[size_t(ic) * d.kh * d.kw + t];
    }
  };

  MatRM<T> wt(d.cpg, KT);
  MatRM<T> m(KT, Eigen::Index(hw));
  for (int g = 0; g < d.groups; g++) {
    build_wt(g, wt);
    for (int in = 0; in < d.n; in++) {
      CMapRM<T> xm(x.data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * hw, d.cpg,
                   Eigen::Index(hw));
      m.noalias() = wt.transpose() * xm;
      T* og = out.mutable_data() + (size_t(in) * d.out_c + size_t(g) * d.ocpg) * out_plane;
      col2im_add(m, d.ocpg, d.oh, d.ow, d.kh, d.kw, d.stride, d.pad, d.h, d.w, og);
    }
  }
  if (!spec.bias.empty()) {
    for (int in = 0; in < d.n; in++)
      for (int oc = 0; oc < d.out_c; oc++) {
        T* plane = out.mutable_data() + (size_t(in) * d.out_c + oc) * out_plane;
        const T b = spec.bias.data()[oc];
        for (size_t i = 0; i < out_plane; i++) plane[i] += b;
      }
  }

  TapeT<T>* tape = tape_of<T>({&x, &spec.kernel, &spec.bias});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node;
    const int x_node = x.tape == tape ? x.node : -1;
    const int k_node = spec.kernel.tape == tape ? spec.kernel.node : -1;
    const int b_node = (!spec.bias.empty() && spec.bias.tape == tape) ? spec.bias.node : -1;
    TensorT<T> xs = x.detached();
    TensorT<T> ks = spec.kernel.detached();
    tape->record([tape, d, KT, hw, out_plane, xs, ks, out_node, x_node, k_node, b_node]() {
      const std::vector<T>& gy = tape->grad(out_node);
      MatRM<T> wt(d.cpg, KT);
      MatRM<T> dm(KT, Eigen::Index(hw));
      for (int g = 0; g < d.groups; g++) {
        // dm gathers gy at the scatter positions (= im2col over the output grad)
        for (int in = 0; in < d.n; in++) {
          im2col(gy.data() + (size_t(in) * d.out_c + size_t(g) * d.ocpg) * out_plane, d.ocpg,
                 d.oh, d.ow, d.kh, d.kw, d.stride, d.pad, d.h, d.w, dm);
          if (x_node >= 0) {
            for (int oc = 0; oc < d.ocpg; oc++) {
              const T* kr = ks.data() + (size_t(g) * d.ocpg + oc) * d.cpg * d.kh * d.kw;
              for (int ic = 0; ic < d.cpg; ic++)
                for (int t = 0; t < d.kh * d.kw; t++)
                  wt(ic, oc * d.kh * d.kw + t) = kr[size_t(ic) * d.kh * d.kw + t];
            }
            MapRM<T> dxm(tape->grad(x_node).data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * hw,
                         d.cpg, Eigen::Index(hw));
            dxm.noalias() += wt * dm;
          }
          if (k_node >= 0) {
            CMapRM<T> xm(xs.data() + (size_t(in) * d.in_c + size_t(g) * d.cpg) * hw, d.cpg,
                         Eigen::Index(hw));
            MatRM<T> dwt = xm * dm.transpose();  // (cpg) x (ocpg*kh*kw)
            T* gk = tape->grad(k_node).data();
            for (int oc = 0; oc < d.ocpg; oc++) {
              T* gkr = gk + (size_t(g) * d.ocpg + oc) * d.cpg * d.kh * d.kw;
              for (int ic = 0; ic < d.cpg; ic++)
                for (int t = 0; t < d.kh * d.kw; t++)
                  gkr[size_t(ic) * d.kh * d.kw + t] += dwt(ic, oc * d.kh * d.kw + t);
            }
          }
          if (b_node >= 0) {
            T* gb = tape->grad(b_node).data() + size_t(g) * d.ocpg;
            for (int oc = 0; oc < d.ocpg; oc++) {
              const T* plane = gy.data() + (size_t(in) * d.out_c + size_t(g) * d.ocpg + oc) * out_plane;
              T acc(0);
              for (size_t i = 0; i < out_plane; i++) acc += plane[i];
              gb[oc] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> channel_shuffle(const TensorT<T>& x, int groups) {
  if (groups < 1 || x.c() % groups != 0)
    throw std::invalid_argument("channel_shuffle: " + std::to_string(x.c()) +
                                " channels not divisible by groups " + std::to_string(groups));
  const int c = x.c(), cpg = c / groups;
  const size_t plane = size_t(x.h()) * x.w();
  TensorT<T> out(x.shape());
  for (int in = 0; in < x.n(); in++) {
    for (int ci = 0; ci < c; ci++) {
      const int co = (ci % cpg) * groups + ci / cpg;
      std::copy_n(x.data() + (size_t(in) * c + ci) * plane, plane,
                  out.mutable_data() + (size_t(in) * c + co) * plane);
    }
  }
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    const int n = x.n();
    tape->record([tape, out_node, x_node, n, c, cpg, groups, plane]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (int in = 0; in < n; in++)
        for (int ci = 0; ci < c; ci++) {
          const int co = (ci % cpg) * groups + ci / cpg;
          const T* src = gy.data() + (size_t(in) * c + co) * plane;
          T* dst = gx.data() + (size_t(in) * c + ci) * plane;
          for (size_t i = 0; i < plane; i++) dst[i] += src[i];
        }
    });
  }
  return out;
}

template <class T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope) {
  if (slope.numel() != size_t(x.c()))
    throw std::invalid_argument("prelu: slope length " + std::to_string(slope.numel()) +
                                " does not match channels " + std::to_string(x.c()));
  TensorT<T> out(x.shape());
  const size_t plane = size_t(x.h()) * x.w();
  for (int in = 0; in < x.n(); in++)
    for (int ic = 0; ic < x.c(); ic++) {
      const T a = slope.data()[ic];
      const T* src = x.data() + (size_t(in) * x.c() + ic) * plane;
      T* dst = out.mutable_data() + (size_t(in) * x.c() + ic) * plane;
      for (size_t i = 0; i < plane; i++) dst[i] = src[i] >= T(0) ? src[i] : a * src[i];
    }

  TapeT<T>* tape = tape_of<T>({&x, &slope});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node;
    const int x_node = x.tape == tape ? x.node : -1;
    const int s_node = slope.tape == tape ? slope.node : -1;
    TensorT<T> xs = x.detached();
    TensorT<T> ss = slope.detached();
    tape->record([tape, out_node, x_node, s_node, xs, ss, plane]() {
      const std::vector<T>& gy = tape->grad(out_node);
      for (int in = 0; in < xs.n(); in++)
        for (int ic = 0; ic < xs.c(); ic++) {
          const size_t base = (size_t(in) * xs.c() + ic) * plane;
          const T a = ss.data()[ic];
          const T* xp = xs.data() + base;
          const T* gp = gy.data() + base;
          if (x_node >= 0) {
            T* gx = tape->grad(x_node).data() + base;
            for (size_t i = 0; i < plane; i++) gx[i] += gp[i] * (xp[i] >= T(0) ? T(1) : a);
          }
          if (s_node >= 0) {
            T acc(0);
            for (size_t i = 0; i < plane; i++)
              if (xp[i] < T(0)) acc += gp[i] * xp[i];
            tape->grad(s_node)[ic] += acc;
          }
        }
    });
  }
  return out;
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  const size_t n = x.numel();
  for (size_t i = 0; i < n; i++) out.mutable_data()[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    TensorT<T> ys = out.detached();
    tape->record([tape, out_node, x_node, ys, n]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (size_t i = 0; i < n; i++) {
        const T y = ys.data()[i];
        gx[i] += gy[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

namespace {

enum class EwKind { Add, Sub, Mul };

// Shared implementation for elementwise add/sub/mul with optional 1-channel
// broadcast on either side.
template <class T>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, EwKind kind) {
  const bool a_bc = a.c() == 1 && b.c() > 1;
  const bool b_bc = b.c() == 1 && a.c() > 1;
  const Shape4 out_shape = a_bc ? b.shape() : a.shape();
  const bool same = a.shape() == b.shape();
  if (!same) {
    const bool bc_ok = (a_bc || b_bc) && a.n() == b.n() && a.h() == b.h() && a.w() == b.w();
    if (!bc_ok)
      throw std::invalid_argument("elementwise op: incompatible shapes " + a.shape().str() +
                                  " vs " + b.shape().str());
  }
  TensorT<T> out(out_shape);
  const size_t plane = size_t(out_shape.h) * out_shape.w;
  const int oc = out_shape.c;
  for (int in = 0; in < out_shape.n; in++)
    for (int ic = 0; ic < oc; ic++) {
      const T* pa = a.data() + (size_t(in) * (a_bc ? 1 : oc) + (a_bc ? 0 : ic)) * plane;
      const T* pb = b.data() + (size_t(in) * (b_bc ? 1 : oc) + (b_bc ? 0 : ic)) * plane;
      T* po = out.mutable_data() + (size_t(in) * oc + ic) * plane;
      switch (kind) {
        case EwKind::Add:
          for (size_t i = 0; i < plane; i++) po[i] = pa[i] + pb[i];
          break;
        case EwKind::Sub:
          for (size_t i = 0; i < plane; i++) po[i] = pa[i] - pb[i];
          break;
        case EwKind::Mul:
          for (size_t i = 0; i < plane; i++) po[i] = pa[i] * pb[i];
          break;
      }
    }

  TapeT<T>* tape = tape_of<T>({&a, &b});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node;
    const int a_node = a.tape == tape ? a.node : -1;
    const int b_node = b.tape == tape ? b.node : -1;
    TensorT<T> as = a.detached();
    TensorT<T> bs = b.detached();
    tape->record([tape, out_node, a_node, b_node, as, bs, kind, a_bc, b_bc, plane, oc,
                  out_shape]() {
      const std::vector<T>& gy = tape->grad(out_node);
      for (int in = 0; in < out_shape.n; in++)
        for (int ic = 0; ic < oc; ic++) {
          const size_t ob = (size_t(in) * oc + ic) * plane;
          const size_t ab = (size_t(in) * (a_bc ? 1 : oc) + (a_bc ? 0 : ic)) * plane;
          const size_t bb = (size_t(in) * (b_bc ? 1 : oc) + (b_bc ? 0 : ic)) * plane;
          const T* gp = gy.data() + ob;
          if (a_node >= 0) {
            T* ga = tape->grad(a_node).data() + ab;
            if (kind == EwKind::Mul) {
              const T* pb = bs.data() + bb;
              for (size_t i = 0; i < plane; i++) ga[i] += gp[i] * pb[i];
            } else {
              for (size_t i = 0; i < plane; i++) ga[i] += gp[i];
            }
          }
          if (b_node >= 0) {
            T* gb = tape->grad(b_node).data() + bb;
            if (kind == EwKind::Mul) {
              const T* pa = as.data() + ab;
              for (size_t i = 0; i < plane; i++) gb[i] += gp[i] * pa[i];
            } else if (kind == EwKind::Sub) {
              for (size_t i = 0; i < plane; i++) gb[i] -= gp[i];
            } else {
              for (size_t i = 0; i < plane; i++) gb[i] += gp[i];
            }
          }
        }
    });
  }
  return out;
}

}  // namespace

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise(a, b, EwKind::Add);
}
template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise(a, b, EwKind::Sub);
}
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise(a, b, EwKind::Mul);
}

template <class T>
TensorT<T> scalar_mul(const TensorT<T>& x, T s) {
  TensorT<T> out(x.shape());
  const size_t n = x.numel();
  for (size_t i = 0; i < n; i++) out.mutable_data()[i] = x.data()[i] * s;
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    tape->record([tape, out_node, x_node, s, n]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (size_t i = 0; i < n; i++) gx[i] += gy[i] * s;
    });
  }
  return out;
}

template <class T>
TensorT<T> scalar_add(const TensorT<T>& x, T s) {
  TensorT<T> out(x.shape());
  const size_t n = x.numel();
  for (size_t i = 0; i < n; i++) out.mutable_data()[i] = x.data()[i] + s;
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    tape->record([tape, out_node, x_node, n]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (size_t i = 0; i < n; i++) gx[i] += gy[i];
    });
  }
  return out;
}

namespace {

template <class T>
TensorT<T> reduce(const TensorT<T>& x, bool take_mean) {
  if (x.empty() || x.numel() == 0) throw std::invalid_argument("reduce over empty tensor");
  const size_t n = x.numel();
  double acc = 0.0;  // fixed-order accumulation in double for a stable value
  for (size_t i = 0; i < n; i++) acc += double(x.data()[i]);
  if (take_mean) acc /= double(n);
  TensorT<T> out(Shape4{1, 1, 1, 1});
  out.mutable_data()[0] = T(acc);
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    const T scale = take_mean ? T(1.0 / double(n)) : T(1);
    tape->record([tape, out_node, x_node, n, scale]() {
      const T g = tape->grad(out_node)[0] * scale;
      std::vector<T>& gx = tape->grad(x_node);
      for (size_t i = 0; i < n; i++) gx[i] += g;
    });
  }
  return out;
}

}  // namespace

template <class T>
TensorT<T> mean(const TensorT<T>& x) {
  return reduce(x, true);
}
template <class T>
TensorT<T> sum(const TensorT<T>& x) {
  return reduce(x, false);
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  int c_total = 0;
  for (const auto& x : xs) {
    if (x.n() != xs[0].n() || x.h() != xs[0].h() || x.w() != xs[0].w())
      throw std::invalid_argument("concat: inputs disagree on n/h/w");
    c_total += x.c();
  }
  const int n = xs[0].n(), h = xs[0].h(), w = xs[0].w();
  const size_t plane = size_t(h) * w;
  TensorT<T> out(Shape4{n, c_total, h, w});
  int c0 = 0;
  for (const auto& x : xs) {
    for (int in = 0; in < n; in++)
      std::copy_n(x.data() + size_t(in) * x.c() * plane, size_t(x.c()) * plane,
                  out.mutable_data() + (size_t(in) * c_total + c0) * plane);
    c0 += x.c();
  }

  TapeT<T>* tape = nullptr;
  for (const auto& x : xs)
    if (x.tape != nullptr) {
      if (tape != nullptr && tape != x.tape)
        throw std::invalid_argument("concat: inputs recorded on different tapes");
      tape = x.tape;
    }
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node;
    std::vector<int> nodes;
    std::vector<int> chans;
    for (const auto& x : xs) {
      nodes.push_back(x.tape == tape ? x.node : -1);
      chans.push_back(x.c());
    }
    tape->record([tape, out_node, nodes, chans, n, c_total, plane]() {
      const std::vector<T>& gy = tape->grad(out_node);
      int c0 = 0;
      for (size_t k = 0; k < nodes.size(); k++) {
        if (nodes[k] >= 0) {
          std::vector<T>& gx = tape->grad(nodes[k]);
          for (int in = 0; in < n; in++) {
            const T* src = gy.data() + (size_t(in) * c_total + c0) * plane;
            T* dst = gx.data() + size_t(in) * chans[k] * plane;
            for (size_t i = 0; i < size_t(chans[k]) * plane; i++) dst[i] += src[i];
          }
        }
        c0 += chans[k];
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int count) {
  if (c0 < 0 || count < 1 || c0 + count > x.c())
    throw std::invalid_argument("slice_channels: range [" + std::to_string(c0) + ", " +
                                std::to_string(c0 + count) + ") out of " +
                                std::to_string(x.c()) + " channels");
  const size_t plane = size_t(x.h()) * x.w();
  TensorT<T> out(Shape4{x.n(), count, x.h(), x.w()});
  for (int in = 0; in < x.n(); in++)
    std::copy_n(x.data() + (size_t(in) * x.c() + c0) * plane, size_t(count) * plane,
                out.mutable_data() + size_t(in) * count * plane);
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    const int n = x.n(), c = x.c();
    tape->record([tape, out_node, x_node, n, c, c0, count, plane]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (int in = 0; in < n; in++) {
        const T* src = gy.data() + size_t(in) * count * plane;
        T* dst = gx.data() + (size_t(in) * c + c0) * plane;
        for (size_t i = 0; i < size_t(count) * plane; i++) dst[i] += src[i];
      }
    });
  }
  return out;
}

namespace {

// Symmetric reflection index: mirrors with the edge sample included, so it
// stays valid for any pad amount (a 1-wide image maps everything to 0).
inline int sym_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

template <class T>
TensorT<T> reflect_pad_br(const TensorT<T>& x, int pad_h, int pad_w) {
  if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("reflect_pad_br: negative padding");
  if (pad_h == 0 && pad_w == 0) return x;
  const int h = x.h(), w = x.w(), oh = h + pad_h, ow = w + pad_w;
  TensorT<T> out(Shape4{x.n(), x.c(), oh, ow});
  const int planes = x.n() * x.c();
  for (int p = 0; p < planes; p++) {
    const T* src = x.data() + size_t(p) * h * w;
    T* dst = out.mutable_data() + size_t(p) * oh * ow;
    for (int y = 0; y < oh; y++) {
      const T* srow = src + size_t(sym_index(y, h)) * w;
      T* drow = dst + size_t(y) * ow;
      for (int xx = 0; xx < ow; xx++) drow[xx] = srow[sym_index(xx, w)];
    }
  }
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    tape->record([tape, out_node, x_node, planes, h, w, oh, ow]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (int p = 0; p < planes; p++) {
        const T* src = gy.data() + size_t(p) * oh * ow;
        T* dst = gx.data() + size_t(p) * h * w;
        for (int y = 0; y < oh; y++) {
          T* drow = dst + size_t(sym_index(y, h)) * w;
          const T* srow = src + size_t(y) * ow;
          for (int xx = 0; xx < ow; xx++) drow[sym_index(xx, w)] += srow[xx];
        }
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> crop_tl(const TensorT<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > x.h() || out_w > x.w())
    throw std::invalid_argument("crop_tl: crop " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " invalid for " + x.shape().str());
  if (out_h == x.h() && out_w == x.w()) return x;
  const int h = x.h(), w = x.w();
  TensorT<T> out(Shape4{x.n(), x.c(), out_h, out_w});
  const int planes = x.n() * x.c();
  for (int p = 0; p < planes; p++)
    for (int y = 0; y < out_h; y++)
      std::copy_n(x.data() + (size_t(p) * h + y) * w, out_w,
                  out.mutable_data() + (size_t(p) * out_h + y) * out_w);
  TapeT<T>* tape = tape_of<T>({&x});
  if (tape != nullptr) {
    attach(out, tape);
    const int out_node = out.node, x_node = x.node;
    tape->record([tape, out_node, x_node, planes, h, w, out_h, out_w]() {
      const std::vector<T>& gy = tape->grad(out_node);
      std::vector<T>& gx = tape->grad(x_node);
      for (int p = 0; p < planes; p++)
        for (int y = 0; y < out_h; y++) {
          const T* src = gy.data() + (size_t(p) * out_h + y) * out_w;
          T* dst = gx.data() + (size_t(p) * h + y) * w;
          for (int xx = 0; xx < out_w; xx++) dst[xx] += src[xx];
        }
    });
  }
  return out;
}

#define PMCR_INSTANTIATE_OPS(T)                                                       \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const ConvSpecT<T>&);              \
  template TensorT<T> conv_transpose2d<T>(const TensorT<T>&, const ConvSpecT<T>&);    \
  template TensorT<T> channel_shuffle<T>(const TensorT<T>&, int);                     \
  template TensorT<T> prelu<T>(const TensorT<T>&, const TensorT<T>&);                 \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                                  \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> scalar_mul<T>(const TensorT<T>&, T);                            \
  template TensorT<T> scalar_add<T>(const TensorT<T>&, T);                            \
  template TensorT<T> mean<T>(const TensorT<T>&);                                     \
  template TensorT<T> sum<T>(const TensorT<T>&);                                      \
  template TensorT<T> concat<T>(const std::vector<TensorT<T>>&);                      \
  template TensorT<T> slice_channels<T>(const TensorT<T>&, int, int);                 \
  template TensorT<T> reflect_pad_br<T>(const TensorT<T>&, int, int);                 \
  template TensorT<T> crop_tl<T>(const TensorT<T>&, int, int);

PMCR_INSTANTIATE_OPS(float)
PMCR_INSTANTIATE_OPS(double)

}  // namespace pmcr
