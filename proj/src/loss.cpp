#include "pmcr/loss.hpp"

#include <cmath>

#include "pmcr/ops.hpp"
#include "pmcr/warp.hpp"

namespace pmcr {

void LossConfig::validate() const {
  if (alpha <= 0 || epsilon <= 0)
    throw std::invalid_argument("loss config: alpha and epsilon must be positive");
  if (census_patch < 1 || census_patch % 2 == 0)
    throw std::invalid_argument("loss config: census_patch must be odd and positive");
  if (anneal_fraction <= 0 || anneal_fraction > 1)
    throw std::invalid_argument("loss config: anneal_fraction must be in (0, 1]");
}

TauMode tau_mode_from_string(const std::string& s) {
  if (s == "annealed") return TauMode::annealed;
  if (s == "fixed") return TauMode::fixed;
  if (s == "off") return TauMode::off;
  throw std::invalid_argument("unknown tau mode '" + s + "' (annealed|fixed|off)");
}

std::string to_string(TauMode m) {
  switch (m) {
    case TauMode::annealed: return "annealed";
    case TauMode::fixed: return "fixed";
    case TauMode::off: return "off";
  }
  return "?";
}

namespace {

// rho(x) = (x^2 + eps^2)^alpha and its derivative; the alpha = 1/2 case uses
// sqrt directly.
template <class T>
inline T rho(T x, T alpha, T eps2) {
  const T s = x * x + eps2;
  return alpha == T(0.5) ? std::sqrt(s) : std::pow(s, alpha);
}

template <class T>
inline T drho(T x, T alpha, T eps2) {
  const T s = x * x + eps2;
  if (alpha == T(0.5)) return x / std::sqrt(s);
  return T(2) * alpha * x * std::pow(s, alpha - T(1));
}

}  // namespace

template <class T>
TensorT<T> charbonnier(const TensorT<T>& diff, const LossConfig& cfg) {
  cfg.validate();
  if (diff.empty() || diff.numel() == 0)
    throw std::invalid_argument("charbonnier: empty tensor");
  const T alpha = T(cfg.alpha);
  const T eps2 = T(cfg.epsilon) * T(cfg.epsilon);
  const size_t n = diff.numel();

  double acc = 0.0;
  for (size_t i = 0; i < n; i++) acc += double(rho(diff.data()[i], alpha, eps2));
  TensorT<T> out(Shape4{1, 1, 1, 1});
  out.mutable_data()[0] = T(acc / double(n));

  if (diff.tape != nullptr) {
    TapeT<T>* tape = diff.tape;
    out.tape = tape;
    out.node = tape->alloc_slot(1);
    const int out_node = out.node, x_node = diff.node;
    TensorT<T> xs = diff.detached();
    tape->record([tape, out_node, x_node, xs, alpha, eps2, n]() {
      const T g = tape->grad(out_node)[0] / T(double(n));
      std::vector<T>& gx = tape->grad(x_node);
      for (size_t i = 0; i < n; i++) gx[i] += g * drho(xs.data()[i], alpha, eps2);
    });
  }
  return out;
}

namespace {

// soft census descriptor element and the per-offset soft Hamming distance
template <class T>
inline T census_c(T d) {
  return d / std::sqrt(T(0.81) + d * d);
}
template <class T>
inline T census_dc(T d) {
  const T s = T(0.81) + d * d;
  return T(0.81) / (s * std::sqrt(s));
}
template <class T>
inline T census_f(T e) {
  return e * e / (T(0.1) + e * e);
}
template <class T>
inline T census_df(T e) {
  const T s = T(0.1) + e * e;
  return T(0.2) * e / (s * s);
}

// intensity plane: 255 * mean over channels
template <class T>
std::vector<T> intensity_plane(const TensorT<T>& img) {
  const int n = img.n(), c = img.c(), h = img.h(), w = img.w();
  const size_t plane = size_t(h) * w;
  std::vector<T> out(size_t(n) * plane, T(0));
  for (int in = 0; in < n; in++) {
    T* dst = out.data() + size_t(in) * plane;
    for (int ic = 0; ic < c; ic++) {
      const T* src = img.data() + (size_t(in) * c + ic) * plane;
      for (size_t i = 0; i < plane; i++) dst[i] += src[i];
    }
    const T scale = T(255) / T(c);
    for (size_t i = 0; i < plane; i++) dst[i] *= scale;
  }
  return out;
}

}  // namespace

template <class T>
TensorT<T> census_loss(const TensorT<T>& a, const TensorT<T>& b, const LossConfig& cfg) {
  cfg.validate();
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument("census_loss: shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  const int patch = cfg.census_patch;
  const int r = patch / 2;
  if (a.h() < patch || a.w() < patch)
    throw std::invalid_argument("census_loss: image " + a.shape().str() +
                                " smaller than the " + std::to_string(patch) + "x" +
                                std::to_string(patch) + " census window");

  const int n = a.n(), c = a.c(), h = a.h(), w = a.w();
  const size_t plane = size_t(h) * w;
  const T alpha = T(cfg.alpha);
  const T eps2 = T(cfg.epsilon) * T(cfg.epsilon);

  const std::vector<T> ia = intensity_plane(a);
  const std::vector<T> ib = intensity_plane(b);

  const size_t nvalid = size_t(n) * size_t(h - 2 * r) * size_t(w - 2 * r);
  double acc = 0.0;
  for (int in = 0; in < n; in++) {
    const T* pa = ia.data() + size_t(in) * plane;
    const T* pb = ib.data() + size_t(in) * plane;
    for (int y = r; y < h - r; y++) {
      for (int x = r; x < w - r; x++) {
        const size_t p = size_t(y) * w + x;
        T s(0);
        for (int dy = -r; dy <= r; dy++)
          for (int dx = -r; dx <= r; dx++) {
            if (dy == 0 && dx == 0) continue;
            const size_t q = size_t(y + dy) * w + (x + dx);
            const T e = census_c(pa[q] - pa[p]) - census_c(pb[q] - pb[p]);
            s += census_f(e);
          }
        acc += double(rho(s, alpha, eps2));
      }
    }
  }
  TensorT<T> out(Shape4{1, 1, 1, 1});
  out.mutable_data()[0] = T(acc / double(nvalid));

  TapeT<T>* tape = nullptr;
  if (a.tape != nullptr || b.tape != nullptr) {
    tape = a.tape != nullptr ? a.tape : b.tape;
    if (a.tape != nullptr && b.tape != nullptr && a.tape != b.tape)
      throw std::invalid_argument("census_loss: inputs recorded on different tapes");
  }
  if (tape != nullptr) {
    out.tape = tape;
    out.node = tape->alloc_slot(1);
    const int out_node = out.node;
    const int a_node = a.tape == tape ? a.node : -1;
    const int b_node = b.tape == tape ? b.node : -1;
    const TensorT<T> as = a.detached(), bs = b.detached();
    tape->record([tape, out_node, a_node, b_node, as, bs, ia, ib, n, c, h, w, plane, r, alpha,
                  eps2, nvalid]() {
      const T gout = tape->grad(out_node)[0] / T(double(nvalid));
      std::vector<T> da(ia.size(), T(0)), db(ib.size(), T(0));
      for (int in = 0; in < n; in++) {
        const T* pa = ia.data() + size_t(in) * plane;
        const T* pb = ib.data() + size_t(in) * plane;
        T* ga = da.data() + size_t(in) * plane;
        T* gb = db.data() + size_t(in) * plane;
        for (int y = r; y < h - r; y++) {
          for (int x = r; x < w - r; x++) {
            const size_t p = size_t(y) * w + x;
            T s(0);
            for (int dy = -r; dy <= r; dy++)
              for (int dx = -r; dx <= r; dx++) {
                if (dy == 0 && dx == 0) continue;
                const size_t q = size_t(y + dy) * w + (x + dx);
                const T e = census_c(pa[q] - pa[p]) - census_c(pb[q] - pb[p]);
                s += census_f(e);
              }
            const T gs = gout * drho(s, alpha, eps2);
            for (int dy = -r; dy <= r; dy++)
              for (int dx = -r; dx <= r; dx++) {
                if (dy == 0 && dx == 0) continue;
                const size_t q = size_t(y + dy) * w + (x + dx);
                const T ea = pa[q] - pa[p];
                const T eb = pb[q] - pb[p];
                const T e = census_c(ea) - census_c(eb);
                const T ge = gs * census_df(e);
                const T gda = ge * census_dc(ea);
                const T gdb = -ge * census_dc(eb);
                ga[q] += gda;
                ga[p] -= gda;
                gb[q] += gdb;
                gb[p] -= gdb;
              }
          }
        }
      }
      // intensity plane -> per-channel image gradient
      const T chain = T(255) / T(c);
      if (a_node >= 0) {
        std::vector<T>& gx = tape->grad(a_node);
        for (int in = 0; in < n; in++)
          for (int ic = 0; ic < c; ic++) {
            T* dst = gx.data() + (size_t(in) * c + ic) * plane;
            const T* src = da.data() + size_t(in) * plane;
            for (size_t i = 0; i < plane; i++) dst[i] += src[i] * chain;
          }
      }
      if (b_node >= 0) {
        std::vector<T>& gx = tape->grad(b_node);
        for (int in = 0; in < n; in++)
          for (int ic = 0; ic < c; ic++) {
            T* dst = gx.data() + (size_t(in) * c + ic) * plane;
            const T* src = db.data() + size_t(in) * plane;
            for (size_t i = 0; i < plane; i++) dst[i] += src[i] * chain;
          }
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> reconstruction_loss(const TensorT<T>& pred, const TensorT<T>& gt,
                               const LossConfig& cfg) {
  if (!(pred.shape() == gt.shape()))
    throw std::invalid_argument("reconstruction_loss: shape mismatch " + pred.shape().str() +
                                " vs " + gt.shape().str());
  TensorT<T> ch = charbonnier(sub(pred, gt), cfg);
  if (pred.h() >= cfg.census_patch && pred.w() >= cfg.census_patch)
    return add(ch, census_loss(pred, gt, cfg));
  return ch;
}

double tau_at(double epoch, int total_epochs, const LossConfig& cfg) {
  cfg.validate();
  if (total_epochs < 1) throw std::invalid_argument("tau_at: total_epochs must be >= 1");
  switch (cfg.mode) {
    case TauMode::off: return 0.0;
    case TauMode::fixed: return cfg.tau_start;
    case TauMode::annealed: break;
  }
  const double horizon = double(total_epochs) * cfg.anneal_fraction;
  if (epoch >= horizon) return cfg.tau_end;
  const double t = epoch / horizon;
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * t;
}

template <class T>
TotalLossT<T> total_loss(const std::array<LevelStateT<T>, 4>& levels, const TensorT<T>& gt,
                         double epoch, int total_epochs, const LossConfig& cfg) {
  if (!(levels[0].frame.shape() == gt.shape()))
    throw std::invalid_argument("total_loss: ground truth " + gt.shape().str() +
                                " does not match level-0 frame " +
                                levels[0].frame.shape().str());
  TotalLossT<T> out;
  out.parts.tau = tau_at(epoch, total_epochs, cfg);
  const T tau = T(out.parts.tau);

  // ground-truth pyramid, never on the tape
  std::array<TensorT<T>, 4> g;
  g[0] = gt.detached();
  for (int l = 1; l < 4; l++) g[size_t(l)] = avg_downsample2x(g[size_t(l) - 1]);

  TensorT<T> ch0 = charbonnier(sub(levels[0].frame, g[0]), cfg);
  out.parts.charbonnier0 = double(ch0.data()[0]);
  TensorT<T> level0 = ch0;
  if (gt.h() >= cfg.census_patch && gt.w() >= cfg.census_patch) {
    TensorT<T> ce0 = census_loss(levels[0].frame, g[0], cfg);
    out.parts.census0 = double(ce0.data()[0]);
    level0 = add(ch0, ce0);
  }

  if (tau != T(0)) {
    TensorT<T> aux_sum;
    for (int l = 1; l < 4; l++) {
      TensorT<T> lr = reconstruction_loss(levels[size_t(l)].frame, g[size_t(l)], cfg);
      out.parts.aux[size_t(l) - 1] = double(lr.data()[0]);
      aux_sum = l == 1 ? lr : add(aux_sum, lr);
    }
    out.value = add(level0, scalar_mul(aux_sum, tau));
  } else {
    // report the per-level terms without paying for their backward pass
    for (int l = 1; l < 4; l++) {
      TensorT<T> lr = reconstruction_loss(levels[size_t(l)].frame.detached(),
                                          g[size_t(l)], cfg);
      out.parts.aux[size_t(l) - 1] = double(lr.data()[0]);
    }
    out.value = level0;
  }
  out.parts.total = double(out.value.data()[0]);
  return out;
}

#define PMCR_INSTANTIATE_LOSS(T)                                                         \
  template TensorT<T> charbonnier<T>(const TensorT<T>&, const LossConfig&);              \
  template TensorT<T> census_loss<T>(const TensorT<T>&, const TensorT<T>&,               \
                                     const LossConfig&);                                 \
  template TensorT<T> reconstruction_loss<T>(const TensorT<T>&, const TensorT<T>&,       \
                                             const LossConfig&);                         \
  template TotalLossT<T> total_loss<T>(const std::array<LevelStateT<T>, 4>&,             \
                                       const TensorT<T>&, double, int, const LossConfig&);

PMCR_INSTANTIATE_LOSS(float)
PMCR_INSTANTIATE_LOSS(double)

}  // namespace pmcr
