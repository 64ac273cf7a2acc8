#include "pmcr/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace pmcr {

namespace {

constexpr double kPsnrCap = 99.0;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

template <class T>
double psnr(const TensorT<T>& pred, const TensorT<T>& gt) {
  check_same_shape(pred, gt, "psnr");
  double acc = 0.0;
  const size_t n = pred.numel();
  for (size_t i = 0; i < n; i++) {
    const double d = clamp01(double(pred.data()[i])) - clamp01(double(gt.data()[i]));
    acc += d * d;
  }
  const double mse = acc / double(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

template <class T>
double interpolation_error(const TensorT<T>& pred, const TensorT<T>& gt) {
  check_same_shape(pred, gt, "interpolation_error");
  double acc = 0.0;
  const size_t n = pred.numel();
  for (size_t i = 0; i < n; i++) {
    const double d = double(pred.data()[i]) - double(gt.data()[i]);
    acc += d * d;
  }
  return 255.0 * std::sqrt(acc / double(n));
}

template <class T>
double ssim(const TensorT<T>& pred, const TensorT<T>& gt) {
  check_same_shape(pred, gt, "ssim");
  const int h = pred.h(), w = pred.w();
  if (h < kSsimWindow || w < kSsimWindow)
    throw std::invalid_argument("ssim: image " + pred.shape().str() + " smaller than the " +
                                std::to_string(kSsimWindow) + "x" +
                                std::to_string(kSsimWindow) + " window");

  std::array<double, kSsimWindow> win;
  double wsum = 0.0;
  for (int i = 0; i < kSsimWindow; i++) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    win[size_t(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    wsum += win[size_t(i)];
  }
  for (auto& v : win) v /= wsum;

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int planes = pred.n() * pred.c();
  const size_t plane = size_t(h) * w;

  double total = 0.0;
  size_t count = 0;
  for (int p = 0; p < planes; p++) {
    const T* a = pred.data() + size_t(p) * plane;
    const T* b = gt.data() + size_t(p) * plane;
    for (int cy = 0; cy + kSsimWindow <= h; cy++) {
      for (int cx = 0; cx + kSsimWindow <= w; cx++) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int dy = 0; dy < kSsimWindow; dy++) {
          const double wy = win[size_t(dy)];
          const T* ra = a + size_t(cy + dy) * w + cx;
          const T* rb = b + size_t(cy + dy) * w + cx;
          for (int dx = 0; dx < kSsimWindow; dx++) {
            const double wgt = wy * win[size_t(dx)];
            const double va = double(ra[dx]), vb = double(rb[dx]);
            ma += wgt * va;
            mb += wgt * vb;
            maa += wgt * va * va;
            mbb += wgt * vb * vb;
            mab += wgt * va * vb;
          }
        }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        const double num = (2 * ma * mb + c1) * (2 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
        count++;
      }
    }
  }
  return total / double(count);
}

#define PMCR_INSTANTIATE_METRICS(T)                                          \
  template double psnr<T>(const TensorT<T>&, const TensorT<T>&);             \
  template double ssim<T>(const TensorT<T>&, const TensorT<T>&);             \
  template double interpolation_error<T>(const TensorT<T>&, const TensorT<T>&);

PMCR_INSTANTIATE_METRICS(float)
PMCR_INSTANTIATE_METRICS(double)

}  // namespace pmcr
