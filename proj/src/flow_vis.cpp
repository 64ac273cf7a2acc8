#include "pmcr/flow_vis.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace pmcr {

namespace {

// classic 55-entry color wheel (RY/YG/GC/CB/BM/MR segments)
std::vector<std::array<float, 3>> make_color_wheel() {
  const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<float, 3>> wheel;
  wheel.reserve(size_t(RY + YG + GC + CB + BM + MR));
  for (int i = 0; i < RY; i++) wheel.push_back({1.0f, float(i) / RY, 0.0f});
  for (int i = 0; i < YG; i++) wheel.push_back({1.0f - float(i) / YG, 1.0f, 0.0f});
  for (int i = 0; i < GC; i++) wheel.push_back({0.0f, 1.0f, float(i) / GC});
  for (int i = 0; i < CB; i++) wheel.push_back({0.0f, 1.0f - float(i) / CB, 1.0f});
  for (int i = 0; i < BM; i++) wheel.push_back({float(i) / BM, 0.0f, 1.0f});
  for (int i = 0; i < MR; i++) wheel.push_back({1.0f, 0.0f, 1.0f - float(i) / MR});
  return wheel;
}

}  // namespace

Tensor flow_to_color(const Tensor& flow) {
  if (flow.n() != 1 || flow.c() != 2)
    throw std::invalid_argument("flow_to_color expects a (1,2,h,w) field, got " +
                                flow.shape().str());
  static const std::vector<std::array<float, 3>> wheel = make_color_wheel();
  const int ncols = int(wheel.size());
  const int h = flow.h(), w = flow.w();
  const size_t plane = size_t(h) * w;
  const float* u = flow.data();
  const float* v = flow.data() + plane;

  float max_rad = 1e-9f;
  for (size_t i = 0; i < plane; i++)
    max_rad = std::max(max_rad, std::sqrt(u[i] * u[i] + v[i] * v[i]));

  Tensor out(Shape4{1, 3, h, w});
  for (size_t i = 0; i < plane; i++) {
    const float fu = u[i] / max_rad, fv = v[i] / max_rad;
    const float rad = std::sqrt(fu * fu + fv * fv);
    const float angle = std::atan2(-fv, -fu) / float(std::numbers::pi);
    const float fk = (angle + 1.0f) / 2.0f * float(ncols - 1);
    const int k0 = int(fk) % ncols;
    const int k1 = (k0 + 1) % ncols;
    const float f = fk - std::floor(fk);
    for (int ch = 0; ch < 3; ch++) {
      float col = (1.0f - f) * wheel[size_t(k0)][size_t(ch)] + f * wheel[size_t(k1)][size_t(ch)];
      col = rad <= 1.0f ? 1.0f - rad * (1.0f - col) : col * 0.75f;
      out.mutable_data()[size_t(ch) * plane + i] = col;
    }
  }
  return out;
}

}  // namespace pmcr
