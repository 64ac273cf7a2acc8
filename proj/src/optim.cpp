#include "pmcr/optim.hpp"

#include <cmath>
#include <numbers>

namespace pmcr {

void adamw_update(float* p, const float* g, float* m, float* v, size_t n, int t, double lr,
                  const AdamWConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < n; i++) {
    const double gi = double(g[i]);
    const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * gi * gi;
    m[i] = float(mi);
    v[i] = float(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    p[i] = float(double(p[i]) -
                 lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * double(p[i])));
  }
}

AdamW::AdamW(const std::vector<Shape4>& shapes, AdamWConfig cfg) : cfg_(cfg) {
  m_.reserve(shapes.size());
  v_.reserve(shapes.size());
  for (const auto& s : shapes) {
    m_.emplace_back(s.numel(), 0.0f);
    v_.emplace_back(s.numel(), 0.0f);
  }
}

void AdamW::step(const std::vector<Tensor*>& params, Tape& tape, double lr) {
  if (params.size() != m_.size())
    throw std::invalid_argument("AdamW::step: got " + std::to_string(params.size()) +
                                " params, state has " + std::to_string(m_.size()));
  step_++;
  for (size_t i = 0; i < params.size(); i++) {
    Tensor* p = params[i];
    if (p->numel() != m_[i].size())
      throw std::invalid_argument("AdamW::step: param " + std::to_string(i) +
                                  " shape does not match optimizer state");
    const std::vector<float>& g = tape.grad(*p);
    adamw_update(p->mutable_data(), g.data(), m_[i].data(), v_[i].data(), p->numel(), step_,
                 lr, cfg_);
  }
}

double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step out of [0, total_steps]");
  const double phase = std::numbers::pi * double(step) / double(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

}  // namespace pmcr
