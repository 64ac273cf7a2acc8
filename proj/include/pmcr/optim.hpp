#pragma once

#include <vector>

#include "pmcr/tensor.hpp"

namespace pmcr {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Bias-corrected Adam update with decoupled weight decay on one parameter
// buffer. t is the 1-based step count.
void adamw_update(float* p, const float* g, float* m, float* v, size_t n, int t, double lr,
                  const AdamWConfig& cfg);

// Optimizer state for a fixed list of parameter shapes. The parameter
// tensors themselves are passed to step() each time, so the state can be
// moved and serialized independently of the model object.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const std::vector<Shape4>& shapes, AdamWConfig cfg = {});

  // One update. params must match the construction shapes and carry
  // gradients on `tape` (i.e. were watched before the forward pass).
  void step(const std::vector<Tensor*>& params, Tape& tape, double lr);

  int step_count() const { return step_; }
  void set_step_count(int t) { step_ = t; }
  const AdamWConfig& config() const { return cfg_; }

  size_t num_slots() const { return m_.size(); }
  std::vector<float>& moment_m(size_t i) { return m_.at(i); }
  std::vector<float>& moment_v(size_t i) { return v_.at(i); }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  int step_ = 0;
};

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2
double cosine_lr(long step, long total_steps, double lr_max, double lr_min);

}  // namespace pmcr
