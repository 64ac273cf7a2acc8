#pragma once

#include <string>
#include <vector>

#include "pmcr/dataset.hpp"
#include "pmcr/loss.hpp"
#include "pmcr/model.hpp"
#include "pmcr/optim.hpp"

namespace pmcr {

struct TrainConfig {
  int epochs = 300;
  int batch = 16;
  int crop = 256;  // square training crop, must be a multiple of 16
  double lr_max = 1e-4;
  double lr_min = 2e-5;
  AdamWConfig adamw;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only
  LossConfig loss;
  ModelConfig model;

  void validate() const;
};

struct TrainResult {
  double initial_loss = 0;
  double final_loss = 0;
  long steps = 0;
  std::string log_path;
  std::string checkpoint_path;
};

// Full training loop: seeded shuffling, augmentation, forward, annealed
// multi-scale loss, backward, AdamW with cosine learning rate. Writes one
// key=value log line per step plus checkpoints under out_dir. Single
// threaded and bitwise reproducible for a fixed seed.
TrainResult train(const TrainConfig& cfg, const std::vector<TripletRef>& dataset,
                  const std::string& out_dir);

struct SampleMetrics {
  std::string id;
  double psnr = 0, ssim = 0, ie = 0;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  std::vector<SampleMetrics> baseline;  // linear blend 0.5*(I0+I1)
  double mean_psnr = 0, mean_ssim = 0, mean_ie = 0;
  double baseline_psnr = 0, baseline_ssim = 0, baseline_ie = 0;
};

// Per-triplet interpolation metrics against the middle frame, plus the
// linear-blend reference. When pred_is_gt is set the ground truth itself is
// scored (harness mode for plumbing checks).
MetricReport evaluate(const PmcrNet& model, const std::vector<TripletRef>& dataset,
                      bool pred_is_gt = false);

Tensor clamp01(const Tensor& t);

}  // namespace pmcr
