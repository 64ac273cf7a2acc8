#include "pmcr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pmcr/image_io.hpp"
#include "pmcr/checkpoint.hpp"
#include "pmcr/metrics.hpp"

namespace pmcr {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
  if (crop < 16 || crop % 16 != 0)
    throw std::invalid_argument("train config: crop must be a positive multiple of 16");
  if (lr_min > lr_max) throw std::invalid_argument("train config: lr_min must be <= lr_max");
  loss.validate();
  model.validate();
}

Tensor clamp01(const Tensor& t) {
  Tensor out(t.shape());
  for (size_t i = 0; i < t.numel(); i++) {
    const float v = t.data()[i];
    out.mutable_data()[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

namespace {

// stacks single-sample (1,c,h,w) tensors into one (b,c,h,w) batch
Tensor stack(const std::vector<Tensor>& frames) {
  const Shape4 s = frames[0].shape();
  Tensor out(Shape4{int(frames.size()), s.c, s.h, s.w});
  const size_t sample = s.numel();
  for (size_t i = 0; i < frames.size(); i++)
    std::copy_n(frames[i].data(), sample, out.mutable_data() + i * sample);
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<TripletRef>& dataset,
                  const std::string& out_dir) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  std::filesystem::create_directories(out_dir);

  PmcrNet model(cfg.model, cfg.seed);
  std::vector<Shape4> shapes;
  for (const auto& [name, shape] : model.named_parameters()) shapes.push_back(shape);
  AdamW opt(shapes, cfg.adamw);

  const long n_samples = long(dataset.size());
  const long steps_per_epoch = (n_samples + cfg.batch - 1) / cfg.batch;
  const long total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  result.log_path = out_dir + "/train.log";
  result.checkpoint_path = out_dir + "/final.pmcr";

  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw IoError("cannot open " + result.log_path + " for writing");
  char line[512];
  std::snprintf(line, sizeof(line),
                "run fingerprint=%s,tau=%s params=%zu seed=%llu epochs=%d batch=%d crop=%d "
                "steps_per_epoch=%ld total_steps=%ld",
                model.config().fingerprint().c_str(), to_string(cfg.loss.mode).c_str(),
                model.param_count(), (unsigned long long)cfg.seed, cfg.epochs, cfg.batch,
                cfg.crop, steps_per_epoch, total_steps);
  log << line << "\n";

  // small datasets are decoded once and kept resident
  std::vector<Triplet> cache;
  const bool use_cache = dataset.size() <= 64;
  if (use_cache)
    for (const auto& ref : dataset) cache.push_back(load_triplet(ref));

  long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    SplitMix64 rng = SplitMix64(cfg.seed).fork(uint64_t(epoch) + 1);
    std::vector<long> order(static_cast<size_t>(n_samples), 0L);
    for (long i = 0; i < n_samples; i++) order[size_t(i)] = i;
    for (long i = n_samples - 1; i > 0; i--)
      std::swap(order[size_t(i)], order[size_t(rng.next_below(uint64_t(i) + 1))]);

    for (long start = 0; start < n_samples; start += cfg.batch) {
      const long stop = std::min(n_samples, start + cfg.batch);
      std::vector<Tensor> f0s, gts, f1s;
      for (long i = start; i < stop; i++) {
        const long idx = order[size_t(i)];
        // tensor copies share buffers, so copying out of the cache is cheap
        Triplet full = use_cache ? cache[size_t(idx)] : load_triplet(dataset[size_t(idx)]);
        Triplet aug = augment(full, cfg.crop, rng);
        f0s.push_back(aug.frame0);
        gts.push_back(aug.frame_gt);
        f1s.push_back(aug.frame1);
      }
      Tensor f0 = stack(f0s), gt = stack(gts), f1 = stack(f1s);

      Tape tape;
      model.watch_parameters(tape);
      ForwardResult fwd = model.forward(f0, f1);
      const double frac_epoch = double(global_step) / double(steps_per_epoch);
      TotalLossT<float> loss = total_loss(fwd.levels, gt, frac_epoch, cfg.epochs, cfg.loss);
      if (!std::isfinite(loss.parts.total))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(global_step));
      tape.backward(loss.value);

      const double lr = cosine_lr(global_step, total_steps, cfg.lr_max, cfg.lr_min);
      opt.step(model.parameter_ptrs(), tape, lr);
      model.detach_parameters();

      std::snprintf(line, sizeof(line),
                    "epoch=%d step=%ld lr=%.9g tau=%.9g charb=%.9g census=%.9g aux1=%.9g "
                    "aux2=%.9g aux3=%.9g total=%.9g",
                    epoch, global_step, lr, loss.parts.tau, loss.parts.charbonnier0,
                    loss.parts.census0, loss.parts.aux[0], loss.parts.aux[1],
                    loss.parts.aux[2], loss.parts.total);
      log << line << "\n";

      if (global_step == 0) result.initial_loss = loss.parts.total;
      result.final_loss = loss.parts.total;
      global_step++;
    }

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "/epoch_%04d.pmcr", epoch + 1);
      save_checkpoint(model, &opt, epoch + 1, out_dir + name);
    }
  }

  save_checkpoint(model, &opt, cfg.epochs, result.checkpoint_path);
  result.steps = global_step;
  log.flush();
  return result;
}

MetricReport evaluate(const PmcrNet& model, const std::vector<TripletRef>& dataset,
                      bool pred_is_gt) {
  MetricReport report;
  for (const auto& ref : dataset) {
    Triplet t = load_triplet(ref);
    Tensor pred;
    if (pred_is_gt) {
      pred = t.frame_gt;
    } else {
      ForwardResult fwd = model.forward(t.frame0, t.frame1);
      pred = clamp01(fwd.output);
    }
    Tensor blend = clamp01(scalar_mul(add(t.frame0, t.frame1), 0.5f));

    report.samples.push_back(SampleMetrics{ref.id, psnr(pred, t.frame_gt),
                                           ssim(pred, t.frame_gt),
                                           interpolation_error(pred, t.frame_gt)});
    report.baseline.push_back(SampleMetrics{ref.id, psnr(blend, t.frame_gt),
                                            ssim(blend, t.frame_gt),
                                            interpolation_error(blend, t.frame_gt)});
  }
  const double n = double(report.samples.size());
  for (const auto& s : report.samples) {
    report.mean_psnr += s.psnr / n;
    report.mean_ssim += s.ssim / n;
    report.mean_ie += s.ie / n;
  }
  for (const auto& s : report.baseline) {
    report.baseline_psnr += s.psnr / n;
    report.baseline_ssim += s.ssim / n;
    report.baseline_ie += s.ie / n;
  }
  return report;
}

}  // namespace pmcr
