#include "pmcr/gradcheck.hpp"

#include <cmath>

#include "pmcr/loss.hpp"
#include "pmcr/ops.hpp"
#include "pmcr/rng.hpp"

namespace pmcr {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// projection of the op output onto a fixed random direction, evaluated
// without any tape
double project(const TensorD& y, const std::vector<double>& proj) {
  double acc = 0.0;
  for (size_t i = 0; i < y.numel(); i++) acc += double(y.data()[i]) * proj[i];
  return acc;
}

}  // namespace

double gradcheck_op(const std::function<TensorD(const std::vector<TensorD>&)>& op,
                    const std::vector<TensorD>& inputs, const GradCheckOptions& opt) {
  // probe once for the output size
  std::vector<TensorD> detached;
  for (const auto& x : inputs) detached.push_back(x.detached());
  TensorD probe = op(detached);
  SplitMix64 rng(SplitMix64::mix(opt.seed ^ 0x9ccf1151ull));
  std::vector<double> proj(probe.numel());
  for (auto& v : proj) v = rng.uniform(-1.0, 1.0);

  // analytic gradients through the tape
  TapeD tape;
  std::vector<TensorD> watched;
  for (const auto& x : inputs) {
    TensorD t = x.detached();
    tape.watch(t);
    watched.push_back(t);
  }
  {
    TensorD y = op(watched);
    TensorD proj_t = TensorD::from_vector(y.shape(), std::vector<double>(proj));
    tape.backward(sum(mul(y, proj_t)));
  }

  // central differences on clones; each element perturbed in isolation
  double worst = 0.0;
  const double h = opt.step;
  std::vector<TensorD> work;
  for (const auto& x : inputs) work.push_back(x.clone());
  for (size_t k = 0; k < inputs.size(); k++) {
    const std::vector<double>& g = tape.grad(watched[k]);
    double* data = work[k].mutable_data();
    for (size_t i = 0; i < work[k].numel(); i++) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = project(op(work), proj);
      data[i] = keep - h;
      const double down = project(op(work), proj);
      data[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(g[i], fd));
    }
  }
  return worst;
}

ModelGradCheckReport model_loss_gradcheck(const ModelConfig& cfg, Shape4 input_shape,
                                          int coords_per_tensor, uint64_t seed, double step) {
  PmcrNetT<double> net(cfg, seed);
  SplitMix64 rng(SplitMix64::mix(seed ^ 0x51ce7d1ull));

  auto random_image = [&](double lo, double hi) {
    TensorD t(input_shape);
    for (size_t i = 0; i < t.numel(); i++) t.mutable_data()[i] = rng.uniform(lo, hi);
    return t;
  };
  TensorD i0 = random_image(0.05, 0.95);
  TensorD i1 = random_image(0.05, 0.95);
  TensorD gt = random_image(0.05, 0.95);

  // epoch inside the anneal window so every pyramid level contributes
  const double epoch = 10.0;
  const int total_epochs = 300;
  LossConfig loss_cfg;

  auto eval_loss = [&]() {
    ForwardResultT<double> fwd = net.forward(i0, i1);
    return total_loss(fwd.levels, gt, epoch, total_epochs, loss_cfg).parts.total;
  };

  // analytic pass; gradients are snapshotted so the net can be detached
  // before the finite-difference evaluations re-run forward
  std::vector<std::pair<std::string, std::vector<double>>> grads;
  {
    TapeD tape;
    net.watch_parameters(tape);
    tape.watch(i0);
    tape.watch(i1);
    ForwardResultT<double> fwd = net.forward(i0, i1);
    TotalLossT<double> loss = total_loss(fwd.levels, gt, epoch, total_epochs, loss_cfg);
    tape.backward(loss.value);
    net.for_each_parameter([&](const std::string& name, TensorD& t) {
      grads.emplace_back(name, tape.grad(t));
    });
    grads.emplace_back("input.frame0", tape.grad(i0));
    grads.emplace_back("input.frame1", tape.grad(i1));
    net.detach_parameters();
    i0 = i0.detached();
    i1 = i1.detached();
  }

  ModelGradCheckReport report;
  size_t slot = 0;
  auto check_tensor = [&](const std::string& name, TensorD& t) {
    const std::vector<double>& g = grads[slot].second;
    if (grads[slot].first != name)
      throw std::logic_error("gradcheck slot order mismatch at " + name);
    slot++;
    const size_t n = t.numel();
    const int coords = int(std::min<size_t>(size_t(coords_per_tensor), n));
    for (int k = 0; k < coords; k++) {
      const size_t i = size_t(rng.next_below(n));
      double* data = t.mutable_data();
      const double keep = data[i];
      data[i] = keep + step;
      const double up = eval_loss();
      data[i] = keep - step;
      const double down = eval_loss();
      data[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double err = rel_err(g[i], fd);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_tensor = name;
      }
    }
  };

  net.for_each_parameter(check_tensor);
  check_tensor("input.frame0", i0);
  check_tensor("input.frame1", i1);
  return report;
}

}  // namespace pmcr
