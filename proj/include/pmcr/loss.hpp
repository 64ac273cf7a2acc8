#pragma once

#include <array>

#include "pmcr/model.hpp"
#include "pmcr/tensor.hpp"

namespace pmcr {

enum class TauMode { annealed, fixed, off };

struct LossConfig {
  double alpha = 0.5;       // Charbonnier exponent
  double epsilon = 1e-3;    // Charbonnier smoothing
  int census_patch = 7;     // census window side (odd)
  double tau_start = 0.1;   // multi-scale weight at epoch 0
  double tau_end = 0.0;
  double anneal_fraction = 0.25;  // fraction of epochs over which tau decays
  TauMode mode = TauMode::annealed;

  void validate() const;
};

TauMode tau_mode_from_string(const std::string& s);
std::string to_string(TauMode m);

// Scalar summary of one total_loss evaluation; `aux[l-1]` is the
// reconstruction loss at pyramid level l.
struct LossBreakdown {
  double charbonnier0 = 0;
  double census0 = 0;
  std::array<double, 3> aux{};
  double tau = 0;
  double total = 0;
};

template <class T>
struct TotalLossT {
  TensorT<T> value;  // scalar on the tape
  LossBreakdown parts;
};

// mean over elements of (x^2 + epsilon^2)^alpha
template <class T>
TensorT<T> charbonnier(const TensorT<T>& diff, const LossConfig& cfg = {});

// Soft ternary census distance between the two images' intensity planes,
// Charbonnier-wrapped per pixel and averaged over pixels at least
// patch/2 away from every border. Invariant to a global additive
// brightness shift applied to both images.
template <class T>
TensorT<T> census_loss(const TensorT<T>& a, const TensorT<T>& b, const LossConfig& cfg = {});

// charbonnier(pred - gt) + census_loss(pred, gt); the census term is skipped
// for images smaller than the census window (tiny pyramid levels).
template <class T>
TensorT<T> reconstruction_loss(const TensorT<T>& pred, const TensorT<T>& gt,
                               const LossConfig& cfg = {});

// Piecewise-linear anneal: tau_start at epoch 0, tau_end once
// epoch >= total_epochs * anneal_fraction. `epoch` may be fractional.
double tau_at(double epoch, int total_epochs, const LossConfig& cfg = {});

// Full training objective over the four synthesized levels; the ground-truth
// pyramid is built with the same 2x2 average downsampling as the inputs.
template <class T>
TotalLossT<T> total_loss(const std::array<LevelStateT<T>, 4>& levels, const TensorT<T>& gt,
                         double epoch, int total_epochs, const LossConfig& cfg = {});

}  // namespace pmcr
