#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pmcr/model.hpp"
#include "pmcr/tensor.hpp"

namespace pmcr {

struct GradCheckOptions {
  double step = 1e-3;      // central-difference step
  uint64_t seed = 7;       // projection vector seed
};

// Compares the tape gradient of op(inputs) against central finite
// differences in double precision. The scalar objective is a fixed random
// projection of the op output; the finite-difference side re-runs the op on
// detached clones, so it is independent of the recorded backward path.
// Returns the max relative error max |g - fd| / max(1, |g|, |fd|) over every
// element of every input. Reports, never throws on a large error.
double gradcheck_op(const std::function<TensorD(const std::vector<TensorD>&)>& op,
                    const std::vector<TensorD>& inputs, const GradCheckOptions& opt = {});

struct ModelGradCheckReport {
  double max_rel_err = 0;
  std::string worst_tensor;
};

// End-to-end check of the training objective in double precision: tape
// gradients of every parameter (and both input frames) are compared against
// central differences on a seeded random subset of coordinates per tensor.
// The default step is small because the census term rescales image values
// by 255, which amplifies finite-difference truncation error.
ModelGradCheckReport model_loss_gradcheck(const ModelConfig& cfg, Shape4 input_shape,
                                          int coords_per_tensor, uint64_t seed,
                                          double step = 1e-6);

}  // namespace pmcr
