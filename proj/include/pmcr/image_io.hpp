#pragma once

#include <stdexcept>
#include <string>

#include "pmcr/tensor.hpp"

namespace pmcr {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Decodes an 8-bit RGB PNG (RGBA alpha is dropped) or binary PPM into a
// (1,3,h,w) tensor with values in [0,1]. Anything else raises IoError.
Tensor load_image(const std::string& path);

// Writes PNG or PPM depending on the file extension. Values are clamped to
// [0,1] and rounded half-up to 8 bits.
void save_image(const Tensor& image, const std::string& path);

// Raw little-endian f32 dump of all planes, NCHW order (used for flow dumps).
void save_f32(const Tensor& t, const std::string& path);

}  // namespace pmcr
