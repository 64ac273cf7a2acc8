#pragma once

#include "pmcr/tensor.hpp"

namespace pmcr {

// Renders a (1,2,h,w) flow field with the standard optical-flow color wheel,
// normalized by the field's own maximum magnitude. Returns a (1,3,h,w) image
// in [0,1].
Tensor flow_to_color(const Tensor& flow);

}  // namespace pmcr
