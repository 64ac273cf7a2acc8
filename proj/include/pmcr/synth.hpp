#pragma once

#include <string>
#include <vector>

#include "pmcr/dataset.hpp"

namespace pmcr {

// Writes `count` synthetic triplets in the Vimeo directory layout
// (root/sequences/<id>/im{1,2,3}.png plus root/tri_trainlist.txt) and
// returns their refs. Each sequence is a smooth random texture translating
// by a per-sequence subpixel displacement of at most max_shift pixels per
// frame, so im2 is the exact temporal midpoint. max_shift = 0 produces a
// static scene.
std::vector<TripletRef> make_synthetic_dataset(const std::string& root, int count, int h,
                                               int w, uint64_t seed, double max_shift = 3.0);

}  // namespace pmcr
