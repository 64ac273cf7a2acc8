#pragma once

#include <string>
#include <vector>

#include "pmcr/rng.hpp"
#include "pmcr/tensor.hpp"

namespace pmcr {

struct TripletRef {
  std::string dir;  // directory containing im1/im2/im3
  std::string id;   // sequence name as listed
};

struct Triplet {
  Tensor frame0, frame_gt, frame1;  // (1,3,h,w) in [0,1]; im2 is the midpoint
  std::string id;
};

// Vimeo-style layout: root/sequences/<line>/im{1,2,3}.png, one sequence per
// line of list_file. Refs come back in list order; files are only touched by
// load_triplet.
std::vector<TripletRef> scan_dataset(const std::string& root, const std::string& list_file);

Triplet load_triplet(const TripletRef& ref);

// Training augmentation: one shared random crop (crop x crop), then
// independent coin flips for horizontal flip, vertical flip, k*90-degree
// rotation and temporal order reversal. Identical geometry is applied to all
// three frames; reversal swaps frame0/frame1 and leaves the midpoint alone.
// Draw order from rng: crop_x, crop_y, hflip, vflip, k, swap.
Triplet augment(const Triplet& t, int crop, SplitMix64& rng);

}  // namespace pmcr
