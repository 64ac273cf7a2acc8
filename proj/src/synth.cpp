#include "pmcr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "pmcr/image_io.hpp"
#include "pmcr/rng.hpp"

namespace pmcr {

namespace {

struct Wave {
  double fx, fy, phase, amp;
};

// smooth band-limited texture: a sum of oriented sinusoids per channel
double texture(const std::vector<Wave>& waves, double x, double y) {
  double v = 0.5;
  for (const Wave& w : waves)
    v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

}  // namespace

std::vector<TripletRef> make_synthetic_dataset(const std::string& root, int count, int h,
                                               int w, uint64_t seed, double max_shift) {
  std::filesystem::create_directories(root + "/sequences");
  std::ofstream list(root + "/tri_trainlist.txt", std::ios::trunc);
  if (!list) throw IoError("cannot write " + root + "/tri_trainlist.txt");

  SplitMix64 rng(SplitMix64::mix(seed ^ 0x5e17f00dull));
  std::vector<TripletRef> refs;
  for (int s = 0; s < count; s++) {
    char id[32];
    std::snprintf(id, sizeof(id), "%05d/%04d", 1, s + 1);
    const std::string dir = root + "/sequences/" + id;
    std::filesystem::create_directories(dir);

    std::vector<std::vector<Wave>> channel_waves(3);
    for (auto& waves : channel_waves)
      for (int k = 0; k < 4; k++)
        waves.push_back(Wave{rng.uniform(0.005, 0.05), rng.uniform(0.005, 0.05),
                             rng.uniform(0.0, 2.0 * std::numbers::pi), 0.11});
    const double dx = max_shift == 0.0 ? 0.0 : rng.uniform(-max_shift, max_shift);
    const double dy = max_shift == 0.0 ? 0.0 : rng.uniform(-max_shift, max_shift);

    // im1 leads, im3 trails; im2 sits exactly in between
    for (int f = 0; f < 3; f++) {
      const double t = double(f - 1);  // -1, 0, +1
      Tensor img(Shape4{1, 3, h, w});
      for (int c = 0; c < 3; c++)
        for (int y = 0; y < h; y++)
          for (int x = 0; x < w; x++)
            img.mutable_data()[img.index(0, c, y, x)] =
                float(texture(channel_waves[size_t(c)], x + t * dx, y + t * dy));
      char name[16];
      std::snprintf(name, sizeof(name), "/im%d.png", f + 1);
      save_image(img, dir + name);
    }
    list << id << "\n";
    refs.push_back(TripletRef{dir, id});
  }
  return refs;
}

}  // namespace pmcr
