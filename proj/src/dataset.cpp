#include "pmcr/dataset.hpp"

#include <fstream>

#include "pmcr/image_io.hpp"

namespace pmcr {

std::vector<TripletRef> scan_dataset(const std::string& root, const std::string& list_file) {
  std::ifstream f(list_file);
  if (!f) throw IoError("cannot open list file " + list_file);
  std::vector<TripletRef> refs;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const std::string id = line.substr(start);
    refs.push_back(TripletRef{root + "/sequences/" + id, id});
  }
  return refs;
}

namespace {

Tensor load_frame(const TripletRef& ref, const char* name) {
  try {
    return load_image(ref.dir + "/" + name);
  } catch (const IoError& e) {
    throw IoError("incomplete triplet " + ref.id + ": " + e.what());
  }
}

Tensor crop_frame(const Tensor& t, int y0, int x0, int size) {
  Tensor out(Shape4{1, t.c(), size, size});
  for (int c = 0; c < t.c(); c++)
    for (int y = 0; y < size; y++)
      std::copy_n(t.data() + t.index(0, c, y0 + y, x0), size,
                  out.mutable_data() + out.index(0, c, y, 0));
  return out;
}

Tensor hflip(const Tensor& t) {
  Tensor out(t.shape());
  const int h = t.h(), w = t.w();
  for (int c = 0; c < t.c(); c++)
    for (int y = 0; y < h; y++)
      for (int x = 0; x < w; x++)
        out.mutable_data()[out.index(0, c, y, x)] = t.at(0, c, y, w - 1 - x);
  return out;
}

Tensor vflip(const Tensor& t) {
  Tensor out(t.shape());
  const int h = t.h(), w = t.w();
  for (int c = 0; c < t.c(); c++)
    for (int y = 0; y < h; y++)
      std::copy_n(t.data() + t.index(0, c, h - 1 - y, 0), w,
                  out.mutable_data() + out.index(0, c, y, 0));
  return out;
}

// 90-degree clockwise rotation of a square frame
Tensor rot90(const Tensor& t) {
  const int s = t.h();
  Tensor out(t.shape());
  for (int c = 0; c < t.c(); c++)
    for (int y = 0; y < s; y++)
      for (int x = 0; x < s; x++)
        out.mutable_data()[out.index(0, c, y, x)] = t.at(0, c, s - 1 - x, y);
  return out;
}

}  // namespace

Triplet load_triplet(const TripletRef& ref) {
  Triplet t;
  t.id = ref.id;
  t.frame0 = load_frame(ref, "im1.png");
  t.frame_gt = load_frame(ref, "im2.png");
  t.frame1 = load_frame(ref, "im3.png");
  if (!(t.frame0.shape() == t.frame_gt.shape()) || !(t.frame0.shape() == t.frame1.shape()))
    throw IoError("triplet " + ref.id + ": frames disagree on size");
  return t;
}

Triplet augment(const Triplet& t, int crop, SplitMix64& rng) {
  const int h = t.frame0.h(), w = t.frame0.w();
  if (h < crop || w < crop)
    throw std::invalid_argument("augment: frames " + t.frame0.shape().str() +
                                " smaller than crop " + std::to_string(crop));

  const int x0 = int(rng.next_below(uint64_t(w - crop + 1)));
  const int y0 = int(rng.next_below(uint64_t(h - crop + 1)));
  const bool do_hflip = rng.coin();
  const bool do_vflip = rng.coin();
  const int k = int(rng.next_below(4));
  const bool do_swap = rng.coin();

  auto transform = [&](const Tensor& frame) {
    Tensor out = crop_frame(frame, y0, x0, crop);
    if (do_hflip) out = hflip(out);
    if (do_vflip) out = vflip(out);
    for (int i = 0; i < k; i++) out = rot90(out);
    return out;
  };

  Triplet result;
  result.id = t.id;
  result.frame_gt = transform(t.frame_gt);
  Tensor a = transform(t.frame0);
  Tensor b = transform(t.frame1);
  result.frame0 = do_swap ? b : a;
  result.frame1 = do_swap ? a : b;
  return result;
}

}  // namespace pmcr
