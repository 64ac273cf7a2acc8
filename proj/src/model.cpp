#include "pmcr/model.hpp"

#include <cmath>

#include "pmcr/rng.hpp"

namespace pmcr {

void ModelConfig::validate() const {
  if (hidden_width < 1 || groups < 1)
    throw std::invalid_argument("model config: hidden_width and groups must be positive");
  if (hidden_width % groups != 0)
    throw std::invalid_argument("model config: hidden_width " + std::to_string(hidden_width) +
                                " not divisible by groups " + std::to_string(groups));
}

std::string ModelConfig::fingerprint() const {
  return "hidden=" + std::to_string(hidden_width) + ",groups=" + std::to_string(groups) +
         ",pmr=" + (ablate_pmr ? "0" : "1") + ",pcr=" + (ablate_pcr ? "0" : "1") +
         ",csm=" + (ablate_csm ? "0" : "1") + ",bias=" + (conv_bias ? "1" : "0");
}

int decoder_in_channels(const ModelConfig& cfg, int level) {
  if (level < 1 || level > 3)
    throw std::invalid_argument("decoder_in_channels: level must be 1..3");
  int c = 2 * kEncoderWidths[size_t(level) - 1];
  if (!cfg.ablate_pmr) {
    c += 4;                        // two flow fields
    if (!cfg.ablate_csm) c += 4;   // mask + residual
  }
  if (!cfg.ablate_pcr) c += 3;     // previous-level synthesized frame
  return c;
}

template <class T>
TensorT<T> csm_apply(const TensorT<T>& mask, const TensorT<T>& residual,
                     const TensorT<T>& flow_t0, const TensorT<T>& flow_t1,
                     const TensorT<T>& img0, const TensorT<T>& img1) {
  if (mask.c() != 1)
    throw std::invalid_argument("csm_apply: mask must be 1-channel");
  if (!(img0.shape() == img1.shape()))
    throw std::invalid_argument("csm_apply: source images disagree: " + img0.shape().str() +
                                " vs " + img1.shape().str());
  TensorT<T> w0 = backward_warp(img0, flow_t0);
  TensorT<T> w1 = backward_warp(img1, flow_t1);
  TensorT<T> inv = scalar_add(scalar_mul(mask, T(-1)), T(1));
  TensorT<T> blended = add(mul(mask, w0), mul(inv, w1));
  return add(blended, residual);
}

namespace {

// Kaiming-uniform fan-in bound with the leaky gain for slope 0.25.
template <class T>
void init_conv_kernel(TensorT<T>& k, SplitMix64& rng) {
  const double fan_in = double(k.c()) * k.h() * k.w();
  const double gain = std::sqrt(2.0 / (1.0 + 0.25 * 0.25));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  for (size_t i = 0; i < k.numel(); i++)
    k.mutable_data()[i] = T(rng.uniform(-bound, bound));
}

}  // namespace

template <class T>
PmcrNetT<T>::PmcrNetT(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();

  auto make_conv = [&](int in_c, int out_c, int k, int stride, int pad, int groups) {
    ConvSpecT<T> spec;
    spec.kernel = TensorT<T>(Shape4{out_c, in_c / groups, k, k});
    if (cfg_.conv_bias) spec.bias = TensorT<T>(Shape4{1, out_c, 1, 1}, T(0));
    spec.stride = stride;
    spec.padding = pad;
    spec.groups = groups;
    return spec;
  };
  auto make_slope = [&](int c) { return TensorT<T>(Shape4{1, c, 1, 1}, T(0.25)); };

  int prev = 3;
  for (int l = 0; l < 4; l++) {
    const int width = kEncoderWidths[size_t(l)];
    enc_[size_t(2 * l)] = ConvUnit{make_conv(prev, width, 3, 2, 1, 1), make_slope(width)};
    enc_[size_t(2 * l + 1)] = ConvUnit{make_conv(width, width, 3, 1, 1, 1), make_slope(width)};
    prev = width;
  }

  const int hidden = cfg_.hidden_width;
  const int out_ch = cfg_.ablate_csm ? 7 : 8;
  for (int i = 0; i < 4; i++) {
    const int level = i + 1;
    const int in_c = level == 4 ? 2 * kEncoderWidths[3] : decoder_in_channels(cfg_, level);
    Decoder& d = dec_[size_t(i)];
    d.head = ConvUnit{make_conv(in_c, hidden, 3, 1, 1, 1), make_slope(hidden)};
    for (auto& unit : d.body)
      unit = ConvUnit{make_conv(hidden, hidden, 3, 1, 1, cfg_.groups), make_slope(hidden)};
    d.up = make_conv(hidden, out_ch, 4, 2, 1, 1);
  }

  // deterministic init in registry order
  SplitMix64 rng(SplitMix64::mix(seed ^ 0x9044661bull));
  for_each_parameter([&](const std::string& name, TensorT<T>& t) {
    if (name.ends_with(".weight")) init_conv_kernel(t, rng);
    // biases stay zero, slopes stay 0.25
  });
}

template <class T>
void PmcrNetT<T>::for_each_parameter(
    const std::function<void(const std::string&, TensorT<T>&)>& fn) {
  auto visit_conv = [&](const std::string& prefix, ConvSpecT<T>& spec) {
    fn(prefix + ".weight", spec.kernel);
    if (!spec.bias.empty()) fn(prefix + ".bias", spec.bias);
  };
  for (int l = 0; l < 4; l++) {
    const std::string b = "encoder.b" + std::to_string(l + 1);
    for (int j = 0; j < 2; j++) {
      ConvUnit& u = enc_[size_t(2 * l + j)];
      visit_conv(b + ".conv" + std::to_string(j), u.conv);
      fn(b + ".act" + std::to_string(j) + ".slope", u.slope);
    }
  }
  for (int i = 0; i < 4; i++) {
    const std::string dname = "decoder" + std::to_string(i + 1);
    Decoder& d = dec_[size_t(i)];
    visit_conv(dname + ".head", d.head.conv);
    fn(dname + ".head_act.slope", d.head.slope);
    for (int j = 0; j < 3; j++) {
      visit_conv(dname + ".body" + std::to_string(j), d.body[size_t(j)].conv);
      fn(dname + ".body_act" + std::to_string(j) + ".slope", d.body[size_t(j)].slope);
    }
    visit_conv(dname + ".up", d.up);
  }
}

template <class T>
size_t PmcrNetT<T>::param_count() const {
  size_t total = 0;
  const_cast<PmcrNetT*>(this)->for_each_parameter(
      [&](const std::string&, TensorT<T>& t) { total += t.numel(); });
  return total;
}

template <class T>
std::vector<std::pair<std::string, Shape4>> PmcrNetT<T>::named_parameters() const {
  std::vector<std::pair<std::string, Shape4>> out;
  const_cast<PmcrNetT*>(this)->for_each_parameter(
      [&](const std::string& name, TensorT<T>& t) { out.emplace_back(name, t.shape()); });
  return out;
}

template <class T>
std::vector<TensorT<T>*> PmcrNetT<T>::parameter_ptrs() {
  std::vector<TensorT<T>*> out;
  for_each_parameter([&](const std::string&, TensorT<T>& t) { out.push_back(&t); });
  return out;
}

template <class T>
void PmcrNetT<T>::watch_parameters(TapeT<T>& tape) {
  for_each_parameter([&](const std::string&, TensorT<T>& t) { tape.watch(t); });
}

template <class T>
void PmcrNetT<T>::detach_parameters() {
  for_each_parameter([](const std::string&, TensorT<T>& t) {
    t.tape = nullptr;
    t.node = -1;
  });
}

template <class T>
std::array<TensorT<T>, 4> PmcrNetT<T>::encode(const TensorT<T>& image) const {
  if (image.c() != 3)
    throw std::invalid_argument("encode: expected a 3-channel image, got " +
                                image.shape().str());
  if (image.h() % kPadMultiple != 0 || image.w() % kPadMultiple != 0)
    throw std::invalid_argument("encode: spatial dims of " + image.shape().str() +
                                " must be multiples of " + std::to_string(kPadMultiple));
  std::array<TensorT<T>, 4> feats;
  TensorT<T> x = image;
  for (int l = 0; l < 4; l++) {
    const ConvUnit& down = enc_[size_t(2 * l)];
    const ConvUnit& keep = enc_[size_t(2 * l + 1)];
    x = prelu(conv2d(x, down.conv), down.slope);
    x = prelu(conv2d(x, keep.conv), keep.slope);
    feats[size_t(l)] = x;
  }
  return feats;
}

template <class T>
TensorT<T> PmcrNetT<T>::run_decoder(const Decoder& dec, const TensorT<T>& input) const {
  TensorT<T> x = prelu(conv2d(input, dec.head.conv), dec.head.slope);
  for (const auto& unit : dec.body)
    x = prelu(channel_shuffle(conv2d(x, unit.conv), cfg_.groups), unit.slope);
  return conv_transpose2d(x, dec.up);
}

template <class T>
LevelStateT<T> PmcrNetT<T>::split_state(const TensorT<T>& raw, const TensorT<T>& img0,
                                        const TensorT<T>& img1) const {
  LevelStateT<T> s;
  s.flow_t0 = slice_channels(raw, 0, 2);
  s.flow_t1 = slice_channels(raw, 2, 2);
  if (cfg_.ablate_csm) {
    s.frame = slice_channels(raw, 4, 3);
  } else {
    s.mask = sigmoid(slice_channels(raw, 4, 1));
    s.residual = slice_channels(raw, 5, 3);
    s.frame = csm_apply(s.mask, s.residual, s.flow_t0, s.flow_t1, img0, img1);
  }
  return s;
}

template <class T>
LevelStateT<T> PmcrNetT<T>::decode_bottom(const TensorT<T>& feat0, const TensorT<T>& feat1,
                                          const TensorT<T>& img0, const TensorT<T>& img1) const {
  if (!(feat0.shape() == feat1.shape()) || feat0.c() != kEncoderWidths[3])
    throw std::invalid_argument("decode_bottom: expected two " +
                                std::to_string(kEncoderWidths[3]) + "-channel feature maps");
  TensorT<T> raw = run_decoder(dec_[3], concat<T>({feat0, feat1}));
  return split_state(raw, img0, img1);
}

template <class T>
LevelStateT<T> PmcrNetT<T>::decode_step(int level, const LevelStateT<T>& state,
                                        const TensorT<T>& feat0, const TensorT<T>& feat1,
                                        const TensorT<T>& img0_next,
                                        const TensorT<T>& img1_next) const {
  if (level < 1 || level > 3)
    throw std::invalid_argument("decode_step: level must be 1..3, got " + std::to_string(level));
  if (feat0.c() != kEncoderWidths[size_t(level) - 1] || !(feat0.shape() == feat1.shape()))
    throw std::invalid_argument("decode_step: features do not match level " +
                                std::to_string(level));
  if (feat0.h() != state.flow_t0.h() || feat0.w() != state.flow_t0.w())
    throw std::invalid_argument("decode_step: state resolution " + state.flow_t0.shape().str() +
                                " does not match features " + feat0.shape().str());

  std::vector<TensorT<T>> inputs;
  if (cfg_.ablate_pmr) {
    inputs.push_back(feat0);
    inputs.push_back(feat1);
  } else {
    inputs.push_back(backward_warp(feat0, state.flow_t0));
    inputs.push_back(backward_warp(feat1, state.flow_t1));
    inputs.push_back(state.flow_t0);
    inputs.push_back(state.flow_t1);
    if (!cfg_.ablate_csm) {
      inputs.push_back(state.mask);
      inputs.push_back(state.residual);
    }
  }
  if (!cfg_.ablate_pcr) inputs.push_back(state.frame);

  TensorT<T> raw = run_decoder(dec_[size_t(level) - 1], concat(inputs));
  return split_state(raw, img0_next, img1_next);
}

template <class T>
ForwardResultT<T> PmcrNetT<T>::forward(const TensorT<T>& frame0,
                                       const TensorT<T>& frame1) const {
  if (!(frame0.shape() == frame1.shape()))
    throw std::invalid_argument("frame size mismatch: " + frame0.shape().str() + " vs " +
                                frame1.shape().str());
  if (frame0.c() != 3)
    throw std::invalid_argument("forward: expected 3-channel frames, got " +
                                frame0.shape().str());

  ForwardResultT<T> res;
  CropRecord rec;
  TensorT<T> p0 = pad_to_multiple(frame0, kPadMultiple, rec);
  TensorT<T> p1 = pad_to_multiple(frame1, kPadMultiple, rec);
  res.pyramid0 = build_pyramid(p0, 4);
  res.pyramid1 = build_pyramid(p1, 4);
  const auto feats0 = encode(p0);
  const auto feats1 = encode(p1);

  res.levels[3] = decode_bottom(feats0[3], feats1[3], res.pyramid0.levels[3],
                                res.pyramid1.levels[3]);
  for (int level = 3; level >= 1; level--) {
    res.levels[size_t(level) - 1] =
        decode_step(level, res.levels[size_t(level)], feats0[size_t(level) - 1],
                    feats1[size_t(level) - 1], res.pyramid0.levels[size_t(level) - 1],
                    res.pyramid1.levels[size_t(level) - 1]);
  }
  res.output = crop_back(res.levels[0].frame, rec);
  return res;
}

template class PmcrNetT<float>;
template class PmcrNetT<double>;

template TensorT<float> csm_apply<float>(const TensorT<float>&, const TensorT<float>&,
                                         const TensorT<float>&, const TensorT<float>&,
                                         const TensorT<float>&, const TensorT<float>&);
template TensorT<double> csm_apply<double>(const TensorT<double>&, const TensorT<double>&,
                                           const TensorT<double>&, const TensorT<double>&,
                                           const TensorT<double>&, const TensorT<double>&);

}  // namespace pmcr
