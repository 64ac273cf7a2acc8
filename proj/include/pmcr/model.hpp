#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pmcr/ops.hpp"
#include "pmcr/tensor.hpp"
#include "pmcr/warp.hpp"

namespace pmcr {

// Encoder channel widths at pyramid levels 1..4.
inline constexpr std::array<int, 4> kEncoderWidths = {48, 96, 144, 192};
inline constexpr int kPadMultiple = 16;

struct ModelConfig {
  int hidden_width = 288;  // decoder body width
  int groups = 3;          // groups of the three shuffled body convolutions
  bool ablate_pmr = false; // drop previous-level motion inputs and feature warping
  bool ablate_pcr = false; // drop the previous-level synthesized-frame input
  bool ablate_csm = false; // predict the frame directly instead of blend+residual
  bool conv_bias = true;

  void validate() const;
  // compact config summary, logged at startup so runs are distinguishable
  std::string fingerprint() const;
};

// Per-level decoder output bundle. flow_* map target-frame coordinates into
// the respective source frame; mask is the occlusion blend weight in [0,1].
// mask/residual are empty under ablate_csm (the frame is predicted directly).
template <class T>
struct LevelStateT {
  TensorT<T> flow_t0;
  TensorT<T> flow_t1;
  TensorT<T> mask;
  TensorT<T> residual;
  TensorT<T> frame;
};

template <class T>
struct ForwardResultT {
  std::array<LevelStateT<T>, 4> levels;  // [0] = full resolution ... [3] = 1/8
  ImagePyramidT<T> pyramid0, pyramid1;   // pyramids of the padded inputs
  TensorT<T> output;                     // levels[0].frame cropped back; unclamped
};

using LevelState = LevelStateT<float>;
using ForwardResult = ForwardResultT<float>;

// Context synthesis: warp both source images by their flows, blend with the
// occlusion mask (broadcast over color channels) and add the residual.
template <class T>
TensorT<T> csm_apply(const TensorT<T>& mask, const TensorT<T>& residual,
                     const TensorT<T>& flow_t0, const TensorT<T>& flow_t1,
                     const TensorT<T>& img0, const TensorT<T>& img1);

// Number of input channels of decoder `level` (1..3) under a config.
int decoder_in_channels(const ModelConfig& cfg, int level);

// Coarse-to-fine frame interpolation network: a shared pyramid encoder for
// both frames and four decoders that jointly refine bidirectional flow,
// occlusion mask and image residual from 1/8 resolution up to full size.
template <class T>
class PmcrNetT {
 public:
  explicit PmcrNetT(const ModelConfig& cfg = {}, uint64_t seed = 1);

  const ModelConfig& config() const { return cfg_; }

  // pyramid features for one frame; spatial dims must be multiples of 16
  std::array<TensorT<T>, 4> encode(const TensorT<T>& image) const;

  LevelStateT<T> decode_bottom(const TensorT<T>& feat0, const TensorT<T>& feat1,
                               const TensorT<T>& img0, const TensorT<T>& img1) const;

  // refines the state at `level` (3..1) into the state one level finer
  LevelStateT<T> decode_step(int level, const LevelStateT<T>& state, const TensorT<T>& feat0,
                             const TensorT<T>& feat1, const TensorT<T>& img0_next,
                             const TensorT<T>& img1_next) const;

  // full pass: pad, build pyramids, encode both frames, decode coarse to
  // fine, crop the result back to the input size
  ForwardResultT<T> forward(const TensorT<T>& frame0, const TensorT<T>& frame1) const;

  size_t param_count() const;
  std::vector<std::pair<std::string, Shape4>> named_parameters() const;
  void for_each_parameter(const std::function<void(const std::string&, TensorT<T>&)>& fn);
  std::vector<TensorT<T>*> parameter_ptrs();
  void watch_parameters(TapeT<T>& tape);
  void detach_parameters();

 private:
  struct ConvUnit {
    ConvSpecT<T> conv;
    TensorT<T> slope;  // PReLU, per-channel
  };
  struct Decoder {
    ConvUnit head;                     // dense 3x3
    std::array<ConvUnit, 3> body;     // grouped 3x3 + shuffle + PReLU
    ConvSpecT<T> up;                  // 4x4 stride-2 transposed conv
  };

  TensorT<T> run_decoder(const Decoder& dec, const TensorT<T>& input) const;
  LevelStateT<T> split_state(const TensorT<T>& raw, const TensorT<T>& img0,
                             const TensorT<T>& img1) const;

  ModelConfig cfg_;
  std::array<ConvUnit, 8> enc_;   // two conv units per pyramid level
  std::array<Decoder, 4> dec_;    // dec_[0] = finest ... dec_[3] = bottom
};

using PmcrNet = PmcrNetT<float>;

}  // namespace pmcr
