#include <doctest.h>

#include <set>

#include "pmcr/gradcheck.hpp"
#include "pmcr/loss.hpp"
#include "pmcr/model.hpp"
#include "testutil.hpp"

using namespace pmcr;
using namespace pmcr::testutil;

namespace {

// closed-form parameter count, written out independently of the library
size_t expected_encoder_params() {
  const int widths[5] = {3, 48, 96, 144, 192};
  size_t total = 0;
  for (int l = 1; l <= 4; l++) {
    total += size_t(widths[l - 1]) * widths[l] * 9 + widths[l];  // stride-2 conv
    total += size_t(widths[l]) * widths[l] * 9 + widths[l];      // stride-1 conv
    total += 2 * size_t(widths[l]);                              // two PReLU slopes
  }
  return total;
}

size_t expected_decoder_params(int in_c, int hidden, int groups, int out_c) {
  size_t total = size_t(in_c) * hidden * 9 + hidden;                      // head
  total += 3 * (size_t(hidden) * (hidden / groups) * 9 + hidden);         // grouped body
  total += 4 * size_t(hidden);                                            // PReLU slopes
  total += size_t(hidden) * out_c * 16 + out_c;                           // 4x4 deconv
  return total;
}

size_t expected_total_params(const ModelConfig& cfg) {
  const int out_c = cfg.ablate_csm ? 7 : 8;
  size_t total = expected_encoder_params();
  total += expected_decoder_params(2 * 192, cfg.hidden_width, cfg.groups, out_c);
  for (int level = 1; level <= 3; level++)
    total += expected_decoder_params(decoder_in_channels(cfg, level), cfg.hidden_width,
                                     cfg.groups, out_c);
  return total;
}

Tensor zero_flow(int n, int h, int w) { return Tensor(Shape4{n, 2, h, w}, 0.0f); }

}  // namespace

TEST_CASE("encoder produces the 48/96/144/192 pyramid") {
  PmcrNet net(ModelConfig{}, 3);
  Tensor img(Shape4{1, 3, 256, 256}, 0.5f);
  auto feats = net.encode(img);
  CHECK(feats[0].shape() == Shape4{1, 48, 128, 128});
  CHECK(feats[1].shape() == Shape4{1, 96, 64, 64});
  CHECK(feats[2].shape() == Shape4{1, 144, 32, 32});
  CHECK(feats[3].shape() == Shape4{1, 192, 16, 16});
  CHECK_THROWS_AS(net.encode(Tensor(Shape4{1, 3, 100, 96}, 0.0f)), std::invalid_argument);
}

TEST_CASE("zero input yields exactly zero features (biases are zero-initialized)") {
  PmcrNet net(ModelConfig{}, 4);
  auto feats = net.encode(Tensor(Shape4{1, 3, 64, 64}, 0.0f));
  for (const auto& f : feats)
    for (size_t i = 0; i < f.numel(); i++) CHECK(f.data()[i] == 0.0f);
}

TEST_CASE("the encoder is shared between the two frames") {
  SplitMix64 rng(70);
  PmcrNet net(ModelConfig{}, 5);
  Tensor img = random_tensor<float>(Shape4{1, 3, 64, 64}, rng, 0.0, 1.0);
  auto f0 = net.encode(img);
  auto f1 = net.encode(img);
  for (int l = 0; l < 4; l++) CHECK(bitwise_equal(f0[size_t(l)], f1[size_t(l)]));
}

TEST_CASE("bottom decoder emits a level-3 state of the right shapes") {
  SplitMix64 rng(71);
  PmcrNet net(ModelConfig{}, 6);
  Tensor feat0 = random_tensor<float>(Shape4{1, 192, 16, 16}, rng);
  Tensor feat1 = random_tensor<float>(Shape4{1, 192, 16, 16}, rng);
  Tensor img0 = random_tensor<float>(Shape4{1, 3, 32, 32}, rng, 0.0, 1.0);
  Tensor img1 = random_tensor<float>(Shape4{1, 3, 32, 32}, rng, 0.0, 1.0);
  LevelState s = net.decode_bottom(feat0, feat1, img0, img1);
  CHECK(s.flow_t0.shape() == Shape4{1, 2, 32, 32});
  CHECK(s.flow_t1.shape() == Shape4{1, 2, 32, 32});
  CHECK(s.mask.shape() == Shape4{1, 1, 32, 32});
  CHECK(s.residual.shape() == Shape4{1, 3, 32, 32});
  CHECK(s.frame.shape() == Shape4{1, 3, 32, 32});
  for (size_t i = 0; i < s.mask.numel(); i++) {
    CHECK(s.mask.data()[i] >= 0.0f);
    CHECK(s.mask.data()[i] <= 1.0f);
  }
  CHECK_THROWS_AS(net.decode_bottom(feat0, Tensor(Shape4{1, 144, 16, 16}, 0.0f), img0, img1),
                  std::invalid_argument);
}

TEST_CASE("zeroed weights decode to the plain average of both frames") {
  SplitMix64 rng(72);
  PmcrNet net(ModelConfig{}, 7);
  net.for_each_parameter([](const std::string&, Tensor& t) {
    std::fill_n(t.mutable_data(), t.numel(), 0.0f);
  });
  Tensor feat(Shape4{1, 192, 8, 8}, 0.0f);
  Tensor img0 = random_tensor<float>(Shape4{1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor img1 = random_tensor<float>(Shape4{1, 3, 16, 16}, rng, 0.0, 1.0);
  LevelState s = net.decode_bottom(feat, feat, img0, img1);
  for (size_t i = 0; i < s.flow_t0.numel(); i++) CHECK(s.flow_t0.data()[i] == 0.0f);
  for (size_t i = 0; i < s.mask.numel(); i++) CHECK(s.mask.data()[i] == 0.5f);
  Tensor avg = scalar_mul(add(img0, img1), 0.5f);
  CHECK(max_abs_diff(s.frame, avg) < 1e-7);
}

TEST_CASE("decoder input channel arithmetic matches the architecture contract") {
  ModelConfig cfg;
  CHECK(decoder_in_channels(cfg, 1) == 2 * 48 + 11);
  CHECK(decoder_in_channels(cfg, 2) == 2 * 96 + 11);
  CHECK(decoder_in_channels(cfg, 3) == 2 * 144 + 11);

  ModelConfig e1;
  e1.ablate_pmr = true;
  CHECK(decoder_in_channels(e1, 1) == 2 * 48 + 3);

  ModelConfig e2;
  e2.ablate_pcr = true;
  CHECK(decoder_in_channels(e2, 1) == 2 * 48 + 8);

  ModelConfig e3;
  e3.ablate_csm = true;
  CHECK(decoder_in_channels(e3, 1) == 2 * 48 + 7);
}

TEST_CASE("parameter count matches the closed-form layer summation") {
  PmcrNet net(ModelConfig{}, 8);
  CHECK(net.param_count() == expected_total_params(ModelConfig{}));

  // encoder portion alone
  size_t encoder = 0;
  net.for_each_parameter([&](const std::string& name, Tensor& t) {
    if (name.starts_with("encoder.")) encoder += t.numel();
  });
  CHECK(encoder == expected_encoder_params());

  // calibration target: within 15% of 6.2e6
  const double total = double(net.param_count());
  CHECK(std::abs(total - 6.2e6) / 6.2e6 < 0.15);
}

TEST_CASE("parameter count is seed-invariant and name order is stable") {
  PmcrNet a(ModelConfig{}, 1), b(ModelConfig{}, 999);
  CHECK(a.param_count() == b.param_count());
  const auto na = a.named_parameters();
  const auto nb = b.named_parameters();
  REQUIRE(na.size() == nb.size());
  for (size_t i = 0; i < na.size(); i++) {
    CHECK(na[i].first == nb[i].first);
    CHECK(na[i].second == nb[i].second);
  }
}

TEST_CASE("ablation configs construct with distinct parameter counts and fingerprints") {
  std::set<size_t> counts;
  std::set<std::string> prints;
  for (int which = 0; which < 4; which++) {
    ModelConfig cfg;
    cfg.ablate_pmr = which == 1;
    cfg.ablate_pcr = which == 2;
    cfg.ablate_csm = which == 3;
    PmcrNet net(cfg, 11);
    CHECK(net.param_count() == expected_total_params(cfg));
    counts.insert(net.param_count());
    prints.insert(cfg.fingerprint());
  }
  CHECK(counts.size() == 4);
  CHECK(prints.size() == 4);
}

TEST_CASE("forward shape ladder and crop-back on a non-multiple size") {
  PmcrNet net(ModelConfig{}, 9);
  SplitMix64 rng(73);
  Tensor i0 = random_tensor<float>(Shape4{1, 3, 96, 160}, rng, 0.0, 1.0);
  Tensor i1 = random_tensor<float>(Shape4{1, 3, 96, 160}, rng, 0.0, 1.0);
  ForwardResult res = net.forward(i0, i1);
  CHECK(res.output.shape() == Shape4{1, 3, 96, 160});
  for (int l = 0; l < 4; l++)
    CHECK(res.levels[size_t(l)].frame.shape() == Shape4{1, 3, 96 >> l, 160 >> l});
  for (size_t i = 0; i < res.output.numel(); i++) CHECK(std::isfinite(res.output.data()[i]));

  // odd size goes through padding and comes back at the original size
  Tensor j0 = random_tensor<float>(Shape4{1, 3, 50, 70}, rng, 0.0, 1.0);
  Tensor j1 = random_tensor<float>(Shape4{1, 3, 50, 70}, rng, 0.0, 1.0);
  CHECK(net.forward(j0, j1).output.shape() == Shape4{1, 3, 50, 70});

  CHECK_THROWS_WITH_AS(net.forward(i0, j1), doctest::Contains("frame size mismatch"),
                       std::invalid_argument);
}

TEST_CASE("forward is bitwise deterministic for a fixed seed") {
  SplitMix64 rng(74);
  Tensor i0 = random_tensor<float>(Shape4{1, 3, 48, 48}, rng, 0.0, 1.0);
  Tensor i1 = random_tensor<float>(Shape4{1, 3, 48, 48}, rng, 0.0, 1.0);
  PmcrNet a(ModelConfig{}, 42);
  PmcrNet b(ModelConfig{}, 42);
  CHECK(bitwise_equal(a.forward(i0, i1).output, b.forward(i0, i1).output));
}

TEST_CASE("one backward pass reaches every parameter") {
  SplitMix64 rng(75);
  PmcrNet net(ModelConfig{}, 10);
  Tensor i0 = random_tensor<float>(Shape4{1, 3, 64, 64}, rng, 0.0, 1.0);
  Tensor i1 = random_tensor<float>(Shape4{1, 3, 64, 64}, rng, 0.0, 1.0);
  Tensor gt = random_tensor<float>(Shape4{1, 3, 64, 64}, rng, 0.0, 1.0);

  Tape tape;
  net.watch_parameters(tape);
  ForwardResult fwd = net.forward(i0, i1);
  TotalLossT<float> loss = total_loss(fwd.levels, gt, 0.0, 300, LossConfig{});
  tape.backward(loss.value);

  net.for_each_parameter([&](const std::string& name, Tensor& t) {
    const std::vector<float>& g = tape.grad(t);
    bool any = false;
    for (float v : g)
      if (v != 0.0f) any = true;
    INFO("parameter ", name);
    CHECK(any);
  });
}

TEST_CASE("csm algebra: mask extremes, equal inputs, temporal symmetry") {
  SplitMix64 rng(76);
  const int h = 12, w = 12;
  Tensor img0 = random_tensor<float>(Shape4{1, 3, h, w}, rng, 0.0, 1.0);
  Tensor img1 = random_tensor<float>(Shape4{1, 3, h, w}, rng, 0.0, 1.0);
  Tensor f0 = random_tensor<float>(Shape4{1, 2, h, w}, rng, -1.5, 1.5);
  Tensor f1 = random_tensor<float>(Shape4{1, 2, h, w}, rng, -1.5, 1.5);
  Tensor zero_r(Shape4{1, 3, h, w}, 0.0f);

  // mask == 1 selects the warped first frame bitwise
  Tensor ones(Shape4{1, 1, h, w}, 1.0f);
  CHECK(bitwise_equal(csm_apply(ones, zero_r, f0, f1, img0, img1), backward_warp(img0, f0)));

  // mask == 0 selects the warped second frame bitwise
  Tensor zeros(Shape4{1, 1, h, w}, 0.0f);
  CHECK(bitwise_equal(csm_apply(zeros, zero_r, f0, f1, img0, img1), backward_warp(img1, f1)));

  // equal inputs, zero flow, any mask: the input is reproduced exactly
  SplitMix64 rng2(77);
  Tensor mask = random_tensor<float>(Shape4{1, 1, h, w}, rng2, 0.0, 1.0);
  Tensor zf = zero_flow(1, h, w);
  Tensor out = csm_apply(mask, zero_r, zf, zf, img0, img0);
  CHECK(max_abs_diff(out, img0) < 1e-7);

  // half mask with zero flows averages the two inputs
  Tensor half(Shape4{1, 1, h, w}, 0.5f);
  CHECK(max_abs_diff(csm_apply(half, zero_r, zf, zf, img0, img1),
                     scalar_mul(add(img0, img1), 0.5f)) < 1e-7);

  // swapping frames, flows and the mask leaves the blend unchanged
  Tensor inv = scalar_add(scalar_mul(mask, -1.0f), 1.0f);
  Tensor a = csm_apply(mask, zero_r, f0, f1, img0, img1);
  Tensor b = csm_apply(inv, zero_r, f1, f0, img1, img0);
  CHECK(max_abs_diff(a, b) < 1e-6);
}

TEST_CASE("ablated forwards run end to end") {
  SplitMix64 rng(78);
  Tensor i0 = random_tensor<float>(Shape4{1, 3, 32, 32}, rng, 0.0, 1.0);
  Tensor i1 = random_tensor<float>(Shape4{1, 3, 32, 32}, rng, 0.0, 1.0);
  for (int which = 1; which <= 3; which++) {
    ModelConfig cfg;
    cfg.hidden_width = 24;
    cfg.ablate_pmr = which == 1;
    cfg.ablate_pcr = which == 2;
    cfg.ablate_csm = which == 3;
    PmcrNet net(cfg, 13);
    ForwardResult res = net.forward(i0, i1);
    CHECK(res.output.shape() == i0.shape());
    if (cfg.ablate_csm) {
      CHECK(res.levels[0].mask.empty());
      CHECK(res.levels[0].residual.empty());
    }
  }
}

TEST_CASE("small-config end-to-end gradcheck of the training objective") {
  ModelConfig cfg;
  cfg.hidden_width = 12;
  cfg.groups = 3;
  ModelGradCheckReport rep = model_loss_gradcheck(cfg, Shape4{1, 3, 32, 32},
                                                  /*coords_per_tensor=*/2, /*seed=*/5);
  INFO("worst tensor: ", rep.worst_tensor);
  CHECK(rep.max_rel_err < 1e-4);
}
