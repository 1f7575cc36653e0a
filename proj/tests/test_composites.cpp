#include "doctest.h"

#include "frbdet/decoder.hpp"
#include "frbdet/encoder.hpp"
#include "frbdet/frb.hpp"
#include "frbdet/head.hpp"
#include "frbdet/model.hpp"
#include "testutil.hpp"

using namespace frbdet;
using test::fd_compare;
using test::random_tensor;

TEST_CASE("expand_orientation_channels: U=1 identity, U=4 replication, sum scales by U") {
  Rng rng(1);
  const Tensor img = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  const Tensor one = expand_orientation_channels(img, 1);
  CHECK(one.shape() == std::vector<int>{3, 1, 8, 8});
  for (std::int64_t i = 0; i < img.size(); ++i) CHECK(one[i] == img[i]);

  const Tensor four = expand_orientation_channels(img, 4);
  CHECK(four.shape() == std::vector<int>{3, 4, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int u = 0; u < 4; ++u)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(four(c, u, y, x) == img(c, y, x));
  CHECK(four.sum() == doctest::Approx(4.0 * img.sum()).epsilon(1e-12));
}

namespace {

GaborParams small_gabor() {
  GaborParams p;
  p.orientations = 2;
  p.scales = 4;
  return p;
}

EncoderConfig small_encoder() { return {4, 6, 8, NormMode::batch}; }

}  // namespace

TEST_CASE("encoder: stride contract, conv3_2 at H/8 with skips at H/4 and H/8") {
  GaborBankCache banks(small_gabor());
  Encoder enc(small_encoder(), banks);
  Rng rng(2);
  enc.init(rng);
  const Tensor img = random_tensor({3, 64, 32}, rng, 0.0, 1.0);
  const auto out = enc.forward(img, true);
  CHECK(out.conv3_2.shape() == std::vector<int>{8, 2, 8, 4});
  CHECK(out.skip8.shape() == std::vector<int>{8, 2, 8, 4});
  CHECK(out.skip4.shape() == std::vector<int>{6, 2, 16, 8});
}

TEST_CASE("encoder: rejects images below 32x32 or off the 32 grid") {
  GaborBankCache banks(small_gabor());
  Encoder enc(small_encoder(), banks);
  CHECK_THROWS_AS(enc.forward(Tensor({3, 16, 16}), true), std::invalid_argument);
  CHECK_THROWS_AS(enc.forward(Tensor({3, 48, 64}), true), std::invalid_argument);
}

TEST_CASE("encoder: zero image with zero weights and norm off stays zero") {
  GaborBankCache banks(small_gabor());
  EncoderConfig cfg = small_encoder();
  cfg.norm = NormMode::none;
  Encoder enc(cfg, banks);  // weights/biases default to zero
  const Tensor img({3, 32, 32});
  const auto out = enc.forward(img, true);
  CHECK(out.conv3_2.max_abs() == 0.0);
  CHECK(out.skip4.max_abs() == 0.0);
}

TEST_CASE("encoder: seed-fixed forward is bitwise deterministic") {
  GaborBankCache banks(small_gabor());
  Rng rng(3);
  const Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  Encoder enc1(small_encoder(), banks);
  Rng ra(42);
  enc1.init(ra);
  const auto out1 = enc1.forward(img, true);
  Encoder enc2(small_encoder(), banks);
  Rng rb(42);
  enc2.init(rb);
  const auto out2 = enc2.forward(img, true);
  CHECK(out1.conv3_2.bitwise_equal(out2.conv3_2));
  CHECK(out1.skip8.bitwise_equal(out2.skip8));
  CHECK(out1.skip4.bitwise_equal(out2.skip4));
}

TEST_CASE("residual block: zeroed convolutions act as identity on nonnegative input") {
  GaborBankCache banks(small_gabor());
  GofResBlock block(4, 4, 1, banks, 0, NormMode::batch);  // identity shortcut, weights zero
  Rng rng(4);
  const Tensor x = random_tensor({4, 2, 8, 8}, rng, 0.0, 2.0);
  const Tensor y = block.forward(x, true);
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("encoder: every trainable parameter receives a nonzero gradient") {
  GaborBankCache banks(small_gabor());
  Encoder enc(small_encoder(), banks);
  Rng rng(1234);
  enc.init(rng);
  ParamRegistry reg;
  enc.register_params(reg, "enc");
  reg.zero_grads();
  const Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  const auto out = enc.forward(img, true);
  const Tensor p1 = random_tensor(out.conv3_2.shape(), rng);
  const Tensor p2 = random_tensor(out.skip8.shape(), rng);
  const Tensor p3 = random_tensor(out.skip4.shape(), rng);
  enc.backward(p1, p2, p3);
  for (const auto& e : reg.entries()) {
    if (!e.trainable) continue;
    CHECK_MESSAGE(e.grad->max_abs() > 0.0, e.name);
  }
}

TEST_CASE("frb: scale ladder 16/8/4 for a 16x16 input with factor 2") {
  GaborBankCache banks(small_gabor());
  FrbConfig cfg;
  cfg.rows = 3;
  cfg.kernel_sizes = {3, 3, 3};
  cfg.channels = 8;
  Frb frb(cfg, banks, 0);
  Rng rng(5);
  frb.init(rng);
  const Tensor x = random_tensor({8, 2, 16, 16}, rng);
  const auto scales = frb.forward(x, true);
  REQUIRE(scales.size() == 3);
  CHECK(scales[0].shape() == std::vector<int>{8, 2, 16, 16});
  CHECK(scales[1].shape() == std::vector<int>{8, 2, 8, 8});
  CHECK(scales[2].shape() == std::vector<int>{8, 2, 4, 4});
}

TEST_CASE("frb: zero input with zero biases gives all-zero outputs") {
  GaborBankCache banks(small_gabor());
  FrbConfig cfg;
  cfg.rows = 3;
  cfg.kernel_sizes = {3, 3, 3};
  cfg.channels = 4;
  cfg.norm_enabled = NormMode::none;
  Frb frb(cfg, banks, 0);
  Rng rng(6);
  frb.init(rng);
  const Tensor x({4, 2, 16, 16});
  for (const auto& s : frb.forward(x, true)) CHECK(s.max_abs() == 0.0);
}

TEST_CASE("frb: rejects inputs too small to downsample R-1 times") {
  GaborBankCache banks(small_gabor());
  FrbConfig cfg;
  cfg.rows = 3;
  cfg.kernel_sizes = {3, 3, 3};
  cfg.channels = 4;
  cfg.downsample_factor = 4;
  Frb frb(cfg, banks, 0);
  CHECK_THROWS_AS(frb.forward(Tensor({4, 2, 4, 4}), true), std::invalid_argument);
}

TEST_CASE("frb: identity rows with average-pool downsampling match the pooling-chain oracle") {
  GaborParams p;
  p.orientations = 1;  // single orientation so the pool pattern is exactly representable
  p.scales = 1;
  GaborBankCache banks(p);
  FrbConfig cfg;
  cfg.rows = 3;
  cfg.kernel_sizes = {3, 3, 3};
  cfg.channels = 2;
  cfg.norm_enabled = NormMode::none;
  Frb frb(cfg, banks, 0);
  // rows: canonical center 1 -> modulated identity (bank peak is the center)
  for (auto& row : frb.convs_)
    for (auto& conv : row)
      for (int c = 0; c < 2; ++c) conv.canonical_(c, c, 1, 1) = 1.0;
  // downsamples: modulated weights 0.25 over the lower-right 2x2 window
  const GaborBank& bank = *banks.get(3);
  for (auto& down : frb.downs_)
    for (int c = 0; c < 2; ++c)
      for (int ky = 1; ky <= 2; ++ky)
        for (int kx = 1; kx <= 2; ++kx)
          down.canonical_(c, c, ky, kx) = 0.25 / bank.at(0, 0, ky, kx);

  Rng rng(7);
  const Tensor x = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
  const auto scales = frb.forward(x, true);

  // oracle: successive 2x2 average pooling
  Tensor pooled = x;
  CHECK(max_abs_diff(scales[0], pooled) < 1e-12);
  for (int step = 1; step < 3; ++step) {
    const int h = pooled.dim(2) / 2, w = pooled.dim(3) / 2;
    Tensor next({2, 1, h, w});
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          next(c, 0, y, xx) = 0.25 * (pooled(c, 0, 2 * y, 2 * xx) + pooled(c, 0, 2 * y, 2 * xx + 1) +
                                      pooled(c, 0, 2 * y + 1, 2 * xx) +
                                      pooled(c, 0, 2 * y + 1, 2 * xx + 1));
    pooled = next;
    CHECK(max_abs_diff(scales[static_cast<std::size_t>(step)], pooled) < 1e-12);
  }
}

TEST_CASE("frb: receptive field strictly increases row to row") {
  FrbConfig cfg;
  cfg.kernel_sizes = {7, 5, 3};
  const auto rf = frb_receptive_fields(cfg);
  REQUIRE(rf.size() == 3);
  CHECK(rf[0] < rf[1]);
  CHECK(rf[1] < rf[2]);
}

TEST_CASE("frb: 2-row 4-channel gradient check vs finite differences") {
  GaborBankCache banks(small_gabor());
  FrbConfig cfg;
  cfg.rows = 2;
  cfg.layers_per_row = 1;
  cfg.kernel_sizes = {3, 3};
  cfg.channels = 4;
  Frb frb(cfg, banks, 0);
  Rng rng(8);
  frb.init(rng);
  Tensor x = random_tensor({4, 2, 8, 8}, rng);
  Tensor p0 = random_tensor({4, 2, 8, 8}, rng);
  Tensor p1 = random_tensor({4, 2, 4, 4}, rng);
  auto eval = [&]() {
    const auto s = frb.forward(x, true);
    return test::dot(s[0], p0) + test::dot(s[1], p1);
  };
  eval();
  ParamRegistry reg;
  frb.register_params(reg, "frb");
  reg.zero_grads();
  const Tensor gx = frb.backward({p0, p1});
  CHECK(fd_compare(eval, x, gx) < 1e-4);
  for (const auto& e : reg.entries()) {
    if (!e.trainable) continue;
    CHECK_MESSAGE(fd_compare(eval, *e.value, *e.grad) < 1e-4, e.name);
  }
}

TEST_CASE("merge_point: zero skip passes current, zero current passes processed skip") {
  MergePoint mp(4, 2, 3);
  Rng rng(9);
  mp.init(rng);
  const Tensor cur = random_tensor({3, 6, 6}, rng);
  const Tensor zero_skip({4, 2, 6, 6});
  CHECK(max_abs_diff(mp.forward(cur, zero_skip), cur) == 0.0);

  const Tensor skip = random_tensor({4, 2, 6, 6}, rng);
  const Tensor zero_cur({3, 6, 6});
  Conv2d reduce_copy = mp.reduce_;
  const Tensor expect = reduce_copy.forward(concat_orientations(skip));
  CHECK(max_abs_diff(mp.forward(zero_cur, skip), expect) == 0.0);
}

TEST_CASE("merge_point: matches concat->reduce->add compose oracle") {
  MergePoint mp(2, 4, 5);
  Rng rng(10);
  mp.init(rng);
  const Tensor cur = random_tensor({5, 4, 4}, rng);
  const Tensor skip = random_tensor({2, 4, 4, 4}, rng);
  const Tensor y = mp.forward(cur, skip);
  Conv2d reduce_copy = mp.reduce_;
  Tensor expect = reduce_copy.forward(concat_orientations(skip));
  expect.add_(cur);
  CHECK(max_abs_diff(y, expect) < 1e-12);
}

TEST_CASE("merge_point: rejects spatial mismatch") {
  MergePoint mp(2, 2, 3);
  CHECK_THROWS_AS(mp.forward(Tensor({3, 4, 4}), Tensor({2, 2, 8, 8})), std::invalid_argument);
}

TEST_CASE("decoder: stage dims follow the documented (1,2,1,1) ladder, stride 8 -> 4") {
  DecoderConfig cfg;
  cfg.channels = {8, 6, 4, 2};
  Decoder dec(5, cfg, 3, 7, 2);
  Rng rng(11);
  dec.init(rng);
  const Tensor agg = random_tensor({5, 8, 8}, rng);
  const Tensor skip8 = random_tensor({3, 2, 8, 8}, rng);
  const Tensor skip4 = random_tensor({7, 2, 16, 16}, rng);
  const Tensor y = dec.forward(agg, skip8, skip4, true);
  // stage outputs: 8x8 (merge@8) -> 16x16 (merge@16==stride4) -> 16x16 -> 16x16
  CHECK(y.shape() == std::vector<int>{2, 16, 16});
  CHECK(cfg.total_upsample() == 2);
}

TEST_CASE("decoder: ladder must strictly decrease") {
  DecoderConfig cfg;
  cfg.channels = {8, 8, 4, 2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("decoder: zero weights everywhere give zero output") {
  DecoderConfig cfg;
  cfg.channels = {8, 6, 4, 2};
  cfg.norm = NormMode::none;
  Decoder dec(5, cfg, 3, 7, 2);  // params default to zero
  const Tensor y = dec.forward(Tensor({5, 8, 8}), Tensor({3, 2, 8, 8}), Tensor({7, 2, 16, 16}), true);
  CHECK(y.max_abs() == 0.0);
}

TEST_CASE("decoder: both skips contribute to the output") {
  DecoderConfig cfg;
  cfg.channels = {8, 6, 4, 2};
  Decoder dec(5, cfg, 3, 7, 2);
  Rng rng(12);
  dec.init(rng);
  const Tensor agg = random_tensor({5, 8, 8}, rng);
  const Tensor skip8 = random_tensor({3, 2, 8, 8}, rng);
  const Tensor skip4 = random_tensor({7, 2, 16, 16}, rng);
  const Tensor y = dec.forward(agg, skip8, skip4, true);
  const Tensor y_no8 = dec.forward(agg, Tensor({3, 2, 8, 8}), skip4, true);
  const Tensor y_no4 = dec.forward(agg, skip8, Tensor({7, 2, 16, 16}), true);
  CHECK(max_abs_diff(y, y_no8) > 1e-8);
  CHECK(max_abs_diff(y, y_no4) > 1e-8);
}

TEST_CASE("decoder: deterministic repeat is bitwise equal") {
  DecoderConfig cfg;
  cfg.channels = {8, 6, 4, 2};
  Decoder dec(5, cfg, 3, 7, 2);
  Rng rng(13);
  dec.init(rng);
  const Tensor agg = random_tensor({5, 8, 8}, rng);
  const Tensor skip8 = random_tensor({3, 2, 8, 8}, rng);
  const Tensor skip4 = random_tensor({7, 2, 16, 16}, rng);
  const Tensor y1 = dec.forward(agg, skip8, skip4, false);
  const Tensor y2 = dec.forward(agg, skip8, skip4, false);
  CHECK(y1.bitwise_equal(y2));
}

TEST_CASE("decoder: gradient check through one deconv + merge") {
  Rng rng(14);
  ConvTranspose2d up(3, 4, 3, 2);
  up.init(rng);
  MergePoint mp(2, 2, 4);
  mp.init(rng);
  Tensor x = random_tensor({3, 4, 4}, rng);
  Tensor skip = random_tensor({2, 2, 8, 8}, rng);
  const Tensor proj = random_tensor({4, 8, 8}, rng);
  auto eval = [&]() { return test::dot(mp.forward(up.forward(x), skip), proj); };
  eval();
  up.gw_.fill(0.0);
  up.gb_.fill(0.0);
  mp.reduce_.gw_.fill(0.0);
  auto [g_cur, g_skip] = mp.backward(proj);
  const Tensor gx = up.backward(g_cur);
  CHECK(fd_compare(eval, x, gx) < 1e-4);
  CHECK(fd_compare(eval, skip, g_skip) < 1e-4);
  CHECK(fd_compare(eval, up.w_, up.gw_) < 1e-4);
  CHECK(fd_compare(eval, mp.reduce_.w_, mp.reduce_.gw_) < 1e-4);
}

TEST_CASE("detect head: channel counts are (1, 4, 1, 8)") {
  DetectHead head(6, 128.0);
  Rng rng(15);
  head.init(rng);
  const Tensor f = random_tensor({6, 5, 5}, rng);
  const auto out = head.forward(f);
  CHECK(out.score.shape() == std::vector<int>{1, 5, 5});
  CHECK(out.rbox.distances.shape() == std::vector<int>{4, 5, 5});
  CHECK(out.rbox.angle.shape() == std::vector<int>{1, 5, 5});
  CHECK(out.quad.shape() == std::vector<int>{8, 5, 5});
}

TEST_CASE("detect head: zero weights give score 0.5 and angle 0") {
  DetectHead head(4, 100.0);
  Rng rng(16);
  const Tensor f = random_tensor({4, 3, 3}, rng);
  const auto out = head.forward(f);
  for (std::int64_t i = 0; i < out.score.size(); ++i) CHECK(out.score[i] == doctest::Approx(0.5));
  for (std::int64_t i = 0; i < out.rbox.angle.size(); ++i) CHECK(out.rbox.angle[i] == 0.0);
  for (std::int64_t i = 0; i < out.rbox.distances.size(); ++i)
    CHECK(out.rbox.distances[i] == doctest::Approx(50.0));
  CHECK(out.quad.max_abs() == 0.0);
}

TEST_CASE("detect head: outputs stay in range; angle within (-pi/4, pi/4]") {
  DetectHead head(4, 64.0);
  Rng rng(17);
  head.init(rng);
  rng.fill_uniform(head.angle_conv_.b_, -2.0, 2.0);
  const Tensor f = random_tensor({4, 6, 6}, rng, -3.0, 3.0);
  const auto out = head.forward(f);
  for (std::int64_t i = 0; i < out.score.size(); ++i) {
    CHECK(out.score[i] > 0.0);
    CHECK(out.score[i] < 1.0);
  }
  for (std::int64_t i = 0; i < out.rbox.angle.size(); ++i) {
    CHECK(out.rbox.angle[i] > -kPi / 4.0);
    CHECK(out.rbox.angle[i] <= kPi / 4.0);
  }
  for (std::int64_t i = 0; i < out.rbox.distances.size(); ++i) {
    CHECK(out.rbox.distances[i] > 0.0);
    CHECK(out.rbox.distances[i] < 64.0);
  }
}

TEST_CASE("detect head: identical outputs for repeated forward") {
  DetectHead head(4, 64.0);
  Rng rng(18);
  head.init(rng);
  const Tensor f = random_tensor({4, 4, 4}, rng);
  const auto a = head.forward(f);
  const auto b = head.forward(f);
  CHECK(a.score.bitwise_equal(b.score));
  CHECK(a.rbox.distances.bitwise_equal(b.rbox.distances));
  CHECK(a.rbox.angle.bitwise_equal(b.rbox.angle));
  CHECK(a.quad.bitwise_equal(b.quad));
}

TEST_CASE("full model: forward shapes, output stride 4, deterministic repeat") {
  ModelConfig cfg = ModelConfig::toy();
  cfg.gabor.orientations = 2;
  cfg.encoder = {4, 6, 8, NormMode::batch};
  cfg.mfrm.channels = 4;
  cfg.mfrm.out_channels = 4;
  cfg.decoder.channels = {8, 6, 4, 2};
  DetectorModel model(cfg);
  model.init_params(99);
  Rng rng(19);
  const Tensor img = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  CHECK(model.output_stride() == 4);
  const auto out = model.forward(img, false);
  CHECK(out.score.shape() == std::vector<int>{1, 16, 16});
  CHECK(out.quad.shape() == std::vector<int>{8, 16, 16});
  const auto out2 = model.forward(img, false);
  CHECK(out.score.bitwise_equal(out2.score));
  CHECK(out.quad.bitwise_equal(out2.quad));
}

TEST_CASE("full model: every trainable parameter receives gradient end to end") {
  ModelConfig cfg = ModelConfig::toy();
  cfg.gabor.orientations = 2;
  cfg.encoder = {4, 6, 8, NormMode::batch};
  cfg.mfrm.channels = 4;
  cfg.mfrm.out_channels = 4;
  cfg.decoder.channels = {8, 6, 4, 2};
  DetectorModel model(cfg);
  model.init_params(6);
  Rng rng(20);
  const Tensor img = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  const auto out = model.forward(img, true);
  HeadOutput grads;
  grads.score = random_tensor(out.score.shape(), rng);
  grads.rbox.distances = random_tensor(out.rbox.distances.shape(), rng);
  grads.rbox.angle = random_tensor(out.rbox.angle.shape(), rng);
  grads.quad = random_tensor(out.quad.shape(), rng);
  model.zero_grads();
  model.backward(grads);
  for (const auto& e : model.registry().entries()) {
    if (!e.trainable) continue;
    CHECK_MESSAGE(e.grad->max_abs() > 0.0, e.name);
  }
}
