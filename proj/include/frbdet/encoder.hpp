#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "frbdet/nn.hpp"

namespace frbdet {

// Replicates an image [3][H][W] into U orientation channels [3][U][H][W].
// Downstream GOF convolutions differentiate the orientations.
inline OrientedFeatureMap expand_orientation_channels(const Tensor& image, int orientations) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("expand_orientation_channels: [3][H][W] image expected");
  if (orientations < 1) throw std::invalid_argument("expand_orientation_channels: U < 1");
  const int H = image.dim(1), W = image.dim(2);
  Tensor out({3, orientations, H, W});
  for (int c = 0; c < 3; ++c)
    for (int u = 0; u < orientations; ++u)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out(c, u, y, x) = image(c, y, x);
  return out;
}

inline Tensor expand_orientation_channels_backward(const Tensor& g_out) {
  const int U = g_out.dim(1), H = g_out.dim(2), W = g_out.dim(3);
  Tensor g({3, H, W});
  for (int c = 0; c < 3; ++c)
    for (int u = 0; u < U; ++u)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) g(c, y, x) += g_out(c, u, y, x);
  return g;
}

// Basic residual block of two 3x3 GOF convolutions. When shape changes, the
// shortcut is a 3x3 GOF projection (Gabor banks need k >= 3, so no 1x1).
struct GofResBlock {
  GofResBlock() = default;
  GofResBlock(int in_c, int out_c, int stride, GaborBankCache& banks, int scale_index, NormMode norm)
      : conv1_(in_c, out_c, 3, stride, banks.get(3), scale_index),
        conv2_(out_c, out_c, 3, 1, banks.get(3), scale_index),
        n1_(out_c * banks.base_params().orientations, norm),
        n2_(out_c * banks.base_params().orientations, norm) {
    if (in_c != out_c || stride != 1) {
      proj_.emplace(in_c, out_c, 3, stride, banks.get(3), scale_index);
      nproj_ = Norm(out_c * banks.base_params().orientations, norm);
    }
  }

  Tensor forward(const Tensor& x, bool train) {
    Tensor h = r1_.forward(n1_.forward(conv1_.forward(x), train));
    h = n2_.forward(conv2_.forward(h), train);
    Tensor s = proj_ ? nproj_.forward(proj_->forward(x), train) : x;
    h.add_(s);
    return r2_.forward(h);
  }

  Tensor backward(const Tensor& gy) {
    Tensor gsum = r2_.backward(gy);
    Tensor gh = conv2_.backward(n2_.backward(gsum));
    Tensor gx = conv1_.backward(n1_.backward(r1_.backward(gh)));
    if (proj_) {
      gx.add_(proj_->backward(nproj_.backward(gsum)));
    } else {
      gx.add_(gsum);
    }
    return gx;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    conv1_.register_params(r, p + ".conv1");
    n1_.register_params(r, p + ".bn1");
    conv2_.register_params(r, p + ".conv2");
    n2_.register_params(r, p + ".bn2");
    if (proj_) {
      proj_->register_params(r, p + ".proj");
      nproj_.register_params(r, p + ".bnproj");
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (proj_) proj_->init(rng);
  }

  GofConv2d conv1_, conv2_;
  Norm n1_, n2_;
  ReLU r1_, r2_;
  std::optional<GofConv2d> proj_;
  Norm nproj_;
};

struct EncoderConfig {
  int stem_channels = 16;
  int c2_channels = 32;
  int c3_channels = 64;
  NormMode norm = NormMode::batch;
};

// Reduced ResNet-18-style GOF encoder. Emits conv3_2 (stride 8) plus the
// stride-4 and stride-8 skip features consumed at the decoder merge points.
struct Encoder {
  struct Out {
    Tensor conv3_2;  // [c3][U][H/8][W/8]
    Tensor skip8;    // [c3][U][H/8][W/8], conv3_1 output
    Tensor skip4;    // [c2][U][H/4][W/4], conv2_2 output
  };

  Encoder() = default;
  Encoder(const EncoderConfig& cfg, GaborBankCache& banks)
      : cfg_(cfg),
        stem_(3, cfg.stem_channels, 7, 2, banks.get(7), 0),
        stem_norm_(cfg.stem_channels * banks.base_params().orientations, cfg.norm),
        pool_(3, 2, 1),
        block2_1_(cfg.stem_channels, cfg.c2_channels, 1, banks, scale_for(banks, 1), cfg.norm),
        block2_2_(cfg.c2_channels, cfg.c2_channels, 1, banks, scale_for(banks, 1), cfg.norm),
        block3_1_(cfg.c2_channels, cfg.c3_channels, 2, banks, scale_for(banks, 2), cfg.norm),
        block3_2_(cfg.c3_channels, cfg.c3_channels, 1, banks, scale_for(banks, 2), cfg.norm),
        orientations_(banks.base_params().orientations) {}

  static int scale_for(GaborBankCache& banks, int depth) {
    return std::min(depth, banks.base_params().scales - 1);
  }

  Out forward(const Tensor& image, bool train) {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw std::invalid_argument("Encoder: [3][H][W] image expected");
    const int H = image.dim(1), W = image.dim(2);
    if (H < 32 || W < 32) throw std::invalid_argument("Encoder: image smaller than 32x32");
    if (H % 32 != 0 || W % 32 != 0)
      throw std::invalid_argument("Encoder: dims must be multiples of 32");

    Tensor x = expand_orientation_channels(image, orientations_);
    x = stem_relu_.forward(stem_norm_.forward(stem_.forward(x), train));
    x = pool_.forward(x);
    x = block2_1_.forward(x, train);
    Out out;
    out.skip4 = block2_2_.forward(x, train);
    out.skip8 = block3_1_.forward(out.skip4, train);
    out.conv3_2 = block3_2_.forward(out.skip8, train);
    return out;
  }

  // Gradients for all three outputs; skip grads may be empty tensors.
  Tensor backward(const Tensor& g_conv3_2, const Tensor& g_skip8, const Tensor& g_skip4) {
    Tensor g = block3_2_.backward(g_conv3_2);
    if (!g_skip8.empty()) g.add_(g_skip8);
    g = block3_1_.backward(g);
    if (!g_skip4.empty()) g.add_(g_skip4);
    g = block2_2_.backward(g);
    g = block2_1_.backward(g);
    g = pool_.backward(g);
    g = stem_.backward(stem_norm_.backward(stem_relu_.backward(g)));
    return expand_orientation_channels_backward(g);
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    stem_.register_params(r, p + ".stem");
    stem_norm_.register_params(r, p + ".stem_bn");
    block2_1_.register_params(r, p + ".conv2_1");
    block2_2_.register_params(r, p + ".conv2_2");
    block3_1_.register_params(r, p + ".conv3_1");
    block3_2_.register_params(r, p + ".conv3_2");
  }

  void init(Rng& rng) {
    stem_.init(rng);
    block2_1_.init(rng);
    block2_2_.init(rng);
    block3_1_.init(rng);
    block3_2_.init(rng);
  }

  EncoderConfig cfg_;
  GofConv2d stem_;
  Norm stem_norm_;
  ReLU stem_relu_;
  MaxPool2d pool_;
  GofResBlock block2_1_, block2_2_, block3_1_, block3_2_;
  int orientations_ = 4;
};

}  // namespace frbdet
