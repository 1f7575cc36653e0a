#pragma once

#include <memory>
#include <string>

#include "frbdet/decoder.hpp"
#include "frbdet/encoder.hpp"
#include "frbdet/frb.hpp"
#include "frbdet/gabor.hpp"
#include "frbdet/head.hpp"
#include "frbdet/mfrm.hpp"

namespace frbdet {

struct ModelConfig {
  GaborParams gabor;          // U, V and the Gabor function parameters
  EncoderConfig encoder;      // channel ladder (stem, conv2, conv3)
  FrbConfig frb;              // rows, kernel sizes, channels
  MfrmConfig mfrm;            // trunk and aggregate widths
  DecoderConfig decoder;      // ladder + upsample factors
  double max_distance = 512;  // RBOX distance activation bound
  NormMode norm = NormMode::batch;

  // Toy dims used by the desk-scale tests: N=32 trunk, encoder 16/32/64.
  static ModelConfig toy() {
    ModelConfig c;
    c.encoder = {16, 32, 64, NormMode::batch};
    c.frb.channels = 64;
    c.frb.kernel_sizes = {5, 3, 3};
    c.mfrm.channels = 32;
    c.mfrm.out_channels = 32;
    c.decoder.channels = {64, 48, 32, 16};
    c.max_distance = 64.0;
    return c;
  }

  static ModelConfig full_scale() {
    ModelConfig c;
    c.encoder = {64, 128, 256, NormMode::batch};
    c.frb.channels = 256;
    c.frb.kernel_sizes = {7, 5, 3};
    c.mfrm.channels = 512;
    c.mfrm.out_channels = 512;
    c.decoder.channels = {256, 128, 64, 32};
    c.max_distance = 512.0;
    return c;
  }

  void apply_norm_flag() {
    encoder.norm = norm;
    frb.norm_enabled = norm;
    mfrm.norm = norm;
    decoder.norm = norm;
  }
};

// The full detection network: oriented GOF encoder -> FRB -> MFRM -> decoder
// -> EAST-style head. Output stride is 8 / decoder upsample (4 by default).
struct DetectorModel {
  explicit DetectorModel(const ModelConfig& cfg)
      : cfg_(cfg), banks_(cfg.gabor),
        encoder_(cfg.encoder, banks_),
        frb_(make_frb_config(cfg), banks_, std::min(3, cfg.gabor.scales - 1)),
        mfrm_(cfg.frb.rows, cfg.encoder.c3_channels, cfg.gabor.orientations, cfg.mfrm),
        decoder_(cfg.mfrm.out_channels, cfg.decoder, cfg.encoder.c3_channels,
                 cfg.encoder.c2_channels, cfg.gabor.orientations),
        head_(cfg.decoder.channels[3], cfg.max_distance) {
    encoder_.register_params(registry_, "enc");
    frb_.register_params(registry_, "frb");
    mfrm_.register_params(registry_, "mfrm");
    decoder_.register_params(registry_, "dec");
    head_.register_params(registry_, "head");
  }

  static FrbConfig make_frb_config(const ModelConfig& cfg) {
    FrbConfig f = cfg.frb;
    f.channels = cfg.encoder.c3_channels;
    return f;
  }

  int output_stride() const { return 8 / cfg_.decoder.total_upsample(); }

  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    encoder_.init(rng);
    frb_.init(rng);
    mfrm_.init(rng);
    decoder_.init(rng);
    head_.init(rng);
  }

  HeadOutput forward(const Tensor& image, bool train) {
    enc_out_ = encoder_.forward(image, train);
    scale_feats_ = frb_.forward(enc_out_.conv3_2, train);
    Tensor agg = mfrm_.forward(scale_feats_, train);
    Tensor dec = decoder_.forward(agg, scale_feats_[0], enc_out_.skip4, train);
    return head_.forward(dec);
  }

  void backward(const HeadOutput& head_grads) {
    Tensor g_dec = head_.backward(head_grads);
    auto [g_agg, g_frb_row0, g_skip4] = decoder_.backward(g_dec);
    std::vector<Tensor> g_scales = mfrm_.backward(g_agg);
    g_scales[0].add_(g_frb_row0);
    Tensor g_conv32 = frb_.backward(g_scales);
    encoder_.backward(g_conv32, Tensor(), g_skip4);
  }

  ParamRegistry& registry() { return registry_; }
  void zero_grads() { registry_.zero_grads(); }

  ModelConfig cfg_;
  GaborBankCache banks_;
  Encoder encoder_;
  Frb frb_;
  Mfrm mfrm_;
  Decoder decoder_;
  DetectHead head_;
  ParamRegistry registry_;
  Encoder::Out enc_out_;
  std::vector<Tensor> scale_feats_;
};

}  // namespace frbdet
