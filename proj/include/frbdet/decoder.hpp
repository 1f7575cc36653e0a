#pragma once

#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "frbdet/mfrm.hpp"
#include "frbdet/nn.hpp"

namespace frbdet {

struct DecoderConfig {
  std::vector<int> channels{256, 128, 64, 32};
  // Per-stage upsample factor. Defaults give output stride 4 from the
  // stride-8 aggregate, with merges at stride 8 (after stage 0) and stride 4
  // (after stage 1).
  std::vector<int> upsample{1, 2, 1, 1};
  NormMode norm = NormMode::batch;

  void validate() const {
    if (channels.size() != 4 || upsample.size() != 4)
      throw std::invalid_argument("DecoderConfig: four stages expected");
    for (std::size_t i = 1; i < channels.size(); ++i)
      if (channels[i] >= channels[i - 1])
        throw std::invalid_argument("DecoderConfig: ladder must be strictly decreasing");
    for (int f : upsample)
      if (f != 1 && f != 2) throw std::invalid_argument("DecoderConfig: upsample factor must be 1 or 2");
  }

  int total_upsample() const {
    int t = 1;
    for (int f : upsample) t *= f;
    return t;
  }
};

// Skip fusion: the oriented skip is orientation-concatenated, reduced by a
// 1x1 conv to the current width and added elementwise.
struct MergePoint {
  MergePoint() = default;
  MergePoint(int skip_channels, int orientations, int current_channels)
      : u_(orientations),
        reduce_(skip_channels * orientations, current_channels, 1, 1, 0, /*bias=*/false) {}

  Tensor forward(const Tensor& current, const Tensor& skip) {
    if (skip.dim(2) != current.dim(1) || skip.dim(3) != current.dim(2))
      throw std::invalid_argument("MergePoint: spatial mismatch between skip and current");
    Tensor y = reduce_.forward(concat_orientations(skip));
    y.add_(current);
    return y;
  }

  std::pair<Tensor, Tensor> backward(const Tensor& gy) {
    Tensor g_skip = split_orientations(reduce_.backward(gy), u_);
    return {gy, g_skip};
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    reduce_.register_params(r, p + ".reduce");
  }
  void init(Rng& rng) { reduce_.init(rng); }

  int u_ = 4;
  Conv2d reduce_;
};

// Deconvolution decoder: four Deconv3x3 stages with two skip merge points.
struct Decoder {
  Decoder() = default;
  Decoder(int in_channels, const DecoderConfig& cfg, int skip8_channels, int skip4_channels,
          int orientations)
      : cfg_(cfg) {
    cfg_.validate();
    int c = in_channels;
    for (int s = 0; s < 4; ++s) {
      stages_.emplace_back(c, cfg_.channels[s], 3, cfg_.upsample[s]);
      norms_.emplace_back(cfg_.channels[s], cfg_.norm);
      c = cfg_.channels[s];
    }
    relus_.resize(4);
    merge8_ = MergePoint(skip8_channels, orientations, cfg_.channels[0]);
    merge4_ = MergePoint(skip4_channels, orientations, cfg_.channels[1]);
  }

  int out_channels() const { return cfg_.channels[3]; }

  Tensor forward(const Tensor& agg, const Tensor& skip8, const Tensor& skip4, bool train) {
    Tensor x = relus_[0].forward(norms_[0].forward(stages_[0].forward(agg), train));
    x = merge8_.forward(x, skip8);
    x = relus_[1].forward(norms_[1].forward(stages_[1].forward(x), train));
    x = merge4_.forward(x, skip4);
    x = relus_[2].forward(norms_[2].forward(stages_[2].forward(x), train));
    x = relus_[3].forward(norms_[3].forward(stages_[3].forward(x), train));
    return x;
  }

  // Returns (g_agg, g_skip8, g_skip4).
  std::tuple<Tensor, Tensor, Tensor> backward(const Tensor& gy) {
    Tensor g = stages_[3].backward(norms_[3].backward(relus_[3].backward(gy)));
    g = stages_[2].backward(norms_[2].backward(relus_[2].backward(g)));
    auto [g_cur4, g_skip4] = merge4_.backward(g);
    g = stages_[1].backward(norms_[1].backward(relus_[1].backward(g_cur4)));
    auto [g_cur8, g_skip8] = merge8_.backward(g);
    Tensor g_agg = stages_[0].backward(norms_[0].backward(relus_[0].backward(g_cur8)));
    return {g_agg, g_skip8, g_skip4};
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    for (int s = 0; s < 4; ++s) {
      stages_[s].register_params(r, p + ".deconv" + std::to_string(s));
      norms_[s].register_params(r, p + ".deconv" + std::to_string(s) + "_bn");
    }
    merge8_.register_params(r, p + ".merge8");
    merge4_.register_params(r, p + ".merge4");
  }

  void init(Rng& rng) {
    for (auto& s : stages_) s.init(rng);
    merge8_.init(rng);
    merge4_.init(rng);
  }

  DecoderConfig cfg_;
  std::vector<ConvTranspose2d> stages_;
  std::vector<Norm> norms_;
  std::vector<ReLU> relus_;
  MergePoint merge8_, merge4_;
};

}  // namespace frbdet
