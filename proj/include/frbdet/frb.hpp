#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "frbdet/nn.hpp"

namespace frbdet {

struct FrbConfig {
  int rows = 3;
  int layers_per_row = 2;
  std::vector<int> kernel_sizes{7, 5, 3};  // one per row, odd
  int downsample_factor = 2;
  int channels = 64;  // matches encoder conv3 width
  NormMode norm_enabled = NormMode::batch;

  void validate() const {
    if (rows < 2) throw std::invalid_argument("FrbConfig: rows < 2");
    if (layers_per_row < 1) throw std::invalid_argument("FrbConfig: layers_per_row < 1");
    if (static_cast<int>(kernel_sizes.size()) != rows)
      throw std::invalid_argument("FrbConfig: kernel_sizes size != rows");
    for (int k : kernel_sizes)
      if (k < 3 || k % 2 == 0) throw std::invalid_argument("FrbConfig: kernel sizes must be odd >= 3");
    if (downsample_factor < 2) throw std::invalid_argument("FrbConfig: downsample_factor < 2");
    if (channels < 1) throw std::invalid_argument("FrbConfig: channels < 1");
  }
};

// Analytic receptive field of each row's last Gabor layer relative to the FRB
// input, from the config arithmetic alone.
inline std::vector<int> frb_receptive_fields(const FrbConfig& cfg) {
  std::vector<int> rf_per_row;
  int rf = 1;
  int jump = 1;
  for (int r = 0; r < cfg.rows; ++r) {
    for (int l = 0; l < cfg.layers_per_row; ++l) rf += (cfg.kernel_sizes[r] - 1) * jump;
    rf_per_row.push_back(rf);
    if (r + 1 < cfg.rows) {
      rf += 2 * jump;  // 3x3 strided downsample
      jump *= cfg.downsample_factor;
    }
  }
  return rf_per_row;
}

// Feature Representation Block: rows of Gabor convolutions, larger kernels in
// earlier rows, strided Gabor downsampling between rows. Emits the last Gabor
// layer of every row.
struct Frb {
  Frb() = default;
  Frb(const FrbConfig& cfg, GaborBankCache& banks, int scale_index)
      : cfg_(cfg), orientations_(banks.base_params().orientations) {
    cfg_.validate();
    const int U = orientations_;
    for (int r = 0; r < cfg_.rows; ++r) {
      std::vector<GofConv2d> row;
      std::vector<Norm> row_norm;
      for (int l = 0; l < cfg_.layers_per_row; ++l) {
        row.emplace_back(cfg_.channels, cfg_.channels, cfg_.kernel_sizes[r], 1,
                         banks.get(cfg_.kernel_sizes[r]), scale_index);
        row_norm.emplace_back(cfg_.channels * U, cfg_.norm_enabled);
      }
      convs_.push_back(std::move(row));
      norms_.push_back(std::move(row_norm));
      relus_.emplace_back(cfg_.layers_per_row);
      if (r + 1 < cfg_.rows) {
        downs_.emplace_back(cfg_.channels, cfg_.channels, 3, cfg_.downsample_factor, banks.get(3),
                            scale_index);
        down_norms_.emplace_back(cfg_.channels * U, cfg_.norm_enabled);
      }
    }
    down_relus_.resize(static_cast<std::size_t>(cfg_.rows - 1));
  }

  // Returns one oriented feature per row; each successive row is at
  // 1/downsample_factor of the previous spatial size.
  std::vector<Tensor> forward(const Tensor& conv3_2, bool train) {
    if (conv3_2.rank() != 4 || conv3_2.dim(0) != cfg_.channels)
      throw std::invalid_argument("Frb: bad input shape");
    int need = 1;
    for (int r = 0; r + 1 < cfg_.rows; ++r) need *= cfg_.downsample_factor;
    if (conv3_2.dim(2) < need || conv3_2.dim(3) < need)
      throw std::invalid_argument("Frb: spatial dims too small to downsample rows-1 times");
    std::vector<Tensor> scales;
    Tensor x = conv3_2;
    for (int r = 0; r < cfg_.rows; ++r) {
      for (int l = 0; l < cfg_.layers_per_row; ++l)
        x = relus_[r][l].forward(norms_[r][l].forward(convs_[r][l].forward(x), train));
      scales.push_back(x);
      if (r + 1 < cfg_.rows)
        x = down_relus_[r].forward(down_norms_[r].forward(downs_[r].forward(x), train));
    }
    return scales;
  }

  Tensor backward(const std::vector<Tensor>& g_scales) {
    Tensor g;
    for (int r = cfg_.rows - 1; r >= 0; --r) {
      if (r == cfg_.rows - 1) {
        g = g_scales[r];
      } else {
        g = downs_[r].backward(down_norms_[r].backward(down_relus_[r].backward(g)));
        g.add_(g_scales[r]);
      }
      for (int l = cfg_.layers_per_row - 1; l >= 0; --l)
        g = convs_[r][l].backward(norms_[r][l].backward(relus_[r][l].backward(g)));
    }
    return g;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    for (int row = 0; row < cfg_.rows; ++row) {
      for (int l = 0; l < cfg_.layers_per_row; ++l) {
        const std::string base = p + ".row" + std::to_string(row) + ".conv" + std::to_string(l);
        convs_[row][l].register_params(r, base);
        norms_[row][l].register_params(r, base + "_bn");
      }
      if (row + 1 < cfg_.rows) {
        downs_[row].register_params(r, p + ".down" + std::to_string(row));
        down_norms_[row].register_params(r, p + ".down" + std::to_string(row) + "_bn");
      }
    }
  }

  void init(Rng& rng) {
    for (auto& row : convs_)
      for (auto& c : row) c.init(rng);
    for (auto& d : downs_) d.init(rng);
  }

  FrbConfig cfg_;
  int orientations_ = 4;
  std::vector<std::vector<GofConv2d>> convs_;
  std::vector<std::vector<Norm>> norms_;
  std::vector<std::vector<ReLU>> relus_;
  std::vector<GofConv2d> downs_;
  std::vector<Norm> down_norms_;
  std::vector<ReLU> down_relus_;
};

}  // namespace frbdet
