#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "frbdet/nn.hpp"

namespace frbdet {

// [N][U][H][W] -> [N*U][H][W], channel-major: output[(n)*U + u] = input[n][u].
// Row-major layout makes this a pure reshape; the bytes are unchanged.
inline FlatFeatureMap concat_orientations(const OrientedFeatureMap& g) {
  if (g.rank() != 4) throw std::invalid_argument("concat_orientations: rank-4 input expected");
  return g.reshaped({g.dim(0) * g.dim(1), g.dim(2), g.dim(3)});
}

inline OrientedFeatureMap split_orientations(const FlatFeatureMap& f, int orientations) {
  if (f.rank() != 3 || f.dim(0) % orientations != 0)
    throw std::invalid_argument("split_orientations: channel count not divisible by U");
  return f.reshaped({f.dim(0) / orientations, orientations, f.dim(1), f.dim(2)});
}

// Channel-wise attention gate: F_att = f ⊗ sigmoid(Conv1x1(f)).
// The gate contracts every element toward zero and preserves sign.
struct ChannelAttention {
  ChannelAttention() = default;
  explicit ChannelAttention(int channels) : gate_(channels, channels, 1) {}

  Tensor forward(const Tensor& x) {
    x_ = x;
    s_ = act_.forward(gate_.forward(x));
    Tensor y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] *= s_[i];
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gs = gy;
    Tensor gx = gy;
    for (std::int64_t i = 0; i < gy.size(); ++i) {
      gs[i] = gy[i] * x_[i];
      gx[i] = gy[i] * s_[i];
    }
    gx.add_(gate_.backward(act_.backward(gs)));
    return gx;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    gate_.register_params(r, p + ".gate");
  }
  void init(Rng& rng) { gate_.init(rng); }

  Conv2d gate_;
  Sigmoid act_;
  Tensor x_, s_;
};

// Four ReLU RNNs with identity-initialized recurrence sweeping the map right,
// left, down and up; each direction owns a quarter of the channels. Sweeps are
// independent and concatenated in fixed direction order.
struct Irnn4Dir {
  static constexpr int kDirections = 4;  // 0 right, 1 left, 2 down, 3 up

  Irnn4Dir() = default;
  explicit Irnn4Dir(int channels) : c_(channels), g_(channels / 4) {
    if (channels % 4 != 0) throw std::invalid_argument("Irnn4Dir: channels not divisible by 4");
    for (int d = 0; d < kDirections; ++d) {
      in_conv_[d] = Conv2d(g_, g_, 1);
      w_hh_[d] = Tensor({g_, g_});
      gw_hh_[d] = Tensor({g_, g_});
      for (int i = 0; i < g_; ++i) w_hh_[d](i, i) = 1.0;
    }
    out_conv_ = Conv2d(c_, c_, 1);
  }

  Tensor forward(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != c_) throw std::invalid_argument("Irnn4Dir: bad input shape");
    const int H = x.dim(1), W = x.dim(2);
    Tensor hidden({c_, H, W});
    for (int d = 0; d < kDirections; ++d) {
      Tensor xg({g_, H, W});
      for (int c = 0; c < g_; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) xg(c, y, xx) = x(d * g_ + c, y, xx);
      Tensor z = in_conv_[d].forward(xg);
      pre_[d] = Tensor({g_, H, W});
      h_[d] = Tensor({g_, H, W});
      sweep_forward(d, z, H, W);
      for (int c = 0; c < g_; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) hidden(d * g_ + c, y, xx) = h_[d](c, y, xx);
    }
    return out_relu_.forward(out_conv_.forward(hidden));
  }

  Tensor backward(const Tensor& gy) {
    Tensor gh_all = out_conv_.backward(out_relu_.backward(gy));
    const int H = gh_all.dim(1), W = gh_all.dim(2);
    Tensor gx({c_, H, W});
    for (int d = 0; d < kDirections; ++d) {
      Tensor gh({g_, H, W});
      for (int c = 0; c < g_; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) gh(c, y, xx) = gh_all(d * g_ + c, y, xx);
      Tensor gz = sweep_backward(d, gh, H, W);
      Tensor gxg = in_conv_[d].backward(gz);
      for (int c = 0; c < g_; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) gx(d * g_ + c, y, xx) = gxg(c, y, xx);
    }
    return gx;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    static const char* names[kDirections] = {"right", "left", "down", "up"};
    for (int d = 0; d < kDirections; ++d) {
      in_conv_[d].register_params(r, p + ".in_" + names[d]);
      r.add(p + ".whh_" + std::string(names[d]), &w_hh_[d], &gw_hh_[d]);
    }
    out_conv_.register_params(r, p + ".out");
  }

  void init(Rng& rng) {
    for (int d = 0; d < kDirections; ++d) in_conv_[d].init(rng);
    out_conv_.init(rng);
    // w_hh stays identity per the IRNN design
  }

  int c_ = 0, g_ = 0;
  Conv2d in_conv_[kDirections];
  Tensor w_hh_[kDirections], gw_hh_[kDirections];
  Conv2d out_conv_;
  ReLU out_relu_;
  Tensor pre_[kDirections], h_[kDirections];

private:
  // Step order per direction; h(first) = ReLU(z(first)).
  void sweep_forward(int d, const Tensor& z, int H, int W) {
    const bool horizontal = d < 2;
    const int lanes = horizontal ? H : W;
    const int steps = horizontal ? W : H;
    std::vector<double> hprev(static_cast<std::size_t>(g_));
    for (int lane = 0; lane < lanes; ++lane) {
      for (int s = 0; s < steps; ++s) {
        const int t = (d == 0 || d == 2) ? s : steps - 1 - s;
        const int y = horizontal ? lane : t;
        const int x = horizontal ? t : lane;
        for (int c = 0; c < g_; ++c) {
          double a = z(c, y, x);
          if (s > 0) {
            for (int j = 0; j < g_; ++j) a += w_hh_[d](c, j) * hprev[static_cast<std::size_t>(j)];
          }
          pre_[d](c, y, x) = a;
          h_[d](c, y, x) = a > 0 ? a : 0;
        }
        for (int c = 0; c < g_; ++c) hprev[static_cast<std::size_t>(c)] = h_[d](c, y, x);
      }
    }
  }

  Tensor sweep_backward(int d, const Tensor& gh, int H, int W) {
    const bool horizontal = d < 2;
    const int lanes = horizontal ? H : W;
    const int steps = horizontal ? W : H;
    Tensor gz({g_, H, W});
    std::vector<double> carry(static_cast<std::size_t>(g_));
    std::vector<double> ga(static_cast<std::size_t>(g_));
    for (int lane = 0; lane < lanes; ++lane) {
      std::fill(carry.begin(), carry.end(), 0.0);
      for (int s = steps - 1; s >= 0; --s) {
        const int t = (d == 0 || d == 2) ? s : steps - 1 - s;
        const int y = horizontal ? lane : t;
        const int x = horizontal ? t : lane;
        for (int c = 0; c < g_; ++c) {
          const double g = gh(c, y, x) + carry[static_cast<std::size_t>(c)];
          ga[static_cast<std::size_t>(c)] = pre_[d](c, y, x) > 0 ? g : 0.0;
          gz(c, y, x) = ga[static_cast<std::size_t>(c)];
        }
        if (s > 0) {
          const int tp = (d == 0 || d == 2) ? s - 1 : steps - s;
          const int yp = horizontal ? lane : tp;
          const int xp = horizontal ? tp : lane;
          for (int c = 0; c < g_; ++c) {
            const double gac = ga[static_cast<std::size_t>(c)];
            for (int j = 0; j < g_; ++j) gw_hh_[d](c, j) += gac * h_[d](j, yp, xp);
          }
          for (int j = 0; j < g_; ++j) {
            double acc = 0.0;
            for (int c = 0; c < g_; ++c) acc += w_hh_[d](c, j) * ga[static_cast<std::size_t>(c)];
            carry[static_cast<std::size_t>(j)] = acc;
          }
        }
      }
    }
    return gz;
  }
};

// CRF-style aggregation: one mean-field round over M input features.
//   refined_i = f_i + sum_{j != i} w_ij * Conv1x1_j(f_j),
// with w_ij the softmax over j != i of learned scalar compatibilities; the
// refined features are summed and projected to out_channels by a 1x1 conv.
struct CrfAggregate {
  CrfAggregate() = default;
  CrfAggregate(int num_features, int channels, int out_channels)
      : m_(num_features), proj_(channels, out_channels, 1) {
    if (num_features < 1) throw std::invalid_argument("CrfAggregate: empty feature list");
    for (int j = 0; j < m_; ++j) msg_.emplace_back(channels, channels, 1);
    compat_ = Tensor({m_, m_});
    g_compat_ = Tensor({m_, m_});
  }

  // Softmax over each row i, excluding the diagonal. Undefined for m_ == 1.
  Tensor pair_weights() const {
    Tensor w({m_, m_});
    for (int i = 0; i < m_; ++i) {
      double mx = -1e300;
      for (int j = 0; j < m_; ++j)
        if (j != i) mx = std::max(mx, compat_(i, j));
      double z = 0.0;
      for (int j = 0; j < m_; ++j)
        if (j != i) z += std::exp(compat_(i, j) - mx);
      for (int j = 0; j < m_; ++j)
        if (j != i) w(i, j) = std::exp(compat_(i, j) - mx) / z;
    }
    return w;
  }

  Tensor forward(const std::vector<Tensor>& feats) {
    if (static_cast<int>(feats.size()) != m_)
      throw std::invalid_argument("CrfAggregate: feature count mismatch");
    for (const auto& f : feats)
      if (!f.same_shape(feats[0]))
        throw std::invalid_argument("CrfAggregate: mismatched feature shapes");
    feats_ = feats;
    msgs_.clear();
    for (int j = 0; j < m_; ++j) msgs_.push_back(msg_[j].forward(feats[j]));
    w_ = m_ > 1 ? pair_weights() : Tensor({1, 1});
    Tensor sum = feats[0];
    for (int i = 1; i < m_; ++i) sum.add_(feats[i]);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j)
        if (j != i) sum.axpy_(w_(i, j), msgs_[j]);
    return proj_.forward(sum);
  }

  std::vector<Tensor> backward(const Tensor& gy) {
    Tensor gsum = proj_.backward(gy);
    std::vector<Tensor> gf(static_cast<std::size_t>(m_), gsum);
    if (m_ > 1) {
      // d/dw_ij = <gsum, msg_j>; softmax jacobian per row i
      for (int i = 0; i < m_; ++i) {
        std::vector<double> gw(static_cast<std::size_t>(m_), 0.0);
        double dot_w_gw = 0.0;
        for (int j = 0; j < m_; ++j) {
          if (j == i) continue;
          double d = 0.0;
          for (std::int64_t t = 0; t < gsum.size(); ++t) d += gsum[t] * msgs_[j][t];
          gw[static_cast<std::size_t>(j)] = d;
          dot_w_gw += w_(i, j) * d;
        }
        for (int j = 0; j < m_; ++j)
          if (j != i) g_compat_(i, j) += w_(i, j) * (gw[static_cast<std::size_t>(j)] - dot_w_gw);
      }
      for (int j = 0; j < m_; ++j) {
        double wsum = 0.0;
        for (int i = 0; i < m_; ++i)
          if (i != j) wsum += w_(i, j);
        Tensor gmsg = gsum;
        gmsg.scale_(wsum);
        gf[static_cast<std::size_t>(j)].add_(msg_[j].backward(gmsg));
      }
    }
    return gf;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    for (int j = 0; j < m_; ++j) msg_[j].register_params(r, p + ".msg" + std::to_string(j));
    r.add(p + ".compat", &compat_, &g_compat_);
    proj_.register_params(r, p + ".proj");
  }

  void init(Rng& rng) {
    for (auto& m : msg_) m.init(rng);
    proj_.init(rng);
  }

  int m_ = 0;
  std::vector<Conv2d> msg_;
  Tensor compat_, g_compat_, w_;
  Conv2d proj_;
  std::vector<Tensor> feats_, msgs_;
};

struct MfrmConfig {
  int channels = 32;      // reduced/trunk width C (C % 4 == 0 for the IRNN)
  int out_channels = 32;  // aggregated output width N
  NormMode norm = NormMode::batch;
};

// Multi-scale Feature Refinement Module. Each FRB row is orientation-
// concatenated, reduced by 1x1 conv and upsampled to the finest scale; a 3x3
// trunk feeds the attention gate and the 4Dir IRNN; the CRF round aggregates
// scales + F_att + F_IRNN.
struct Mfrm {
  Mfrm() = default;
  Mfrm(int rows, int frb_channels, int orientations, const MfrmConfig& cfg)
      : rows_(rows), u_(orientations), cfg_(cfg),
        trunk_(cfg.channels, cfg.channels, 3),
        trunk_norm_(cfg.channels, cfg.norm),
        attention_(cfg.channels),
        irnn_(cfg.channels),
        crf_(rows + 2, cfg.channels, cfg.out_channels) {
    for (int r = 0; r < rows_; ++r) {
      reduces_.emplace_back(frb_channels * orientations, cfg.channels, 1);
      reduce_norms_.emplace_back(cfg.channels, cfg.norm);
    }
    reduce_relus_.resize(static_cast<std::size_t>(rows_));
  }

  Tensor forward(const std::vector<Tensor>& scale_feats, bool train) {
    if (static_cast<int>(scale_feats.size()) != rows_)
      throw std::invalid_argument("Mfrm: scale feature count mismatch");
    h0_ = scale_feats[0].dim(2);
    w0_ = scale_feats[0].dim(3);
    up_.clear();
    scale_dims_.clear();
    for (int r = 0; r < rows_; ++r) {
      Tensor flat = concat_orientations(scale_feats[r]);
      Tensor red = reduce_relus_[r].forward(
          reduce_norms_[r].forward(reduces_[r].forward(flat), train));
      scale_dims_.push_back({red.dim(1), red.dim(2)});
      up_.push_back(r == 0 ? red : bilinear_resize(red, h0_, w0_));
    }
    Tensor trunk_in = up_[0];
    for (int r = 1; r < rows_; ++r) trunk_in.add_(up_[r]);
    Tensor trunk = trunk_relu_.forward(trunk_norm_.forward(trunk_.forward(trunk_in), train));
    Tensor f_att = attention_.forward(trunk);
    Tensor f_irnn = irnn_.forward(trunk);
    std::vector<Tensor> feats = up_;
    feats.push_back(f_att);
    feats.push_back(f_irnn);
    return crf_.forward(feats);
  }

  std::vector<Tensor> backward(const Tensor& gy) {
    std::vector<Tensor> gf = crf_.backward(gy);
    Tensor g_trunk = attention_.backward(gf[static_cast<std::size_t>(rows_)]);
    g_trunk.add_(irnn_.backward(gf[static_cast<std::size_t>(rows_) + 1]));
    Tensor g_trunk_in =
        trunk_.backward(trunk_norm_.backward(trunk_relu_.backward(g_trunk)));
    std::vector<Tensor> g_scales;
    for (int r = 0; r < rows_; ++r) {
      Tensor g_up = gf[static_cast<std::size_t>(r)];
      g_up.add_(g_trunk_in);
      Tensor g_red = r == 0 ? g_up
                            : bilinear_resize_backward(g_up, scale_dims_[r].first,
                                                       scale_dims_[r].second);
      Tensor g_flat = reduces_[r].backward(
          reduce_norms_[r].backward(reduce_relus_[r].backward(g_red)));
      g_scales.push_back(split_orientations(g_flat, u_));
    }
    return g_scales;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    for (int i = 0; i < rows_; ++i) {
      reduces_[i].register_params(r, p + ".reduce" + std::to_string(i));
      reduce_norms_[i].register_params(r, p + ".reduce" + std::to_string(i) + "_bn");
    }
    trunk_.register_params(r, p + ".trunk");
    trunk_norm_.register_params(r, p + ".trunk_bn");
    attention_.register_params(r, p + ".att");
    irnn_.register_params(r, p + ".irnn");
    crf_.register_params(r, p + ".crf");
  }

  void init(Rng& rng) {
    for (auto& c : reduces_) c.init(rng);
    trunk_.init(rng);
    attention_.init(rng);
    irnn_.init(rng);
    crf_.init(rng);
  }

  int rows_ = 0, u_ = 4;
  MfrmConfig cfg_;
  std::vector<Conv2d> reduces_;
  std::vector<Norm> reduce_norms_;
  std::vector<ReLU> reduce_relus_;
  Conv2d trunk_;
  Norm trunk_norm_;
  ReLU trunk_relu_;
  ChannelAttention attention_;
  Irnn4Dir irnn_;
  CrfAggregate crf_;
  std::vector<Tensor> up_;
  std::vector<std::pair<int, int>> scale_dims_;
  int h0_ = 0, w0_ = 0;
};

}  // namespace frbdet
