#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frbdet/gabor.hpp"
#include "frbdet/tensor.hpp"

namespace frbdet {

// Named parameter/buffer table. Optimizer walks trainable entries, the
// checkpoint walks everything. Registration order is construction order and
// therefore stable across runs.
struct ParamEntry {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for buffers
  bool trainable = true;
};

class ParamRegistry {
public:
  void add(std::string name, Tensor* value, Tensor* grad) {
    entries_.push_back({std::move(name), value, grad, true});
  }
  void add_buffer(std::string name, Tensor* value) {
    entries_.push_back({std::move(name), value, nullptr, false});
  }

  const std::vector<ParamEntry>& entries() const { return entries_; }

  ParamEntry* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  void zero_grads() {
    for (auto& e : entries_)
      if (e.grad) e.grad->fill(0.0);
  }

  std::int64_t trainable_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value->size();
    return n;
  }

private:
  std::vector<ParamEntry> entries_;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

struct ReLU {
  Tensor forward(const Tensor& x) {
    x_ = x;
    Tensor y = x;
    for (std::int64_t i = 0; i < y.size(); ++i)
      if (y[i] < 0) y[i] = 0;
    return y;
  }
  Tensor backward(const Tensor& gy) const {
    Tensor gx = gy;
    for (std::int64_t i = 0; i < gx.size(); ++i)
      if (x_[i] <= 0) gx[i] = 0;
    return gx;
  }
  Tensor x_;
};

struct Sigmoid {
  Tensor forward(const Tensor& x) {
    y_ = x;
    for (std::int64_t i = 0; i < y_.size(); ++i) y_[i] = 1.0 / (1.0 + std::exp(-y_[i]));
    return y_;
  }
  Tensor backward(const Tensor& gy) const {
    Tensor gx = gy;
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] *= y_[i] * (1.0 - y_[i]);
    return gx;
  }
  Tensor y_;
};

struct Tanh {
  Tensor forward(const Tensor& x) {
    y_ = x;
    for (std::int64_t i = 0; i < y_.size(); ++i) y_[i] = std::tanh(y_[i]);
    return y_;
  }
  Tensor backward(const Tensor& gy) const {
    Tensor gx = gy;
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0 - y_[i] * y_[i];
    return gx;
  }
  Tensor y_;
};

// ---------------------------------------------------------------------------
// Plain convolution on flat maps [C][H][W]
// ---------------------------------------------------------------------------

struct Conv2d {
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int stride = 1, int pad = -1, bool bias = true)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad < 0 ? k / 2 : pad),
        has_bias_(bias) {
    w_ = Tensor({out_c_, in_c_, k_, k_});
    gw_ = Tensor({out_c_, in_c_, k_, k_});
    if (has_bias_) {
      b_ = Tensor({out_c_});
      gb_ = Tensor({out_c_});
    }
  }

  void init(Rng& rng) { rng.fill_kaiming_uniform(w_, in_c_ * k_ * k_); }

  void register_params(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".w", &w_, &gw_);
    if (has_bias_) r.add(prefix + ".b", &b_, &gb_);
  }

  Tensor forward(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != in_c_) throw std::invalid_argument("Conv2d: bad input shape");
    x_ = x;
    const int H = x.dim(1), W = x.dim(2);
    const int Ho = conv_out_dim(H, k_, stride_, pad_);
    const int Wo = conv_out_dim(W, k_, stride_, pad_);
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("Conv2d: input too small");
    Tensor y({out_c_, Ho, Wo});
#pragma omp parallel for
    for (int o = 0; o < out_c_; ++o) {
      for (int yy = 0; yy < Ho; ++yy) {
        for (int xx = 0; xx < Wo; ++xx) {
          double acc = has_bias_ ? b_(o) : 0.0;
          for (int i = 0; i < in_c_; ++i) {
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = yy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = xx * stride_ - pad_ + kx;
                if (ix < 0 || ix >= W) continue;
                acc += w_(o, i, ky, kx) * x(i, iy, ix);
              }
            }
          }
          y(o, yy, xx) = acc;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int H = x_.dim(1), W = x_.dim(2);
    const int Ho = gy.dim(1), Wo = gy.dim(2);
#pragma omp parallel for
    for (int o = 0; o < out_c_; ++o) {
      double bsum = 0.0;
      for (int yy = 0; yy < Ho; ++yy) {
        for (int xx = 0; xx < Wo; ++xx) {
          const double g = gy(o, yy, xx);
          bsum += g;
          for (int i = 0; i < in_c_; ++i) {
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = yy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = xx * stride_ - pad_ + kx;
                if (ix < 0 || ix >= W) continue;
                gw_(o, i, ky, kx) += g * x_(i, iy, ix);
              }
            }
          }
        }
      }
      if (has_bias_) gb_(o) += bsum;
    }
    Tensor gx({in_c_, H, W});
#pragma omp parallel for
    for (int i = 0; i < in_c_; ++i) {
      for (int o = 0; o < out_c_; ++o) {
        for (int yy = 0; yy < Ho; ++yy) {
          for (int xx = 0; xx < Wo; ++xx) {
            const double g = gy(o, yy, xx);
            if (g == 0.0) continue;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = yy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = xx * stride_ - pad_ + kx;
                if (ix < 0 || ix >= W) continue;
                gx(i, iy, ix) += g * w_(o, i, ky, kx);
              }
            }
          }
        }
      }
    }
    return gx;
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  Tensor w_, b_, gw_, gb_;
  Tensor x_;
};

// ---------------------------------------------------------------------------
// Transposed convolution on flat maps (the decoder's Deconv3x3)
// out = (in - 1) * stride - 2 * pad + k + out_pad; stride 2 with pad 1,
// out_pad 1 doubles dims exactly, stride 1 with pad 1, out_pad 0 keeps them.
// ---------------------------------------------------------------------------

struct ConvTranspose2d {
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_c, int out_c, int k, int stride)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(k / 2),
        out_pad_(stride - 1) {
    w_ = Tensor({in_c_, out_c_, k_, k_});
    gw_ = Tensor({in_c_, out_c_, k_, k_});
    b_ = Tensor({out_c_});
    gb_ = Tensor({out_c_});
  }

  void init(Rng& rng) { rng.fill_kaiming_uniform(w_, in_c_ * k_ * k_); }

  void register_params(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".w", &w_, &gw_);
    r.add(prefix + ".b", &b_, &gb_);
  }

  int out_dim(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_ + out_pad_; }

  Tensor forward(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != in_c_)
      throw std::invalid_argument("ConvTranspose2d: bad input shape");
    x_ = x;
    const int H = x.dim(1), W = x.dim(2);
    const int Ho = out_dim(H), Wo = out_dim(W);
    Tensor y({out_c_, Ho, Wo});
#pragma omp parallel for
    for (int o = 0; o < out_c_; ++o) {
      for (int yy = 0; yy < Ho; ++yy) {
        for (int xx = 0; xx < Wo; ++xx) {
          double acc = b_(o);
          for (int ky = 0; ky < k_; ++ky) {
            const int ty = yy + pad_ - ky;
            if (ty < 0 || ty % stride_ != 0) continue;
            const int iy = ty / stride_;
            if (iy >= H) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int tx = xx + pad_ - kx;
              if (tx < 0 || tx % stride_ != 0) continue;
              const int ix = tx / stride_;
              if (ix >= W) continue;
              for (int i = 0; i < in_c_; ++i) acc += w_(i, o, ky, kx) * x(i, iy, ix);
            }
          }
          y(o, yy, xx) = acc;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int H = x_.dim(1), W = x_.dim(2);
    const int Ho = gy.dim(1), Wo = gy.dim(2);
#pragma omp parallel for
    for (int i = 0; i < in_c_; ++i) {
      for (int o = 0; o < out_c_; ++o) {
        for (int iy = 0; iy < H; ++iy) {
          for (int ix = 0; ix < W; ++ix) {
            const double xv = x_(i, iy, ix);
            for (int ky = 0; ky < k_; ++ky) {
              const int yy = iy * stride_ - pad_ + ky;
              if (yy < 0 || yy >= Ho) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int xx = ix * stride_ - pad_ + kx;
                if (xx < 0 || xx >= Wo) continue;
                gw_(i, o, ky, kx) += xv * gy(o, yy, xx);
              }
            }
          }
        }
      }
    }
    for (int o = 0; o < out_c_; ++o) {
      double s = 0.0;
      for (int yy = 0; yy < Ho; ++yy)
        for (int xx = 0; xx < Wo; ++xx) s += gy(o, yy, xx);
      gb_(o) += s;
    }
    Tensor gx({in_c_, H, W});
#pragma omp parallel for
    for (int i = 0; i < in_c_; ++i) {
      for (int iy = 0; iy < H; ++iy) {
        for (int ix = 0; ix < W; ++ix) {
          double acc = 0.0;
          for (int o = 0; o < out_c_; ++o) {
            for (int ky = 0; ky < k_; ++ky) {
              const int yy = iy * stride_ - pad_ + ky;
              if (yy < 0 || yy >= Ho) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int xx = ix * stride_ - pad_ + kx;
                if (xx < 0 || xx >= Wo) continue;
                acc += w_(i, o, ky, kx) * gy(o, yy, xx);
              }
            }
          }
          gx(i, iy, ix) = acc;
        }
      }
    }
    return gx;
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0, out_pad_ = 0;
  Tensor w_, b_, gw_, gb_;
  Tensor x_;
};

// ---------------------------------------------------------------------------
// Gabor-orientation-modulated convolution on oriented maps [N][U][H][W].
// Effective weights for orientation u are canonical ⊙ bank[v][u]; each
// orientation channel is convolved independently and the canonical weight
// gradient accumulates across all U orientations.
// ---------------------------------------------------------------------------

struct GofConv2d {
  GofConv2d() = default;
  GofConv2d(int in_c, int out_c, int k, int stride, std::shared_ptr<const GaborBank> bank,
            int scale_index, bool bias = true)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(k / 2), scale_(scale_index),
        has_bias_(bias), bank_(std::move(bank)) {
    if (!bank_ || bank_->kernel_size != k)
      throw std::invalid_argument("GofConv2d: bank kernel size mismatch");
    if (scale_ < 0 || scale_ >= bank_->scales)
      throw std::invalid_argument("GofConv2d: scale index out of range");
    canonical_ = Tensor({out_c_, in_c_, k_, k_});
    g_canonical_ = Tensor({out_c_, in_c_, k_, k_});
    if (has_bias_) {
      b_ = Tensor({out_c_});
      gb_ = Tensor({out_c_});
    }
  }

  void init(Rng& rng) { rng.fill_kaiming_uniform(canonical_, in_c_ * k_ * k_); }

  void register_params(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".w", &canonical_, &g_canonical_);
    if (has_bias_) r.add(prefix + ".b", &b_, &gb_);
  }

  int orientations() const { return bank_->orientations; }

  Tensor forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(0) != in_c_ || x.dim(1) != bank_->orientations)
      throw std::invalid_argument("GofConv2d: bad input shape");
    x_ = x;
    const int U = bank_->orientations;
    const int H = x.dim(2), W = x.dim(3);
    const int Ho = conv_out_dim(H, k_, stride_, pad_);
    const int Wo = conv_out_dim(W, k_, stride_, pad_);
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("GofConv2d: input too small");
    wmod_ = modulate_weights(canonical_, *bank_, scale_);
    Tensor y({out_c_, U, Ho, Wo});
#pragma omp parallel for
    for (int o = 0; o < out_c_; ++o) {
      for (int u = 0; u < U; ++u) {
        const double* w_ou = wmod_.data() + ((static_cast<std::int64_t>(o) * U + u) * in_c_) * k_ * k_;
        for (int yy = 0; yy < Ho; ++yy) {
          for (int xx = 0; xx < Wo; ++xx) {
            double acc = has_bias_ ? b_(o) : 0.0;
            for (int i = 0; i < in_c_; ++i) {
              const double* wi = w_ou + static_cast<std::int64_t>(i) * k_ * k_;
              const double* xi = x.data() + (static_cast<std::int64_t>(i) * U + u) * H * W;
              for (int ky = 0; ky < k_; ++ky) {
                const int iy = yy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= H) continue;
                const double* xrow = xi + static_cast<std::int64_t>(iy) * W;
                const double* wrow = wi + ky * k_;
                for (int kx = 0; kx < k_; ++kx) {
                  const int ix = xx * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= W) continue;
                  acc += wrow[kx] * xrow[ix];
                }
              }
            }
            y(o, u, yy, xx) = acc;
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int U = bank_->orientations;
    const int H = x_.dim(2), W = x_.dim(3);
    const int Ho = gy.dim(2), Wo = gy.dim(3);
    Tensor g_wmod({out_c_, U, in_c_, k_, k_});
#pragma omp parallel for
    for (int o = 0; o < out_c_; ++o) {
      double bsum = 0.0;
      for (int u = 0; u < U; ++u) {
        for (int yy = 0; yy < Ho; ++yy) {
          for (int xx = 0; xx < Wo; ++xx) {
            const double g = gy(o, u, yy, xx);
            bsum += g;
            if (g == 0.0) continue;
            for (int i = 0; i < in_c_; ++i) {
              const double* xi = x_.data() + (static_cast<std::int64_t>(i) * U + u) * H * W;
              double* gw = g_wmod.data() +
                           (((static_cast<std::int64_t>(o) * U + u) * in_c_) + i) * k_ * k_;
              for (int ky = 0; ky < k_; ++ky) {
                const int iy = yy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= H) continue;
                const double* xrow = xi + static_cast<std::int64_t>(iy) * W;
                for (int kx = 0; kx < k_; ++kx) {
                  const int ix = xx * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= W) continue;
                  gw[ky * k_ + kx] += g * xrow[ix];
                }
              }
            }
          }
        }
      }
      if (has_bias_) gb_(o) += bsum;
      // fold the per-orientation weight grads back onto the canonical weights
      for (int i = 0; i < in_c_; ++i)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            double acc = 0.0;
            for (int u = 0; u < U; ++u)
              acc += g_wmod(o, u, i, ky, kx) * bank_->kernels(scale_, u, ky, kx);
            g_canonical_(o, i, ky, kx) += acc;
          }
    }
    Tensor gx({in_c_, U, H, W});
#pragma omp parallel for
    for (int i = 0; i < in_c_; ++i) {
      for (int u = 0; u < U; ++u) {
        double* gxi = gx.data() + (static_cast<std::int64_t>(i) * U + u) * H * W;
        for (int o = 0; o < out_c_; ++o) {
          const double* wi = wmod_.data() +
                             (((static_cast<std::int64_t>(o) * U + u) * in_c_) + i) * k_ * k_;
          for (int yy = 0; yy < Ho; ++yy) {
            for (int xx = 0; xx < Wo; ++xx) {
              const double g = gy(o, u, yy, xx);
              if (g == 0.0) continue;
              for (int ky = 0; ky < k_; ++ky) {
                const int iy = yy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= H) continue;
                double* gxrow = gxi + static_cast<std::int64_t>(iy) * W;
                const double* wrow = wi + ky * k_;
                for (int kx = 0; kx < k_; ++kx) {
                  const int ix = xx * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= W) continue;
                  gxrow[ix] += g * wrow[kx];
                }
              }
            }
          }
        }
      }
    }
    return gx;
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0, scale_ = 0;
  bool has_bias_ = true;
  std::shared_ptr<const GaborBank> bank_;
  Tensor canonical_, b_, g_canonical_, gb_;
  Tensor x_, wmod_;
};

// ---------------------------------------------------------------------------
// Batch normalization over the leading channel axis. Oriented maps pass
// channels = N * U (their memory layout is already [N*U][H][W]).
// ---------------------------------------------------------------------------

struct BatchNorm2d {
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Tensor::full({c_}, 1.0);
    beta_ = Tensor({c_});
    g_gamma_ = Tensor({c_});
    g_beta_ = Tensor({c_});
    run_mean_ = Tensor({c_});
    run_var_ = Tensor::full({c_}, 1.0);
  }

  void register_params(ParamRegistry& r, const std::string& prefix) {
    r.add(prefix + ".gamma", &gamma_, &g_gamma_);
    r.add(prefix + ".beta", &beta_, &g_beta_);
    r.add_buffer(prefix + ".run_mean", &run_mean_);
    r.add_buffer(prefix + ".run_var", &run_var_);
  }

  Tensor forward(const Tensor& x, bool train) {
    if (x.size() % c_ != 0) throw std::invalid_argument("BatchNorm2d: channel mismatch");
    const std::int64_t S = x.size() / c_;
    train_ = train;
    Tensor y = x;
    if (train) {
      x_hat_ = x;
      mean_ = Tensor({c_});
      inv_std_ = Tensor({c_});
      for (int c = 0; c < c_; ++c) {
        const double* xc = x.data() + c * S;
        double m = 0.0;
        for (std::int64_t i = 0; i < S; ++i) m += xc[i];
        m /= static_cast<double>(S);
        double var = 0.0;
        for (std::int64_t i = 0; i < S; ++i) var += (xc[i] - m) * (xc[i] - m);
        var /= static_cast<double>(S);
        mean_(c) = m;
        inv_std_(c) = 1.0 / std::sqrt(var + eps_);
        run_mean_(c) = (1.0 - momentum_) * run_mean_(c) + momentum_ * m;
        run_var_(c) = (1.0 - momentum_) * run_var_(c) + momentum_ * var;
        double* hc = x_hat_.data() + c * S;
        double* yc = y.data() + c * S;
        for (std::int64_t i = 0; i < S; ++i) {
          hc[i] = (xc[i] - m) * inv_std_(c);
          yc[i] = gamma_(c) * hc[i] + beta_(c);
        }
      }
    } else {
      for (int c = 0; c < c_; ++c) {
        const double a = gamma_(c) / std::sqrt(run_var_(c) + eps_);
        const double b = beta_(c) - a * run_mean_(c);
        double* yc = y.data() + c * S;
        for (std::int64_t i = 0; i < S; ++i) yc[i] = a * yc[i] + b;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const std::int64_t S = gy.size() / c_;
    Tensor gx = gy;
    if (!train_) {
      for (int c = 0; c < c_; ++c) {
        const double a = gamma_(c) / std::sqrt(run_var_(c) + eps_);
        double* gc = gx.data() + c * S;
        for (std::int64_t i = 0; i < S; ++i) gc[i] *= a;
      }
      return gx;
    }
    for (int c = 0; c < c_; ++c) {
      const double* gyc = gy.data() + c * S;
      const double* hc = x_hat_.data() + c * S;
      double sum_gy = 0.0, sum_gy_h = 0.0;
      for (std::int64_t i = 0; i < S; ++i) {
        sum_gy += gyc[i];
        sum_gy_h += gyc[i] * hc[i];
      }
      g_gamma_(c) += sum_gy_h;
      g_beta_(c) += sum_gy;
      const double inv_n = 1.0 / static_cast<double>(S);
      const double a = gamma_(c) * inv_std_(c);
      double* gc = gx.data() + c * S;
      for (std::int64_t i = 0; i < S; ++i)
        gc[i] = a * (gyc[i] - inv_n * sum_gy - hc[i] * inv_n * sum_gy_h);
    }
    return gx;
  }

  int c_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  bool train_ = true;
  Tensor gamma_, beta_, g_gamma_, g_beta_;
  Tensor run_mean_, run_var_;
  Tensor x_hat_, mean_, inv_std_;
};

// Normalization selector: batch (running stats at eval), instance (per-map
// spatial stats at train and eval alike; no train/eval shift at batch size
// 1), or none.
enum class NormMode { none, batch, instance };

inline NormMode norm_mode_from_string(const std::string& s) {
  if (s == "none") return NormMode::none;
  if (s == "instance") return NormMode::instance;
  if (s == "batch") return NormMode::batch;
  throw std::invalid_argument("unknown norm mode: " + s);
}

inline const char* norm_mode_to_string(NormMode m) {
  switch (m) {
    case NormMode::none: return "none";
    case NormMode::instance: return "instance";
    default: return "batch";
  }
}

struct Norm {
  Norm() = default;
  Norm(int channels, NormMode mode) : mode_(mode) {
    if (mode_ != NormMode::none) bn_ = BatchNorm2d(channels);
  }
  Tensor forward(const Tensor& x, bool train) {
    if (mode_ == NormMode::none) return x;
    return bn_.forward(x, mode_ == NormMode::instance ? true : train);
  }
  Tensor backward(const Tensor& gy) { return mode_ == NormMode::none ? gy : bn_.backward(gy); }
  void register_params(ParamRegistry& r, const std::string& prefix) {
    if (mode_ != NormMode::none) bn_.register_params(r, prefix);
  }
  NormMode mode_ = NormMode::none;
  BatchNorm2d bn_;
};

// ---------------------------------------------------------------------------
// Max pooling over the leading channel axis (flat view), kernel 3 stride 2
// padding 1 in the encoder stem.
// ---------------------------------------------------------------------------

struct MaxPool2d {
  MaxPool2d() = default;
  MaxPool2d(int k, int stride, int pad) : k_(k), stride_(stride), pad_(pad) {}

  // x viewed as [C][H][W] where C = product of leading dims.
  Tensor forward(const Tensor& x) {
    in_shape_ = x.shape();
    const int W = x.dim(x.rank() - 1);
    const int H = x.dim(x.rank() - 2);
    const std::int64_t C = x.size() / (static_cast<std::int64_t>(H) * W);
    const int Ho = conv_out_dim(H, k_, stride_, pad_);
    const int Wo = conv_out_dim(W, k_, stride_, pad_);
    std::vector<int> out_shape = x.shape();
    out_shape[out_shape.size() - 2] = Ho;
    out_shape[out_shape.size() - 1] = Wo;
    Tensor y(out_shape);
    argmax_.assign(static_cast<std::size_t>(y.size()), 0);
#pragma omp parallel for
    for (std::int64_t c = 0; c < C; ++c) {
      const double* xc = x.data() + c * H * W;
      double* yc = y.data() + c * Ho * Wo;
      std::int64_t* am = argmax_.data() + c * Ho * Wo;
      for (int yy = 0; yy < Ho; ++yy) {
        for (int xx = 0; xx < Wo; ++xx) {
          double best = -1e300;
          std::int64_t best_i = -1;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = yy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = xx * stride_ - pad_ + kx;
              if (ix < 0 || ix >= W) continue;
              const double v = xc[iy * W + ix];
              if (v > best) {
                best = v;
                best_i = iy * W + ix;
              }
            }
          }
          yc[yy * Wo + xx] = best;
          am[yy * Wo + xx] = c * H * W + best_i;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) const {
    Tensor gx(in_shape_);
    for (std::int64_t i = 0; i < gy.size(); ++i) gx[argmax_[static_cast<std::size_t>(i)]] += gy[i];
    return gx;
  }

  int k_ = 3, stride_ = 2, pad_ = 1;
  std::vector<int> in_shape_;
  std::vector<std::int64_t> argmax_;
};

// ---------------------------------------------------------------------------
// Bilinear resize of flat maps [C][H][W] (align_corners = false). Used to
// bring coarser FRB scales to the common aggregation resolution.
// ---------------------------------------------------------------------------

inline Tensor bilinear_resize(const Tensor& x, int Ho, int Wo) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({C, Ho, Wo});
  for (int yy = 0; yy < Ho; ++yy) {
    double sy = (yy + 0.5) * static_cast<double>(H) / Ho - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - y0;
    for (int xx = 0; xx < Wo; ++xx) {
      double sx = (xx + 0.5) * static_cast<double>(W) / Wo - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        const double v = (1 - fy) * ((1 - fx) * x(c, y0, x0) + fx * x(c, y0, x1)) +
                         fy * ((1 - fx) * x(c, y1, x0) + fx * x(c, y1, x1));
        y(c, yy, xx) = v;
      }
    }
  }
  return y;
}

// Adjoint of bilinear_resize: scatters output gradients back to input dims.
inline Tensor bilinear_resize_backward(const Tensor& gy, int H, int W) {
  const int C = gy.dim(0), Ho = gy.dim(1), Wo = gy.dim(2);
  Tensor gx({C, H, W});
  for (int yy = 0; yy < Ho; ++yy) {
    double sy = (yy + 0.5) * static_cast<double>(H) / Ho - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - y0;
    for (int xx = 0; xx < Wo; ++xx) {
      double sx = (xx + 0.5) * static_cast<double>(W) / Wo - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        const double g = gy(c, yy, xx);
        gx(c, y0, x0) += (1 - fy) * (1 - fx) * g;
        gx(c, y0, x1) += (1 - fy) * fx * g;
        gx(c, y1, x0) += fy * (1 - fx) * g;
        gx(c, y1, x1) += fy * fx * g;
      }
    }
  }
  return gx;
}

}  // namespace frbdet
