#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

#include "frbdet/tensor.hpp"

namespace frbdet {

// Parameters of a Gabor filter bank. Orientation u in [0, U) uses
// theta_u = u*pi/U; scale v in [0, V) scales wavelength and bandwidth by
// sqrt(2)^v. Kernels are fixed (non-learned); only canonical conv weights
// train.
struct GaborParams {
  int orientations = 4;   // U
  int scales = 4;         // V
  int kernel_size = 3;    // k, odd and >= 3
  double wavelength = 0;  // lambda in pixels; 0 selects kernel_size
  double aspect = 0.5;    // gamma
  double bandwidth = 0;   // sigma in pixels; 0 selects 0.56 * lambda
  double phase = 0;       // psi in radians

  double effective_wavelength() const {
    return wavelength > 0 ? wavelength : static_cast<double>(kernel_size);
  }
  double effective_bandwidth() const {
    return bandwidth > 0 ? bandwidth : 0.56 * effective_wavelength();
  }

  void validate() const {
    if (orientations < 1) throw std::invalid_argument("GaborParams: orientations < 1");
    if (scales < 1) throw std::invalid_argument("GaborParams: scales < 1");
    if (kernel_size < 3 || kernel_size % 2 == 0)
      throw std::invalid_argument("GaborParams: kernel_size must be odd and >= 3");
    if (wavelength < 0) throw std::invalid_argument("GaborParams: wavelength <= 0");
    if (bandwidth < 0) throw std::invalid_argument("GaborParams: bandwidth <= 0");
    if (aspect <= 0) throw std::invalid_argument("GaborParams: aspect <= 0");
  }
};

// Real-valued Gabor kernels indexed [scale][orientation], each k x k and
// normalized so max |value| = 1 (modulation never amplifies weights).
struct GaborBank {
  int orientations = 0;
  int scales = 0;
  int kernel_size = 0;
  Tensor kernels;  // [V][U][k][k]

  double at(int v, int u, int y, int x) const { return kernels(v, u, y, x); }
};

// Real Gabor function, standard form:
//   g(x,y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)
// with x' = x cos(theta) + y sin(theta), y' = -x sin(theta) + y cos(theta).
inline double gabor_value(double x, double y, double theta, double lambda, double gamma,
                          double sigma, double psi) {
  const double xr = x * std::cos(theta) + y * std::sin(theta);
  const double yr = -x * std::sin(theta) + y * std::cos(theta);
  const double envelope = std::exp(-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma));
  return envelope * std::cos(2.0 * kPi * xr / lambda + psi);
}

inline GaborBank build_gabor_bank(const GaborParams& params) {
  params.validate();
  const int U = params.orientations;
  const int V = params.scales;
  const int k = params.kernel_size;
  const int half = k / 2;
  const double sqrt2 = std::sqrt(2.0);

  GaborBank bank;
  bank.orientations = U;
  bank.scales = V;
  bank.kernel_size = k;
  bank.kernels = Tensor({V, U, k, k});

  for (int v = 0; v < V; ++v) {
    const double scale = std::pow(sqrt2, v);
    const double lambda = params.effective_wavelength() * scale;
    const double sigma = params.effective_bandwidth() * scale;
    for (int u = 0; u < U; ++u) {
      const double theta = static_cast<double>(u) * kPi / U;
      double peak = 0.0;
      for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
          const double g = gabor_value(x - half, y - half, theta, lambda, params.aspect, sigma,
                                       params.phase);
          bank.kernels(v, u, y, x) = g;
          peak = std::max(peak, std::fabs(g));
        }
      }
      if (peak > 0.0) {
        for (int y = 0; y < k; ++y)
          for (int x = 0; x < k; ++x) bank.kernels(v, u, y, x) /= peak;
      }
    }
  }
  return bank;
}

// Elementwise modulation of canonical weights [C_out][C_in][k][k] with the
// bank's orientation kernels at one scale: out[o][u][i] = canonical[o][i] * bank[v][u].
inline Tensor modulate_weights(const Tensor& canonical, const GaborBank& bank, int scale_index) {
  if (canonical.rank() != 4) throw std::invalid_argument("modulate_weights: rank-4 canonical expected");
  const int c_out = canonical.dim(0), c_in = canonical.dim(1);
  const int k = canonical.dim(2);
  if (canonical.dim(3) != k || k != bank.kernel_size)
    throw std::invalid_argument("modulate_weights: kernel size mismatch");
  if (scale_index < 0 || scale_index >= bank.scales)
    throw std::invalid_argument("modulate_weights: scale index out of range");

  const int U = bank.orientations;
  Tensor out({c_out, U, c_in, k, k});
  for (int o = 0; o < c_out; ++o)
    for (int u = 0; u < U; ++u)
      for (int i = 0; i < c_in; ++i)
        for (int y = 0; y < k; ++y)
          for (int x = 0; x < k; ++x)
            out(o, u, i, y, x) = canonical(o, i, y, x) * bank.kernels(scale_index, u, y, x);
  return out;
}

// Shared cache of banks, one per kernel size, so encoder and FRB layers with
// equal kernel size reuse the same bank.
class GaborBankCache {
public:
  explicit GaborBankCache(GaborParams base) : base_(base) {}

  std::shared_ptr<const GaborBank> get(int kernel_size) {
    auto it = cache_.find(kernel_size);
    if (it != cache_.end()) return it->second;
    GaborParams p = base_;
    p.kernel_size = kernel_size;
    p.wavelength = base_.wavelength > 0 ? base_.wavelength : static_cast<double>(kernel_size);
    p.bandwidth = base_.bandwidth > 0 ? base_.bandwidth : 0.56 * p.wavelength;
    auto bank = std::make_shared<GaborBank>(build_gabor_bank(p));
    cache_.emplace(kernel_size, bank);
    return bank;
  }

  const GaborParams& base_params() const { return base_; }

private:
  GaborParams base_;
  std::map<int, std::shared_ptr<const GaborBank>> cache_;
};

}  // namespace frbdet
