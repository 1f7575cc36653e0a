#include "doctest.h"

#include "frbdet/gabor.hpp"
#include "testutil.hpp"

using namespace frbdet;

TEST_CASE("gabor bank: center element is 1 for U=1,V=1,psi=0") {
  GaborParams p;
  p.orientations = 1;
  p.scales = 1;
  p.kernel_size = 5;
  p.wavelength = 3.7;
  p.bandwidth = 1.9;
  const GaborBank bank = build_gabor_bank(p);
  CHECK(bank.at(0, 0, 2, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gabor bank: psi=0 kernel is point-symmetric") {
  GaborParams p;
  p.orientations = 1;
  p.scales = 1;
  p.kernel_size = 7;
  const GaborBank bank = build_gabor_bank(p);
  const int k = p.kernel_size;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x)
      CHECK(bank.at(0, 0, y, x) == doctest::Approx(bank.at(0, 0, k - 1 - y, k - 1 - x)).epsilon(1e-12));
}

TEST_CASE("gabor bank: U=4,V=4 yields 16 kernels; u index 2 is u index 0 rotated 90 deg") {
  GaborParams p;  // defaults U=4, V=4, k=3
  const GaborBank bank = build_gabor_bank(p);
  CHECK(bank.kernels.size() == 4 * 4 * 3 * 3);
  const int k = p.kernel_size;
  const int half = k / 2;
  for (int v = 0; v < p.scales; ++v) {
    double worst = 0.0;
    for (int y = 0; y < k; ++y) {
      for (int x = 0; x < k; ++x) {
        // g_{theta=pi/2}(x, y) == g_{theta=0}(y, -x); oracle evaluates the
        // Gabor formula on the rotated grid coordinates.
        const double xr = x - half, yr = y - half;
        const double scale = std::pow(std::sqrt(2.0), v);
        const double lambda = p.effective_wavelength() * scale;
        const double sigma = p.effective_bandwidth() * scale;
        const double oracle = gabor_value(yr, -xr, 0.0, lambda, p.aspect, sigma, p.phase);
        // normalize the oracle by the theta=0 kernel's peak
        double peak = 0.0;
        for (int yy = 0; yy < k; ++yy)
          for (int xx = 0; xx < k; ++xx)
            peak = std::max(peak, std::fabs(gabor_value(xx - half, yy - half, 0.0, lambda,
                                                        p.aspect, sigma, p.phase)));
        worst = std::max(worst, std::fabs(bank.at(v, 2, y, x) - oracle / peak));
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("gabor bank: rejects invalid parameters") {
  GaborParams p;
  p.kernel_size = 4;
  CHECK_THROWS_AS(build_gabor_bank(p), std::invalid_argument);
  p.kernel_size = 3;
  p.wavelength = -1.0;
  CHECK_THROWS_AS(build_gabor_bank(p), std::invalid_argument);
  p.wavelength = 3.0;
  p.bandwidth = -0.5;
  CHECK_THROWS_AS(build_gabor_bank(p), std::invalid_argument);
}

TEST_CASE("modulate_weights: all-ones bank is the identity modulation") {
  GaborBank ones;
  ones.orientations = 3;
  ones.scales = 1;
  ones.kernel_size = 3;
  ones.kernels = Tensor::full({1, 3, 3, 3}, 1.0);
  Rng rng(7);
  const Tensor canonical = test::random_tensor({2, 2, 3, 3}, rng);
  const Tensor out = modulate_weights(canonical, ones, 0);
  for (int o = 0; o < 2; ++o)
    for (int u = 0; u < 3; ++u)
      for (int i = 0; i < 2; ++i)
        for (int y = 0; y < 3; ++y)
          for (int x = 0; x < 3; ++x) CHECK(out(o, u, i, y, x) == canonical(o, i, y, x));
}

TEST_CASE("modulate_weights: zero canonical gives zero output") {
  const GaborBank bank = build_gabor_bank(GaborParams{});
  const Tensor canonical({2, 1, 3, 3});
  const Tensor out = modulate_weights(canonical, bank, 1);
  CHECK(out.max_abs() == 0.0);
}

TEST_CASE("modulate_weights: matches scalar elementwise-product oracle") {
  GaborParams p;
  p.orientations = 2;
  const GaborBank bank = build_gabor_bank(p);
  Rng rng(11);
  const Tensor canonical = test::random_tensor({2, 1, 3, 3}, rng);
  const Tensor out = modulate_weights(canonical, bank, 0);
  for (int o = 0; o < 2; ++o)
    for (int u = 0; u < 2; ++u)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
          CHECK(out(o, u, 0, y, x) == canonical(o, 0, y, x) * bank.at(0, u, y, x));
}

TEST_CASE("modulate_weights: rejects kernel size mismatch") {
  const GaborBank bank = build_gabor_bank(GaborParams{});
  const Tensor canonical({2, 1, 5, 5});
  CHECK_THROWS_AS(modulate_weights(canonical, bank, 0), std::invalid_argument);
}

TEST_CASE("modulation linearity: modulate(a*W1 + b*W2) == a*mod(W1) + b*mod(W2)") {
  const GaborBank bank = build_gabor_bank(GaborParams{});
  Rng rng(3);
  const Tensor w1 = test::random_tensor({2, 2, 3, 3}, rng);
  const Tensor w2 = test::random_tensor({2, 2, 3, 3}, rng);
  const double a = 0.37, b = -1.25;
  Tensor combo = w1;
  combo.scale_(a);
  combo.axpy_(b, w2);
  const Tensor lhs = modulate_weights(combo, bank, 2);
  Tensor rhs = modulate_weights(w1, bank, 2);
  rhs.scale_(a);
  rhs.axpy_(b, modulate_weights(w2, bank, 2));
  CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("gabor bank cache: shares banks per kernel size") {
  GaborBankCache cache(GaborParams{});
  auto b3 = cache.get(3);
  auto b3_again = cache.get(3);
  auto b7 = cache.get(7);
  CHECK(b3.get() == b3_again.get());
  CHECK(b7->kernel_size == 7);
  CHECK(b7->orientations == 4);
}
