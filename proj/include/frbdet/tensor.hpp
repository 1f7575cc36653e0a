#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace frbdet {

inline constexpr double kPi = 3.14159265358979323846;

// Dense row-major double tensor, rank 1..5. The whole library computes in
// double so gradient checks and checkpoint roundtrips are exact.
//
// Layout conventions used throughout:
//   oriented feature map  [N][U][H][W]   (conv channels x orientations x spatial)
//   flat feature map      [C][H][W]
//   conv weights          [C_out][C_in][k][k]
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::int64_t n = 1;
    for (int d : shape_) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim");
      n *= d;
    }
    v_.assign(static_cast<std::size_t>(n), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

  double& operator()(int a) { return v_[static_cast<std::size_t>(a)]; }
  double operator()(int a) const { return v_[static_cast<std::size_t>(a)]; }

  double& operator()(int a, int b) { return v_[idx2(a, b)]; }
  double operator()(int a, int b) const { return v_[idx2(a, b)]; }

  double& operator()(int a, int b, int c) { return v_[idx3(a, b, c)]; }
  double operator()(int a, int b, int c) const { return v_[idx3(a, b, c)]; }

  double& operator()(int a, int b, int c, int d) { return v_[idx4(a, b, c, d)]; }
  double operator()(int a, int b, int c, int d) const { return v_[idx4(a, b, c, d)]; }

  double& operator()(int a, int b, int c, int d, int e) { return v_[idx5(a, b, c, d, e)]; }
  double operator()(int a, int b, int c, int d, int e) const { return v_[idx5(a, b, c, d, e)]; }

  void fill(double value) { std::fill(v_.begin(), v_.end(), value); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Reinterprets the buffer under a new shape of equal element count.
  Tensor reshaped(std::vector<int> shape) const {
    Tensor t;
    t.shape_ = std::move(shape);
    std::int64_t n = 1;
    for (int d : t.shape_) n *= d;
    if (n != size()) throw std::invalid_argument("reshaped: element count mismatch");
    t.v_ = v_;
    return t;
  }

  void add_(const Tensor& o) {
    assert(same_shape(o));
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  }

  void axpy_(double a, const Tensor& o) {
    assert(same_shape(o));
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += a * o.v_[i];
  }

  void scale_(double s) {
    for (double& x : v_) x *= s;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
  }

  double sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool bitwise_equal(const Tensor& o) const {
    return shape_ == o.shape_ && v_ == o.v_;
  }

private:
  std::size_t idx2(int a, int b) const {
    return static_cast<std::size_t>(a) * shape_[1] + b;
  }
  std::size_t idx3(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  std::size_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }
  std::size_t idx5(int a, int b, int c, int d, int e) const {
    return (((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d) *
               shape_[4] +
           e;
  }

  std::vector<int> shape_;
  std::vector<double> v_;
};

// Oriented feature maps are rank-4 [N][U][H][W]; flat maps rank-3 [C][H][W].
using OrientedFeatureMap = Tensor;
using FlatFeatureMap = Tensor;

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  assert(a.same_shape(b));
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Deterministic RNG used for parameter init, augmentation and sampling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(g_);
  }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(g_);
  }

  std::uint64_t next_u64() { return g_(); }

  std::mt19937_64& engine() { return g_; }

  void fill_uniform(Tensor& t, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(g_);
  }

  // Fan-in-scaled uniform init for conv weights: bound = sqrt(6 / fan_in).
  void fill_kaiming_uniform(Tensor& t, int fan_in) {
    const double bound = std::sqrt(6.0 / std::max(1, fan_in));
    fill_uniform(t, -bound, bound);
  }

private:
  std::mt19937_64 g_;
};

}  // namespace frbdet
