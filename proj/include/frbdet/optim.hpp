#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "frbdet/config.hpp"
#include "frbdet/nn.hpp"

namespace frbdet {

// lr(t) = base * factor^(-floor(t / every)); with the reference schedule this is
// 0.01 divided by 10 after each subsequent 15k iterations.
inline double lr_at(double base, long iteration, long decay_every, double decay_factor) {
  double lr = base;
  for (long k = iteration / decay_every; k > 0; --k) lr /= decay_factor;
  return lr;
}

// Momentum SGD: v <- mu*v - lr*grad; theta <- theta + v.
struct SgdMomentum {
  explicit SgdMomentum(const OptimizerConfig& cfg) : cfg_(cfg) {}

  void attach(ParamRegistry& params) {
    velocity_.clear();
    names_.clear();
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      velocity_.emplace_back(e.value->shape());
      names_.push_back("opt.v." + e.name);
    }
  }

  double learning_rate(long iteration) const {
    return lr_at(cfg_.lr, iteration, cfg_.decay_every, cfg_.decay_factor);
  }

  void step(ParamRegistry& params, long iteration) {
    const double lr = learning_rate(iteration);
    double scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double norm2 = 0.0;
      for (const auto& e : params.entries()) {
        if (!e.trainable) continue;
        for (std::int64_t i = 0; i < e.grad->size(); ++i) norm2 += (*e.grad)[i] * (*e.grad)[i];
      }
      const double norm = std::sqrt(norm2);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }
    std::size_t vi = 0;
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      Tensor& v = velocity_[vi++];
      for (std::int64_t i = 0; i < v.size(); ++i) {
        v[i] = cfg_.momentum * v[i] - lr * scale * (*e.grad)[i];
        (*e.value)[i] += v[i];
      }
    }
  }

  // Exposes momentum buffers for checkpointing.
  std::vector<std::pair<std::string, const Tensor*>> state() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (std::size_t i = 0; i < velocity_.size(); ++i) out.emplace_back(names_[i], &velocity_[i]);
    return out;
  }

  void restore(const std::map<std::string, Tensor>& tensors) {
    for (std::size_t i = 0; i < velocity_.size(); ++i) {
      const auto it = tensors.find(names_[i]);
      if (it != tensors.end() && it->second.shape() == velocity_[i].shape())
        velocity_[i] = it->second;
    }
  }

  OptimizerConfig cfg_;
  std::vector<Tensor> velocity_;
  std::vector<std::string> names_;
};

}  // namespace frbdet
