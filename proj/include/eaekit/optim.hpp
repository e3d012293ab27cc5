#pragma once

// Adam with bias correction plus global-norm gradient clipping.

#include <cmath>
#include <cstdint>
#include <vector>

#include "eaekit/graph.hpp"

namespace eaekit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const ParamList& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (Param* p : params) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.a[i];
        p->adam_m.a[i] = cfg_.beta1 * p->adam_m.a[i] + (1.0 - cfg_.beta1) * g;
        p->adam_v.a[i] = cfg_.beta2 * p->adam_v.a[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = p->adam_m.a[i] / bc1;
        const double vhat = p->adam_v.a[i] / bc2;
        p->value.a[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
};

inline void zero_grads(const ParamList& params) {
  for (Param* p : params) p->grad.fill(0.0);
}

// Scales gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (Param* p : params) sq += p->grad.sq_norm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Param* p : params) {
      for (auto& g : p->grad.a) g *= s;
    }
  }
  return norm;
}

// Deterministic stream splitting for seeds (splitmix64).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace eaekit
