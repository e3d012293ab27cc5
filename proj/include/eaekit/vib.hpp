#pragma once

// Variational information bottleneck over the shared representation: a
// diagonal Gaussian posterior from linear maps of H_shared, reparameterized
// sampling, and the closed-form KL against a standard normal. The two
// mutual-information terms are realized purely through their variational
// bounds: the KL term above and the shared classifier cross-entropy.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "eaekit/graph.hpp"

namespace eaekit::vib {

struct GaussianPosterior {
  Mat mu;       // tokens x d_z
  Mat log_var;  // tokens x d_z
};

struct VIBParams {
  Param w_mu;     // d_model x d_z
  Param w_sigma;  // d_model x d_z; output read as log-variance
  double beta = 0.0;

  VIBParams(const std::string& prefix, int d_model, int d_z, double beta_, double init_std,
            std::mt19937_64& rng)
      : w_mu(prefix + "/w_mu", Mat::randn(d_model, d_z, init_std, rng)),
        w_sigma(prefix + "/w_sigma", Mat::randn(d_model, d_z, init_std, rng)),
        beta(beta_) {
    if (beta < 0.0) throw std::invalid_argument("vib: beta must be nonnegative");
  }

  ParamList params() { return {&w_mu, &w_sigma}; }
  int d_z() const { return w_mu.value.cols; }
};

inline GaussianPosterior posterior(const Mat& h_shared, const Mat& w_mu, const Mat& w_sigma) {
  if (h_shared.cols != w_mu.rows || h_shared.cols != w_sigma.rows || w_mu.cols != w_sigma.cols) {
    throw std::invalid_argument("posterior: dimension mismatch");
  }
  GaussianPosterior p;
  p.mu = Mat(h_shared.rows, w_mu.cols);
  p.log_var = Mat(h_shared.rows, w_sigma.cols);
  matmul_acc(h_shared, w_mu, p.mu);
  matmul_acc(h_shared, w_sigma, p.log_var);
  return p;
}

struct PosteriorVars {
  Var mu;
  Var log_var;
};

inline PosteriorVars posterior(Graph& g, Var h_shared, VIBParams& params) {
  if (g.val(h_shared).cols != params.w_mu.value.rows) {
    throw std::invalid_argument("posterior: dimension mismatch");
  }
  return {g.matmul(h_shared, g.param(params.w_mu)), g.matmul(h_shared, g.param(params.w_sigma))};
}

// Z = mu + exp(log_var / 2) * noise.
inline Mat sample(const GaussianPosterior& p, const Mat& noise) {
  if (!noise.same_shape(p.mu)) throw std::invalid_argument("sample: noise shape mismatch");
  Mat z = p.mu;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z.a[i] += std::exp(0.5 * p.log_var.a[i]) * noise.a[i];
  }
  return z;
}

inline Var sample(Graph& g, const PosteriorVars& p, const Mat& noise) {
  if (!noise.same_shape(g.val(p.mu))) throw std::invalid_argument("sample: noise shape mismatch");
  Var eps = g.input(noise);
  return g.add(p.mu, g.hadamard(g.exp(g.scale(p.log_var, 0.5)), eps));
}

// KL(p(z|x) || N(0,I)) summed over dimensions, averaged over tokens.
inline double kl_to_standard_normal(const GaussianPosterior& p) {
  if (!p.mu.same_shape(p.log_var)) throw std::invalid_argument("kl: shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    kl += 0.5 * (p.mu.a[i] * p.mu.a[i] + std::exp(p.log_var.a[i]) - p.log_var.a[i] - 1.0);
  }
  return kl / p.mu.rows;
}

inline Var kl_to_standard_normal(Graph& g, const PosteriorVars& p) {
  return g.kl_std_normal(p.mu, p.log_var);
}

// Total objective: the gated-fusion span loss plus the shared-bottleneck term.
inline double total_loss(double l_ssp, double l_shared_vib) { return l_ssp + l_shared_vib; }

}  // namespace eaekit::vib
