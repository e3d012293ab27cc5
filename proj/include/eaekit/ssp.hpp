#pragma once

// Gated fusion of format-specific and format-shared context states:
// g = sigmoid([H_spec || H_shared] W_g + b_g), out = g*H_spec + (1-g)*H_shared,
// computed per token and per dimension.

#include <random>
#include <stdexcept>
#include <string>

#include "eaekit/graph.hpp"

namespace eaekit::ssp {

struct GateParams {
  Param w;  // 2*d_model x d_model
  Param b;  // 1 x d_model

  GateParams(const std::string& prefix, int d_model, double init_std, std::mt19937_64& rng)
      : w(prefix + "/w_g", Mat::randn(2 * d_model, d_model, init_std, rng)),
        b(prefix + "/b_g", Mat::zeros(1, d_model)) {}

  ParamList params() { return {&w, &b}; }
};

// Plain-Mat gate values, exposed for checks.
inline Mat gate_values(const Mat& h_spec, const Mat& h_shared, const Mat& w, const Mat& b) {
  if (!h_spec.same_shape(h_shared)) throw std::invalid_argument("fuse: input shape mismatch");
  const int d = h_spec.cols;
  if (w.rows != 2 * d || w.cols != d || b.rows != 1 || b.cols != d) {
    throw std::invalid_argument("fuse: gate parameter shape mismatch");
  }
  Mat g(h_spec.rows, d);
  for (int i = 0; i < h_spec.rows; ++i) {
    const double* hs = h_spec.row(i);
    const double* hh = h_shared.row(i);
    double* gi = g.row(i);
    for (int j = 0; j < d; ++j) {
      double z = b.a[j];
      for (int k = 0; k < d; ++k) z += hs[k] * w.at(k, j) + hh[k] * w.at(d + k, j);
      gi[j] = 1.0 / (1.0 + std::exp(-z));
    }
  }
  return g;
}

inline Mat fuse(const Mat& h_spec, const Mat& h_shared, const Mat& w, const Mat& b) {
  const Mat g = gate_values(h_spec, h_shared, w, b);
  Mat out(h_spec.rows, h_spec.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.a[i] = g.a[i] * h_spec.a[i] + (1.0 - g.a[i]) * h_shared.a[i];
  }
  return out;
}

// Graph form; algebraically h_shared + g*(h_spec - h_shared).
inline Var fuse(Graph& g, Var h_spec, Var h_shared, GateParams& gate) {
  if (!g.val(h_spec).same_shape(g.val(h_shared))) {
    throw std::invalid_argument("fuse: input shape mismatch");
  }
  Var cat = g.concat_cols(h_spec, h_shared);
  Var gv = g.sigmoid(g.add_rowvec(g.matmul(cat, g.param(gate.w)), g.param(gate.b)));
  return g.add(h_shared, g.hadamard(gv, g.sub(h_spec, h_shared)));
}

}  // namespace eaekit::ssp
