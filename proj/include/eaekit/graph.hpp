#pragma once

// Tape-based reverse-mode autograd over Mat. A Graph is built per forward
// pass and thrown away after backward(); learnable tensors (Param) live
// outside the tape and receive accumulated gradients.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eaekit/mat.hpp"

namespace eaekit {

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Param() = default;
  Param(std::string n, Mat init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.rows, value.cols),
        adam_m(value.rows, value.cols),
        adam_v(value.rows, value.cols) {}
};

using ParamList = std::vector<Param*>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  explicit Graph(bool training = false, std::mt19937_64* rng = nullptr)
      : training_(training), rng_(rng) {}

  // node backward closures capture `this`
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = delete;
  Graph& operator=(Graph&&) = delete;

  bool training() const { return training_; }

  const Mat& val(Var v) const { return nodes_[check(v)].val; }
  const Mat& grad_of(Var v) const { return nodes_[check(v)].grad; }

  Var input(Mat m) { return push(std::move(m), false, {}); }

  Var param(Param& p) {
    Var v = push(p.value, true, {});
    Param* pp = &p;
    nodes_[v.id].back = [this, v, pp] { acc(pp->grad, nodes_[v.id].grad); };
    return v;
  }

  // Rows of an embedding table; gradient scatters back into the table.
  Var gather_rows(Param& table, std::vector<int> ids) {
    Mat out(static_cast<int>(ids.size()), table.value.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.value.rows) {
        throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " out of range");
      }
      std::copy_n(table.value.row(ids[i]), table.value.cols, out.row(static_cast<int>(i)));
    }
    Var v = push(std::move(out), true, {});
    Param* pp = &table;
    nodes_[v.id].back = [this, v, pp, ids = std::move(ids)] {
      const Mat& g = nodes_[v.id].grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = pp->grad.row(ids[i]);
        const double* src = g.row(static_cast<int>(i));
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
    };
    return v;
  }

  Var matmul(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    Mat out(A.rows, B.cols);
    matmul_acc(A, B, out);
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) matmul_nt_acc(g, nodes_[b.id].val, nodes_[a.id].grad);
      if (rg(b)) matmul_tn_acc(nodes_[a.id].val, g, nodes_[b.id].grad);
    };
    return v;
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    Mat out(A.rows, B.rows);
    matmul_nt_acc(A, B, out);
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) matmul_acc(g, nodes_[b.id].val, nodes_[a.id].grad);
      if (rg(b)) matmul_tn_acc(g, nodes_[a.id].val, nodes_[b.id].grad);
    };
    return v;
  }

  Var add(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += B.a[i];
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) acc(nodes_[a.id].grad, g);
      if (rg(b)) acc(nodes_[b.id].grad, g);
    };
    return v;
  }

  Var sub(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] -= B.a[i];
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) acc(nodes_[a.id].grad, g);
      if (rg(b)) {
        Mat& gb = nodes_[b.id].grad;
        for (std::size_t i = 0; i < gb.size(); ++i) gb.a[i] -= g.a[i];
      }
    };
    return v;
  }

  // Broadcast a 1 x C row vector over every row of a.
  Var add_rowvec(Var a, Var r) {
    const Mat& A = val(a);
    const Mat& R = val(r);
    if (R.rows != 1 || R.cols != A.cols) throw std::invalid_argument("add_rowvec: shape mismatch");
    Mat out = A;
    for (int i = 0; i < out.rows; ++i) {
      double* oi = out.row(i);
      for (int j = 0; j < out.cols; ++j) oi[j] += R.a[j];
    }
    Var v = push(std::move(out), rg(a) || rg(r), {a, r});
    nodes_[v.id].back = [this, v, a, r] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) acc(nodes_[a.id].grad, g);
      if (rg(r)) {
        Mat& gr = nodes_[r.id].grad;
        for (int i = 0; i < g.rows; ++i) {
          const double* gi = g.row(i);
          for (int j = 0; j < g.cols; ++j) gr.a[j] += gi[j];
        }
      }
    };
    return v;
  }

  Var hadamard(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("hadamard: shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] *= B.a[i];
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      if (rg(a)) {
        Mat& ga = nodes_[a.id].grad;
        const Mat& B2 = nodes_[b.id].val;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[i] * B2.a[i];
      }
      if (rg(b)) {
        Mat& gb = nodes_[b.id].grad;
        const Mat& A2 = nodes_[a.id].val;
        for (std::size_t i = 0; i < gb.size(); ++i) gb.a[i] += g.a[i] * A2.a[i];
      }
    };
    return v;
  }

  Var scale(Var a, double c) {
    Mat out = val(a);
    for (auto& x : out.a) x *= c;
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a, c] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      Mat& ga = nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += c * g.a[i];
    };
    return v;
  }

  Var sigmoid(Var a) {
    Mat out = val(a);
    for (auto& x : out.a) x = 1.0 / (1.0 + std::exp(-x));
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      const Mat& y = nodes_[v.id].val;
      Mat& ga = nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[i] * y.a[i] * (1.0 - y.a[i]);
    };
    return v;
  }

  Var exp(Var a) {
    Mat out = val(a);
    for (auto& x : out.a) x = std::exp(x);
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      const Mat& y = nodes_[v.id].val;
      Mat& ga = nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[i] * y.a[i];
    };
    return v;
  }

  Var gelu(Var a) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    Mat out = val(a);
    for (auto& x : out.a) x = x * 0.5 * (1.0 + std::erf(x * inv_sqrt2));
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      const Mat& x = nodes_[a.id].val;
      Mat& ga = nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double xi = x.a[i];
        const double phi = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
        const double dens = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
        ga.a[i] += g.a[i] * (phi + xi * dens);
      }
    };
    return v;
  }

  Var softmax_rows(Var a) {
    Mat out = val(a);
    for (int i = 0; i < out.rows; ++i) {
      double* r = out.row(i);
      double mx = r[0];
      for (int j = 1; j < out.cols; ++j) mx = std::max(mx, r[j]);
      double s = 0.0;
      for (int j = 0; j < out.cols; ++j) {
        r[j] = std::exp(r[j] - mx);
        s += r[j];
      }
      for (int j = 0; j < out.cols; ++j) r[j] /= s;
    }
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      const Mat& y = nodes_[v.id].val;
      Mat& ga = nodes_[a.id].grad;
      for (int i = 0; i < y.rows; ++i) {
        const double* yi = y.row(i);
        const double* gi = g.row(i);
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += gi[j] * yi[j];
        double* gai = ga.row(i);
        for (int j = 0; j < y.cols; ++j) gai[j] += yi[j] * (gi[j] - dot);
      }
    };
    return v;
  }

  // Row-wise layer norm with learnable gain and bias (each 1 x C).
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
    const Mat& A = val(a);
    const Mat& G = val(gain);
    const Mat& B = val(bias);
    if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols) {
      throw std::invalid_argument("layer_norm: gain/bias shape mismatch");
    }
    Mat out(A.rows, A.cols);
    Mat xhat(A.rows, A.cols);
    std::vector<double> inv_std(A.rows);
    const int C = A.cols;
    for (int i = 0; i < A.rows; ++i) {
      const double* xi = A.row(i);
      double mu = 0.0;
      for (int j = 0; j < C; ++j) mu += xi[j];
      mu /= C;
      double var = 0.0;
      for (int j = 0; j < C; ++j) var += (xi[j] - mu) * (xi[j] - mu);
      var /= C;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[i] = is;
      double* hi = xhat.row(i);
      double* oi = out.row(i);
      for (int j = 0; j < C; ++j) {
        hi[j] = (xi[j] - mu) * is;
        oi[j] = hi[j] * G.a[j] + B.a[j];
      }
    }
    Var v = push(std::move(out), rg(a) || rg(gain) || rg(bias), {a, gain, bias});
    nodes_[v.id].back = [this, v, a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Mat& g = nodes_[v.id].grad;
      const Mat& G = nodes_[gain.id].val;
      const int C = g.cols;
      if (rg(gain)) {
        Mat& gg = nodes_[gain.id].grad;
        for (int i = 0; i < g.rows; ++i) {
          const double* gi = g.row(i);
          const double* hi = xhat.row(i);
          for (int j = 0; j < C; ++j) gg.a[j] += gi[j] * hi[j];
        }
      }
      if (rg(bias)) {
        Mat& gb = nodes_[bias.id].grad;
        for (int i = 0; i < g.rows; ++i) {
          const double* gi = g.row(i);
          for (int j = 0; j < C; ++j) gb.a[j] += gi[j];
        }
      }
      if (rg(a)) {
        Mat& ga = nodes_[a.id].grad;
        for (int i = 0; i < g.rows; ++i) {
          const double* gi = g.row(i);
          const double* hi = xhat.row(i);
          double mean_dh = 0.0, mean_dhh = 0.0;
          for (int j = 0; j < C; ++j) {
            const double dh = gi[j] * G.a[j];
            mean_dh += dh;
            mean_dhh += dh * hi[j];
          }
          mean_dh /= C;
          mean_dhh /= C;
          double* gai = ga.row(i);
          for (int j = 0; j < C; ++j) {
            const double dh = gi[j] * G.a[j];
            gai[j] += (dh - mean_dh - hi[j] * mean_dhh) * inv_std[i];
          }
        }
      }
    };
    return v;
  }

  // Inverted dropout; identity in eval mode.
  Var dropout(Var a, double p) {
    if (!training_ || p <= 0.0) return a;
    if (rng_ == nullptr) throw std::logic_error("dropout: training graph needs an rng");
    const Mat& A = val(a);
    Mat mask(A.rows, A.cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 - p;
    for (auto& m : mask.a) m = (u(*rng_) < keep) ? 1.0 / keep : 0.0;
    Mat out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] *= mask.a[i];
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a, mask = std::move(mask)] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      Mat& ga = nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[i] * mask.a[i];
    };
    return v;
  }

  Var concat_cols(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.rows != B.rows) throw std::invalid_argument("concat_cols: row mismatch");
    Mat out(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      std::copy_n(A.row(i), A.cols, out.row(i));
      std::copy_n(B.row(i), B.cols, out.row(i) + A.cols);
    }
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      const int ac = nodes_[a.id].val.cols;
      if (rg(a)) {
        Mat& ga = nodes_[a.id].grad;
        for (int i = 0; i < ga.rows; ++i) {
          const double* gi = g.row(i);
          double* gai = ga.row(i);
          for (int j = 0; j < ac; ++j) gai[j] += gi[j];
        }
      }
      if (rg(b)) {
        Mat& gb = nodes_[b.id].grad;
        for (int i = 0; i < gb.rows; ++i) {
          const double* gi = g.row(i) + ac;
          double* gbi = gb.row(i);
          for (int j = 0; j < gb.cols; ++j) gbi[j] += gi[j];
        }
      }
    };
    return v;
  }

  Var concat_rows(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols != B.cols) throw std::invalid_argument("concat_rows: col mismatch");
    Mat out(A.rows + B.rows, A.cols);
    std::copy(A.a.begin(), A.a.end(), out.a.begin());
    std::copy(B.a.begin(), B.a.end(), out.a.begin() + A.a.size());
    Var v = push(std::move(out), rg(a) || rg(b), {a, b});
    nodes_[v.id].back = [this, v, a, b] {
      const Mat& g = nodes_[v.id].grad;
      const Mat& A2 = nodes_[a.id].val;
      if (rg(a)) {
        Mat& ga = nodes_[a.id].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[i];
      }
      if (rg(b)) {
        Mat& gb = nodes_[b.id].grad;
        const std::size_t off = A2.size();
        for (std::size_t i = 0; i < gb.size(); ++i) gb.a[i] += g.a[off + i];
      }
    };
    return v;
  }

  // Columns [c0, c1) of a.
  Var slice_cols(Var a, int c0, int c1) {
    const Mat& A = val(a);
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Mat out(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i) std::copy_n(A.row(i) + c0, c1 - c0, out.row(i));
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a, c0] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      Mat& ga = nodes_[a.id].grad;
      for (int i = 0; i < g.rows; ++i) {
        const double* gi = g.row(i);
        double* gai = ga.row(i) + c0;
        for (int j = 0; j < g.cols; ++j) gai[j] += gi[j];
      }
    };
    return v;
  }

  // Mean of rows [r0, r1) as a 1 x C vector.
  Var mean_rows(Var a, int r0, int r1) {
    const Mat& A = val(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw std::invalid_argument("mean_rows: bad range");
    const int n = r1 - r0;
    Mat out(1, A.cols);
    for (int i = r0; i < r1; ++i) {
      const double* ai = A.row(i);
      for (int j = 0; j < A.cols; ++j) out.a[j] += ai[j];
    }
    for (auto& x : out.a) x /= n;
    Var v = push(std::move(out), rg(a), {a});
    nodes_[v.id].back = [this, v, a, r0, r1, n] {
      if (!rg(a)) return;
      const Mat& g = nodes_[v.id].grad;
      Mat& ga = nodes_[a.id].grad;
      for (int i = r0; i < r1; ++i) {
        double* gai = ga.row(i);
        for (int j = 0; j < g.cols; ++j) gai[j] += g.a[j] / n;
      }
    };
    return v;
  }

  // Cross entropy from a 1 x N logit row: logsumexp(logits) - logits[target].
  Var ce_from_logits(Var logits, int target) {
    const Mat& L = val(logits);
    if (L.rows != 1) throw std::invalid_argument("ce_from_logits: expected a row vector");
    if (target < 0 || target >= L.cols) throw std::out_of_range("ce_from_logits: target out of range");
    double mx = L.a[0];
    for (int j = 1; j < L.cols; ++j) mx = std::max(mx, L.a[j]);
    double s = 0.0;
    for (int j = 0; j < L.cols; ++j) s += std::exp(L.a[j] - mx);
    const double lse = mx + std::log(s);
    Mat out(1, 1);
    out.a[0] = lse - L.a[target];
    Var v = push(std::move(out), rg(logits), {logits});
    nodes_[v.id].back = [this, v, logits, target, mx, s] {
      if (!rg(logits)) return;
      const double g = nodes_[v.id].grad.a[0];
      const Mat& L2 = nodes_[logits.id].val;
      Mat& gl = nodes_[logits.id].grad;
      for (int j = 0; j < L2.cols; ++j) {
        const double p = std::exp(L2.a[j] - mx) / s;
        gl.a[j] += g * (p - (j == target ? 1.0 : 0.0));
      }
    };
    return v;
  }

  // KL(N(mu, diag exp(log_var)) || N(0, I)), summed over dims, averaged
  // over rows (tokens).
  Var kl_std_normal(Var mu, Var log_var) {
    const Mat& M = val(mu);
    const Mat& V = val(log_var);
    if (!M.same_shape(V)) throw std::invalid_argument("kl_std_normal: shape mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < M.size(); ++i) {
      kl += 0.5 * (M.a[i] * M.a[i] + std::exp(V.a[i]) - V.a[i] - 1.0);
    }
    kl /= M.rows;
    Mat out(1, 1);
    out.a[0] = kl;
    Var v = push(std::move(out), rg(mu) || rg(log_var), {mu, log_var});
    nodes_[v.id].back = [this, v, mu, log_var] {
      const double g = nodes_[v.id].grad.a[0];
      const Mat& M2 = nodes_[mu.id].val;
      const Mat& V2 = nodes_[log_var.id].val;
      const double inv_rows = 1.0 / M2.rows;
      if (rg(mu)) {
        Mat& gm = nodes_[mu.id].grad;
        for (std::size_t i = 0; i < gm.size(); ++i) gm.a[i] += g * M2.a[i] * inv_rows;
      }
      if (rg(log_var)) {
        Mat& gv = nodes_[log_var.id].grad;
        for (std::size_t i = 0; i < gv.size(); ++i) {
          gv.a[i] += g * 0.5 * (std::exp(V2.a[i]) - 1.0) * inv_rows;
        }
      }
    };
    return v;
  }

  Var add_scalars(const std::vector<Var>& terms) {
    if (terms.empty()) return input(Mat::zeros(1, 1));
    Var acc_v = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc_v = add(acc_v, terms[i]);
    return acc_v;
  }

  void backward(Var loss) {
    const Mat& L = val(loss);
    if (L.rows != 1 || L.cols != 1) throw std::invalid_argument("backward: loss must be 1x1");
    for (auto& n : nodes_) {
      if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols) {
        n.grad = Mat(n.val.rows, n.val.cols);
      } else {
        n.grad.fill(0.0);
      }
    }
    nodes_[loss.id].grad.a[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      if (nodes_[id].requires_grad && nodes_[id].back) nodes_[id].back();
    }
  }

  std::size_t n_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;
    bool requires_grad = false;
  };

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw std::out_of_range("Graph: invalid Var");
    }
    return v.id;
  }

  bool rg(Var v) const { return nodes_[v.id].requires_grad; }

  static void acc(Mat& dst, const Mat& src) {
    if (dst.rows != src.rows || dst.cols != src.cols) dst = Mat(src.rows, src.cols);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.a[i] += src.a[i];
  }

  Var push(Mat v, bool requires_grad, std::initializer_list<Var> parents) {
    bool any = requires_grad;
    for (Var p : parents) any = any || nodes_[check(p)].requires_grad;
    Node n;
    n.val = std::move(v);
    n.requires_grad = any;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool training_;
  std::mt19937_64* rng_;
};

}  // namespace eaekit
