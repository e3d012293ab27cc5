#pragma once

// Dense row-major double matrix plus the handful of kernels the autograd
// graph is built on. CPU only, single thread.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace eaekit {

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  static Mat zeros(int r, int c) { return Mat(r, c); }

  static Mat constant(int r, int c, double v) {
    Mat m(r, c);
    std::fill(m.a.begin(), m.a.end(), v);
    return m;
  }

  static Mat randn(int r, int c, double stddev, std::mt19937_64& rng) {
    Mat m(r, c);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : m.a) x = dist(rng);
    return m;
  }

  double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  std::size_t size() const { return a.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }

  bool all_finite() const {
    for (double x : a) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  double sum() const {
    double s = 0.0;
    for (double x : a) s += x;
    return s;
  }

  double sq_norm() const {
    double s = 0.0;
    for (double x : a) s += x * x;
    return s;
  }
};

inline void require_shape(const Mat& m, int r, int c, const char* what) {
  if (m.rows != r || m.cols != c) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols));
  }
}

// C += A * B
inline void matmul_acc(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols) {
    throw std::invalid_argument("matmul_acc: dimension mismatch");
  }
  const int n = A.rows, k = A.cols, m = B.cols;
  for (int i = 0; i < n; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = B.row(p);
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C += A * B^T
inline void matmul_nt_acc(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols != B.cols || C.rows != A.rows || C.cols != B.rows) {
    throw std::invalid_argument("matmul_nt_acc: dimension mismatch");
  }
  const int n = A.rows, k = A.cols, m = B.rows;
  for (int i = 0; i < n; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (int j = 0; j < m; ++j) {
      const double* bj = B.row(j);
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// C += A^T * B
inline void matmul_tn_acc(const Mat& A, const Mat& B, Mat& C) {
  if (A.rows != B.rows || C.rows != A.cols || C.cols != B.cols) {
    throw std::invalid_argument("matmul_tn_acc: dimension mismatch");
  }
  const int n = A.cols, k = A.rows, m = B.cols;
  for (int p = 0; p < k; ++p) {
    const double* ap = A.row(p);
    const double* bp = B.row(p);
    for (int i = 0; i < n; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = C.row(i);
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace eaekit
