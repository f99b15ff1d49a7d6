#include "harmonia/tensor.hpp"

#include <cassert>
#include <cmath>

namespace harmonia {

bool all_finite(const Tensor& t) {
  for (double x : t.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void matvec(const Tensor& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_add(const Tensor& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

void matvec_t_add(const Tensor& w, const double* g, double* dx) {
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    const double gr = g[r];
#pragma omp simd
    for (int c = 0; c < w.cols; ++c) dx[c] += wr[c] * gr;
  }
}

void outer_add(Tensor& grad, const double* g, const double* x, int m, int n) {
  assert(grad.rows == m && grad.cols == n);
  for (int r = 0; r < m; ++r) {
    double* gr = grad.row(r);
    const double gv = g[r];
#pragma omp simd
    for (int c = 0; c < n; ++c) gr[c] += gv * x[c];
  }
}

void matmul(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.rows);
  c = Tensor(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double av = ai[k];
      const double* bk = b.row(k);
#pragma omp simd
      for (int j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.cols);
  c = Tensor(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
}

void matmul_tn_add(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.rows == b.rows && a.cols == c.rows && b.cols == c.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double av = ak[i];
      double* ci = c.row(i);
#pragma omp simd
      for (int j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_add(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double av = ai[k];
      const double* bk = b.row(k);
#pragma omp simd
      for (int j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_nt_add(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] += acc;
    }
  }
}

void axpy(double s, const Tensor& x, Tensor& y) {
  assert(x.size() == y.size());
  const double* xp = x.data();
  double* yp = y.data();
  const std::size_t n = x.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) yp[i] += s * xp[i];
}

}  // namespace harmonia
