#pragma once

#include <cstddef>
#include <vector>

namespace harmonia {

// Dense row-major matrix of doubles. Row vectors are 1 x d tensors. All
// model math runs in 64-bit so finite-difference gradient checks hold at
// tight tolerances.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(std::size_t(r) * c, 0.0) {}

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double* row(int r) { return v.data() + std::size_t(r) * cols; }
  const double* row(int r) const { return v.data() + std::size_t(r) * cols; }

  double& at(int r, int c) { return v[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[std::size_t(r) * cols + c]; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

bool all_finite(const Tensor& t);

// Kernels. Outputs never alias inputs. Inner loops carry `omp simd` hints;
// threading happens one level up, across batch samples, so results do not
// depend on the thread count.

// y[r] = W.row(r) . x          (W: m x n, x: n, y: m)
void matvec(const Tensor& w, const double* x, double* y);
// y[r] += W.row(r) . x
void matvec_add(const Tensor& w, const double* x, double* y);
// dx[c] += sum_r W[r,c] * g[r]
void matvec_t_add(const Tensor& w, const double* g, double* dx);
// G += g (outer) x             (G: m x n, g: m, x: n)
void outer_add(Tensor& grad, const double* g, const double* x, int m, int n);

// C = A * B                    (A: m x k, B: k x n)
void matmul(const Tensor& a, const Tensor& b, Tensor& c);
// C = A * B^T                  (A: m x k, B: n x k)
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c);
// C += A^T * B                 (A: k x m, B: k x n, C: m x n)
void matmul_tn_add(const Tensor& a, const Tensor& b, Tensor& c);
// C += A * B
void matmul_add(const Tensor& a, const Tensor& b, Tensor& c);
// C += A * B^T
void matmul_nt_add(const Tensor& a, const Tensor& b, Tensor& c);

void axpy(double s, const Tensor& x, Tensor& y);  // y += s * x

}  // namespace harmonia
