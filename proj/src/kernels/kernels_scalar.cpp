// Scalar reference kernels.  These define the semantics; the vector backends
// must agree with them up to floating-point reassociation.

#include <cmath>

#include "keyrl/kernels.hpp"

namespace keyrl::kern {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_scalar(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void relu_fwd_scalar(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_scalar(std::size_t n, const double* x, const double* g,
                     double* gx) {
  for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void adam_scalar(std::size_t n, double* p, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void maxpair_scalar(std::size_t n_out, const double* x, double* out,
                    std::uint8_t* take_odd) {
  for (std::size_t i = 0; i < n_out; ++i) {
    const double a = x[2 * i], b = x[2 * i + 1];
    const bool odd = b > a;  // tie goes to the even (lower) slot
    out[i] = odd ? b : a;
    take_odd[i] = odd ? 1 : 0;
  }
}

void pairsum_scalar(std::size_t n_out, const double* x, double* out) {
  for (std::size_t i = 0; i < n_out; ++i) out[i] = x[2 * i] + x[2 * i + 1];
}

}  // namespace

const KernelTable scalar_table = {
    axpy_scalar, dot_scalar,  sum_scalar,      relu_fwd_scalar,
    relu_bwd_scalar, adam_scalar, maxpair_scalar, pairsum_scalar,
    "scalar",
};

}  // namespace keyrl::kern
