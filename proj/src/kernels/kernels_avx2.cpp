// AVX2 + FMA kernels (x86-64 only).  This translation unit is compiled with
// -mavx2 -mfma; nothing here runs unless cpuid reported both features, which
// dispatch.cpp checks before handing out this table.
//
// Shape of every kernel: a 4-wide (__m256d) main loop plus a scalar remainder
// loop with identical per-element semantics.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "keyrl/kernels.hpp"

namespace keyrl::kern {
namespace {

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

void relu_fwd_avx2(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_avx2(std::size_t n, const double* x, const double* g,
                   double* gx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(gx + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void adam_avx2(std::size_t n, double* p, const double* g, double* m, double* v,
               double lr, double beta1, double beta2, double eps, double bias1,
               double bias2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vc1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vc2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vib1 = _mm256_set1_pd(1.0 / bias1);
  const __m256d vib2 = _mm256_set1_pd(1.0 / bias2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i),
                                 _mm256_mul_pd(vc1, vg));
    __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                 _mm256_mul_pd(vc2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(vm, vib1);
    const __m256d vhat = _mm256_mul_pd(vv, vib2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] * (1.0 / bias1)) / (std::sqrt(v[i] * (1.0 / bias2)) + eps);
  }
}

void maxpair_avx2(std::size_t n_out, const double* x, double* out,
                  std::uint8_t* take_odd) {
  std::size_t i = 0;
  for (; i + 4 <= n_out; i += 4) {
    // x[2i..2i+7] -> evens [a0 a2 a4 a6], odds [a1 a3 a5 a7]
    const __m256d v1 = _mm256_permute4x64_pd(_mm256_loadu_pd(x + 2 * i),
                                             _MM_SHUFFLE(3, 1, 2, 0));
    const __m256d v2 = _mm256_permute4x64_pd(_mm256_loadu_pd(x + 2 * i + 4),
                                             _MM_SHUFFLE(3, 1, 2, 0));
    const __m256d evens = _mm256_permute2f128_pd(v1, v2, 0x20);
    const __m256d odds = _mm256_permute2f128_pd(v1, v2, 0x31);
    _mm256_storeu_pd(out + i, _mm256_max_pd(evens, odds));
    const int mask =
        _mm256_movemask_pd(_mm256_cmp_pd(odds, evens, _CMP_GT_OQ));
    take_odd[i + 0] = (mask >> 0) & 1;
    take_odd[i + 1] = (mask >> 1) & 1;
    take_odd[i + 2] = (mask >> 2) & 1;
    take_odd[i + 3] = (mask >> 3) & 1;
  }
  for (; i < n_out; ++i) {
    const double a = x[2 * i], b = x[2 * i + 1];
    const bool odd = b > a;
    out[i] = odd ? b : a;
    take_odd[i] = odd ? 1 : 0;
  }
}

void pairsum_avx2(std::size_t n_out, const double* x, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n_out; i += 4) {
    const __m256d v1 = _mm256_permute4x64_pd(_mm256_loadu_pd(x + 2 * i),
                                             _MM_SHUFFLE(3, 1, 2, 0));
    const __m256d v2 = _mm256_permute4x64_pd(_mm256_loadu_pd(x + 2 * i + 4),
                                             _MM_SHUFFLE(3, 1, 2, 0));
    const __m256d evens = _mm256_permute2f128_pd(v1, v2, 0x20);
    const __m256d odds = _mm256_permute2f128_pd(v1, v2, 0x31);
    _mm256_storeu_pd(out + i, _mm256_add_pd(evens, odds));
  }
  for (; i < n_out; ++i) out[i] = x[2 * i] + x[2 * i + 1];
}

}  // namespace

const KernelTable avx2_table = {
    axpy_avx2, dot_avx2,  sum_avx2,      relu_fwd_avx2,
    relu_bwd_avx2, adam_avx2, maxpair_avx2, pairsum_avx2,
    "avx2",
};

}  // namespace keyrl::kern

#endif  // x86-64
