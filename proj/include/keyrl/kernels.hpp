#pragma once
// Low-level numeric kernels behind the conv / optimizer hot loops.
//
// Every kernel exists in a scalar reference form and, on x86-64, an AVX2+FMA
// form.  The active table is picked at runtime (cpuid detection, overridable
// via select_backend() or the KEYRL_KERNELS environment variable).  The two
// backends are equivalence-tested against each other; they may differ in the
// last few ulps because the vector forms reassociate reductions and use FMA.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace keyrl::kern {

// y[i] += a * x[i]
using axpy_fn = void (*)(std::size_t n, double a, const double* x, double* y);
// sum_i x[i] * y[i]
using dot_fn = double (*)(std::size_t n, const double* x, const double* y);
// sum_i x[i]
using sum_fn = double (*)(std::size_t n, const double* x);
// y[i] = max(x[i], 0)
using relu_fwd_fn = void (*)(std::size_t n, const double* x, double* y);
// gx[i] = (x[i] > 0) ? g[i] : 0
using relu_bwd_fn = void (*)(std::size_t n, const double* x, const double* g,
                             double* gx);
// In-place Adam update of p given gradient g and moment buffers m, v.
// bias1 = 1 - beta1^t and bias2 = 1 - beta2^t are precomputed by the caller.
using adam_fn = void (*)(std::size_t n, double* p, const double* g, double* m,
                         double* v, double lr, double beta1, double beta2,
                         double eps, double bias1, double bias2);
// out[i] = max(x[2i], x[2i+1]); take_odd[i] = 1 iff the odd slot strictly won.
using maxpair_fn = void (*)(std::size_t n_out, const double* x, double* out,
                            std::uint8_t* take_odd);
// out[i] = x[2i] + x[2i+1]
using pairsum_fn = void (*)(std::size_t n_out, const double* x, double* out);

struct KernelTable {
  axpy_fn axpy;
  dot_fn dot;
  sum_fn sum;
  relu_fwd_fn relu_fwd;
  relu_bwd_fn relu_bwd;
  adam_fn adam_update;
  maxpair_fn maxpair;
  pairsum_fn pairsum;
  const char* name;
};

enum class Backend { scalar, avx2 };

extern const KernelTable scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable avx2_table;  // entry points exist iff compiled on x86-64
#endif

// True when the backend can run on this machine (cpuid check for avx2).
bool backend_available(Backend b);

// Currently selected table.  The first call resolves KEYRL_KERNELS
// ("scalar" | "avx2" | "auto"); absent or "auto" picks the best available.
const KernelTable& active();
std::string_view active_name();

// Force a backend.  Throws std::runtime_error if it is not available here.
void select_backend(Backend b);
// Named form used by config plumbing; returns false on an unknown name.
bool select_backend(std::string_view name);

}  // namespace keyrl::kern
