#pragma once
// Central finite-difference gradient checker.
//
// f is re-evaluated with single coordinates of the parameter views nudged by
// +/-step; the symmetric difference is compared against the supplied analytic
// gradient.  f may also report a "pattern" fingerprint (e.g. a hash of ReLU /
// argmax decisions).  If the fingerprint differs between the two nudged
// evaluations, the function is not differentiable across that interval — the
// finite difference estimates nothing — so the coordinate is skipped and
// counted instead of being compared.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace keyrl::nn {

struct FnSample {
  double value = 0.0;
  std::uint64_t pattern = 0;  // 0 everywhere == "always smooth"
};

struct GradCheckOptions {
  double step = 1e-4;
  // When the parameter count exceeds this, check a random subset of this size.
  std::size_t max_coords = 1000;
  std::uint64_t seed = 0;
  // Relative-error denominator floor; keeps true-zero gradients from turning
  // finite-difference roundoff (~1e-12) into spurious relative error.
  double denom_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  std::size_t worst_view = 0;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// params are perturbed in place and restored before returning.  analytic must
// mirror params view-for-view.  Throws std::runtime_error if f returns a
// non-finite value.
GradCheckReport grad_check(const std::function<FnSample()>& f,
                           std::vector<std::span<double>> params,
                           std::vector<std::span<const double>> analytic,
                           const GradCheckOptions& opt = {});

}  // namespace keyrl::nn
