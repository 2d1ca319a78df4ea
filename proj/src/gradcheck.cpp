#include "keyrl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "keyrl/rng.hpp"

namespace keyrl::nn {

GradCheckReport grad_check(const std::function<FnSample()>& f,
                           std::vector<std::span<double>> params,
                           std::vector<std::span<const double>> analytic,
                           const GradCheckOptions& opt) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: view count mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != analytic[i].size())
      throw std::invalid_argument("grad_check: view size mismatch");
    total += params[i].size();
  }
  if (total == 0) throw std::invalid_argument("grad_check: no parameters");

  // Flat coordinate ids, subsampled when the parameter set is large.
  std::vector<std::size_t> coords;
  if (total <= opt.max_coords) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    Rng rng(stream_seed(opt.seed, 0x67726164));
    coords.resize(opt.max_coords);
    for (std::size_t i = 0; i < opt.max_coords; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(
                  rng.uniform_int(static_cast<int>(pool.size() - i)));
      std::swap(pool[i], pool[j]);
      coords[i] = pool[i];
    }
  }

  auto locate = [&](std::size_t flat, std::size_t& view, std::size_t& off) {
    view = 0;
    while (flat >= params[view].size()) {
      flat -= params[view].size();
      ++view;
    }
    off = flat;
  };

  GradCheckReport rep;
  for (const std::size_t flat : coords) {
    std::size_t vi, off;
    locate(flat, vi, off);
    double& p = params[vi][off];
    const double saved = p;

    p = saved + opt.step;
    const FnSample hi = f();
    p = saved - opt.step;
    const FnSample lo = f();
    p = saved;

    if (!std::isfinite(hi.value) || !std::isfinite(lo.value))
      throw std::runtime_error("grad_check: objective returned non-finite value");
    if (hi.pattern != lo.pattern) {
      ++rep.skipped_nonsmooth;
      continue;
    }

    const double fd = (hi.value - lo.value) / (2.0 * opt.step);
    const double an = analytic[vi][off];
    const double denom =
        std::max({std::abs(fd), std::abs(an), opt.denom_floor});
    const double rel = std::abs(fd - an) / denom;
    ++rep.checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_view = vi;
      rep.worst_offset = off;
      rep.worst_analytic = an;
      rep.worst_numeric = fd;
    }
  }
  return rep;
}

}  // namespace keyrl::nn
