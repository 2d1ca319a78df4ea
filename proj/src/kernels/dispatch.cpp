#include <cstdlib>
#include <stdexcept>
#include <string>

#include "keyrl/kernels.hpp"

namespace keyrl::kern {
namespace {

const KernelTable* g_active = nullptr;

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &scalar_table;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return &avx2_table;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* resolve_default() {
  if (const char* env = std::getenv("KEYRL_KERNELS")) {
    const std::string name(env);
    if (name == "scalar") return &scalar_table;
    if (name == "avx2" && backend_available(Backend::avx2))
      return table_for(Backend::avx2);
    // unknown or unavailable -> fall through to auto
  }
  if (backend_available(Backend::avx2)) return table_for(Backend::avx2);
  return &scalar_table;
}

}  // namespace

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  return cpu_has_avx2_fma() && table_for(b) != nullptr;
}

const KernelTable& active() {
  if (!g_active) g_active = resolve_default();
  return *g_active;
}

std::string_view active_name() { return active().name; }

void select_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("kernel backend not available on this machine");
  g_active = table_for(b);
}

bool select_backend(std::string_view name) {
  if (name == "auto" || name.empty()) {
    g_active = resolve_default();
    return true;
  }
  if (name == "scalar") {
    select_backend(Backend::scalar);
    return true;
  }
  if (name == "avx2") {
    select_backend(Backend::avx2);
    return true;
  }
  return false;
}

}  // namespace keyrl::kern
