#include <cstdlib>
#include <string_view>

#include "apn/kernels.hpp"

namespace apn::kernels {

#if defined(APN_HAVE_AVX2)
namespace detail {
const KernelTable& avx2_table_unchecked();
}
#endif

const KernelTable* avx2_table() {
#if defined(APN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &detail::avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = []() -> const KernelTable& {
    const char* env = std::getenv("APN_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* simd = avx2_table()) return *simd;
    return scalar_table();
  }();
  return chosen;
}

}  // namespace apn::kernels
