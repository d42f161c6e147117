#include "nvsim/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace nvsim::kernels {

#if defined(__x86_64__)
bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable& active() {
  static const KernelTable* table = [] {
    const char* env = std::getenv("NVSIM_KERNELS");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_table();
#if defined(__x86_64__)
    if (env && std::strcmp(env, "avx2") == 0) return &avx2_table();
    if (avx2_supported()) return &avx2_table();
#endif
    return &scalar_table();
  }();
  return *table;
}

}  // namespace nvsim::kernels
