#include "grainsim/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace grainsim::kern {

const Kernels* avx2_impl();  // defined in kernels_avx2.cpp

const Kernels* avx2() {
#if defined(__x86_64__) || defined(__i386__)
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
    return nullptr;
#endif
  return avx2_impl();
}

const Kernels& get() {
  static const Kernels* active = [] {
    const char* pin = std::getenv("GRAINSIM_SIMD");
    if (pin && std::strcmp(pin, "scalar") == 0) return &scalar();
    if (const Kernels* v = avx2()) return v;
    return &scalar();
  }();
  return *active;
}

}  // namespace grainsim::kern
