#include <cstdlib>
#include <string_view>

#include "gnasforge/kernels.hpp"

namespace gnasforge::kernels {

#if defined(GNASFORGE_WITH_AVX2)
const KernelTable* avx2_table_impl();
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_table() {
#if defined(GNASFORGE_WITH_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& choose() {
  if (const char* forced = std::getenv("GNASFORGE_KERNELS");
      forced && std::string_view(forced) == "scalar") {
    return scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = choose();
  return table;
}

}  // namespace gnasforge::kernels
