#include <cstdlib>
#include <string_view>

#include "mimic/simd/kernels.hpp"

namespace mimic::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("MIMIC_SIMD");
  if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_kernels();
  if (const auto* avx2 = avx2_kernels()) return *avx2;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace mimic::simd
