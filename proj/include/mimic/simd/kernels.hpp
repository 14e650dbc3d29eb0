#pragma once

/** \file kernels.hpp
 *  \brief Dense float64 inner loops with a scalar reference and an AVX2 variant.
 *
 * The variant is chosen once at first use: AVX2 when the CPU reports it,
 * scalar otherwise. `MIMIC_SIMD=scalar` in the environment forces the
 * reference path. The scalar table is always available so tests can compare
 * the two directly.
 *
 * `axpy` and `adam_update` are bit-identical across variants (same operation
 * order, no fused multiply-add). `dot` reassociates the sum and may differ in
 * the last bits.
 */

#include <cstddef>
#include <span>
#include <string_view>

namespace mimic::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Per-step constants for the adaptive-moment update.
struct AdamCoeffs {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  ///< 1 - beta1^t
  double bias_correction2;  ///< 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*adam_update)(double* param, double* m, double* v, const double* grad, std::size_t n,
                      const AdamCoeffs& c);
};

const KernelTable& scalar_kernels();
/// nullptr when the binary or the CPU lacks AVX2.
const KernelTable* avx2_kernels();
/// The runtime-selected table.
const KernelTable& active_kernels();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace mimic::simd
