// Reference kernels. Compiled with -ffp-contract=off.
#include <cmath>

#include "mimic/simd/kernels.hpp"

namespace mimic::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void adam_scalar(double* param, double* m, double* v, const double* grad, std::size_t n,
                 const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] = param[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::kScalar, &dot_scalar, &axpy_scalar, &adam_scalar};
  return table;
}

}  // namespace mimic::simd
