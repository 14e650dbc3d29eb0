#pragma once

/** \file gradcheck.hpp
 *  \brief Central finite-difference verification of analytic gradients.
 *
 * The loss callback must be deterministic (dropout off) and must read the
 * current parameter values, which the checker perturbs in place and restores.
 *
 * Relative error per coordinate is |analytic - numeric| / max(|analytic|,
 * |numeric|, denominator_floor). The floor keeps coordinates whose true
 * gradient is ~0 from turning round-off noise into large ratios.
 *
 * Piecewise-linear losses (ReLU, hinge) are not differentiable at their
 * kinks. When a `kink_signature` callback is supplied, it should fingerprint
 * the active pieces (ReLU on/off pattern, hinge active set); a coordinate
 * whose +h or -h evaluation lands on a different piece is skipped and counted
 * instead of compared.
 */

#include <cstdint>
#include <functional>
#include <span>

namespace mimic::nn {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  double denominator_floor = 1e-6;
  /// Coordinates sampled per block; 0 checks every coordinate.
  std::size_t coords_per_block = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t worst_block = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;  ///< max_rel_error < tolerance
};

GradCheckReport finite_difference_check(const std::function<double()>& loss,
                                        std::span<const std::span<double>> params,
                                        std::span<const std::span<const double>> analytic,
                                        const GradCheckOptions& options,
                                        const std::function<std::uint64_t()>& kink_signature = {});

}  // namespace mimic::nn
