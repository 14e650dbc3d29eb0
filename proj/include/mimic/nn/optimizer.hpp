#pragma once

/** \file optimizer.hpp
 *  \brief Adaptive-moment (Adam) optimizer over a list of parameter blocks.
 */

#include <cstdint>
#include <span>
#include <vector>

namespace mimic::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators shaped like the parameter blocks.
class OptimizerState {
 public:
  OptimizerState(AdamConfig config, std::span<const std::size_t> block_sizes);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  std::size_t block_count() const { return m_.size(); }
  std::span<const double> first_moment(std::size_t block) const { return m_.at(block); }
  std::span<const double> second_moment(std::size_t block) const { return v_.at(block); }

 private:
  friend void optimizer_step(std::span<const std::span<double>> params,
                             std::span<const std::span<const double>> grads, OptimizerState& state);

  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/** \brief One bias-corrected Adam update of every block.
 *
 * Throws InvalidArgument on a shape mismatch and NumericError (naming block
 * and coordinate) on a non-finite gradient; in both cases nothing is updated.
 */
void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state);

}  // namespace mimic::nn
