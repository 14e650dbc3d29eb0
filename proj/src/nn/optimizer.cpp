#include "mimic/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "mimic/common.hpp"
#include "mimic/simd/kernels.hpp"

namespace mimic::nn {

OptimizerState::OptimizerState(AdamConfig config, std::span<const std::size_t> block_sizes)
    : config_(config) {
  for (const auto n : block_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw InvalidArgument("optimizer_step: " + std::to_string(params.size()) + " parameter blocks, " +
                          std::to_string(grads.size()) + " gradient blocks, state for " +
                          std::to_string(state.m_.size()));
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.m_[b].size()) {
      throw InvalidArgument("optimizer_step: block " + std::to_string(b) + " shape mismatch");
    }
    for (std::size_t i = 0; i < grads[b].size(); ++i) {
      if (!std::isfinite(grads[b][i])) {
        throw NumericError("non-finite gradient in block " + std::to_string(b) + " at index " +
                           std::to_string(i));
      }
    }
  }

  ++state.step_;
  const auto& cfg = state.config_;
  const double t = static_cast<double>(state.step_);
  const simd::AdamCoeffs c{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon,
                           1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};
  const auto& k = simd::active_kernels();
  for (std::size_t b = 0; b < params.size(); ++b) {
    k.adam_update(params[b].data(), state.m_[b].data(), state.v_[b].data(), grads[b].data(),
                  params[b].size(), c);
  }
}

}  // namespace mimic::nn
