#include "mimic/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mimic/common.hpp"

namespace mimic::nn {

GradCheckReport finite_difference_check(const std::function<double()>& loss,
                                        std::span<const std::span<double>> params,
                                        std::span<const std::span<const double>> analytic,
                                        const GradCheckOptions& options,
                                        const std::function<std::uint64_t()>& kink_signature) {
  if (params.size() != analytic.size()) {
    throw InvalidArgument("finite_difference_check: parameter and gradient block counts differ");
  }
  GradCheckReport report;
  Rng rng(options.seed);
  const std::uint64_t base_signature = kink_signature ? kink_signature() : 0;

  for (std::size_t b = 0; b < params.size(); ++b) {
    auto block = params[b];
    if (block.size() != analytic[b].size()) {
      throw InvalidArgument("finite_difference_check: block " + std::to_string(b) + " shape mismatch");
    }
    std::vector<std::size_t> coords(block.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coords_per_block != 0 && options.coords_per_block < coords.size()) {
      rng.shuffle(std::span(coords));
      coords.resize(options.coords_per_block);
    }
    for (const auto i : coords) {
      const double saved = block[i];
      block[i] = saved + options.h;
      const double plus = loss();
      const bool plus_same = !kink_signature || kink_signature() == base_signature;
      block[i] = saved - options.h;
      const double minus = loss();
      const bool minus_same = !kink_signature || kink_signature() == base_signature;
      block[i] = saved;
      if (!plus_same || !minus_same) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.h);
      const double a = analytic[b][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_block = b;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace mimic::nn
