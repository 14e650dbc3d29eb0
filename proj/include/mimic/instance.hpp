#pragma once

#include <string>
#include <vector>

#include "mimic/common.hpp"

namespace mimic {

/** \brief One pairwise training example (q, d1, d2, s1, s2).
 *
 * Term lists hold vocabulary ids; out-of-vocabulary terms are already
 * dropped. The string ids let annotation files name the example.
 */
struct TrainingInstance {
  std::string query_id;
  std::string doc1_id;
  std::string doc2_id;
  std::vector<TermId> query;
  std::vector<TermId> doc1;
  std::vector<TermId> doc2;
  double s1 = 0.0;
  double s2 = 0.0;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

}  // namespace mimic
