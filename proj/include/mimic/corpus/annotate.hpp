#pragma once

/** \file annotate.hpp
 *  \brief Turns a query set into pairwise training instances.
 *
 * Every query gets a BM25 candidate pool; document pairs are sampled from
 * the pool without replacement and labeled by a pluggable scorer. BM25 itself
 * is the scorer for weak supervision; a teacher model or a noisy teacher
 * ensemble plugs in for distillation.
 */

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mimic/corpus/index.hpp"
#include "mimic/instance.hpp"

namespace mimic::corpus {

struct Query {
  std::string id;
  std::vector<std::string> terms;
};

using QuerySet = std::vector<Query>;

struct AnnotateOptions {
  std::size_t pool_size = 100;
  std::size_t pairs_per_query = 20;
  std::uint64_t seed = 0;
  /// Tied pairs tolerated per query before sampling gives up on it.
  /// 0 means "same as pairs_per_query".
  std::size_t max_tie_retries = 0;
  std::size_t jobs = 1;
};

struct AnnotationReport {
  std::size_t queries_total = 0;
  std::vector<std::string> skipped_queries;  ///< fewer than two candidates
  std::size_t pairs_emitted = 0;
  std::size_t pairs_discarded = 0;  ///< sampled pairs with tied labels
};

struct AnnotationResult {
  std::vector<TrainingInstance> instances;
  AnnotationReport report;
};

/// Labels every document of one query's pool. Called concurrently for
/// different queries; `query_pos` is the query's position in the set.
using PoolLabeler = std::function<std::vector<double>(
    std::size_t query_pos, std::span<const TermId> query, std::span<const ScoredDoc> pool)>;

/// Pool retrieval and pair sampling with a caller-supplied labeler. Output
/// order and content depend only on the inputs and options.seed, never on
/// options.jobs.
AnnotationResult annotate_with_labeler(const InvertedIndex& index, const QuerySet& queries,
                                       const AnnotateOptions& options, const PoolLabeler& labeler);

/// Weak supervision: labels are the BM25 scores of the pool.
AnnotationResult annotate_queries(const InvertedIndex& index, const QuerySet& queries,
                                  const AnnotateOptions& options);

/// Unordered index pairs (a, b), a < b, sampled uniformly without replacement
/// from a pool of `pool_size`, skipping pairs with equal labels. Stops after
/// `wanted` pairs, on the first tied draw beyond `max_ties`, or when the pool is exhausted.
struct PairSample {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t discarded = 0;
};
PairSample sample_pairs(std::span<const double> labels, std::size_t wanted, std::size_t max_ties,
                        Rng& rng);

}  // namespace mimic::corpus
