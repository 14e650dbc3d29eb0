#pragma once

/** \file distill.hpp
 *  \brief Mimic learning: a trained teacher labels unlabeled queries and a
 *         student ranker is trained on those labels alone.
 *
 * Candidate documents for an unlabeled query come from a BM25 recall pool.
 * The teacher scores every pooled document; sampled pairs carry the teacher
 * scores as (s1, s2), so the pairwise hinge applies unchanged. Nothing on
 * this path takes relevance judgments.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mimic/corpus/annotate.hpp"
#include "mimic/rank/model.hpp"

namespace mimic::distill {

struct AnnotationJob {
  const rank::RankModelParams* teacher = nullptr;
  const corpus::QuerySet* queries = nullptr;
  std::size_t pool_size = 100;
  std::size_t pairs_per_query = 20;
  std::uint64_t seed = 0;
  std::size_t max_tie_retries = 0;
  std::size_t jobs = 1;
};

/// Labels each pooled document with the model's pointwise score.
corpus::PoolLabeler model_labeler(const rank::RankModelParams& model, const corpus::InvertedIndex& index);

/// Pairs labeled with teacher scores; tied teacher scores are discarded and
/// counted in the report.
corpus::AnnotationResult teacher_annotate(const AnnotationJob& job, const corpus::InvertedIndex& index);

struct Fidelity {
  double agreement = 0.0;      ///< fraction of compared pairs ordered alike
  std::size_t compared = 0;    ///< pairs the reference does not tie
  std::size_t reference_ties = 0;
};

/** \brief Exhaustive pairwise agreement over each query's BM25 pool.
 *
 * Every unordered pool pair is scored by both labelers. Pairs the reference
 * ties are excluded; a candidate tie on a compared pair counts as a
 * disagreement.
 */
Fidelity pairwise_agreement(const corpus::InvertedIndex& index, const corpus::QuerySet& queries,
                            std::size_t pool_size, const corpus::PoolLabeler& reference,
                            const corpus::PoolLabeler& candidate, std::size_t jobs = 1);

struct DistillOptions {
  std::size_t epochs = 10;
  /// Student init and training seed.
  std::uint64_t seed = 0;
  /// Pool, pair count and sampling seed for annotating the unlabeled set.
  corpus::AnnotateOptions annotate;
  std::optional<std::filesystem::path> embedding_file;
  /// Queries for the fidelity report; no report when null.
  const corpus::QuerySet* heldout = nullptr;
};

struct DistillResult {
  rank::RankModelParams student;
  rank::TrainResult training;
  corpus::AnnotationReport annotation;
  std::vector<TrainingInstance> soft_labels;
  std::optional<Fidelity> fidelity;  ///< student vs labeler on the held-out pools
};

/// Annotates `unlabeled` with `labeler`, then fits a student on the result.
/// The fidelity report compares the student against `fidelity_reference`
/// (the labeler itself when empty).
DistillResult distill_with_labeler(const corpus::PoolLabeler& labeler,
                                   const rank::RankModelConfig& student_config,
                                   const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                                   const DistillOptions& options,
                                   const corpus::PoolLabeler& fidelity_reference = {});

/// Teacher annotation followed by student training.
DistillResult distill(const rank::RankCheckpoint& teacher, const rank::RankModelConfig& student_config,
                      const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                      const DistillOptions& options);

}  // namespace mimic::distill
