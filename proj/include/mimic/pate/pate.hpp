#pragma once

/** \file pate.hpp
 *  \brief Private aggregation of a teacher ensemble.
 *
 * Sensitive training instances are split into disjoint shards, one teacher
 * is trained per shard, and the student only ever sees the noisy mean of
 * the teachers' scores: each teacher's score receives its own Laplace draw
 * before averaging. The student path takes the ensemble and public queries;
 * it has no parameter through which shard data could reach it.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mimic/corpus/annotate.hpp"
#include "mimic/distill/distill.hpp"
#include "mimic/rank/model.hpp"

namespace mimic::pate {

struct PrivacyConfig {
  std::size_t n_partitions = 3;
  /// Laplace scale b; 0 disables noise.
  double noise_scale = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Disjoint shards whose multiset union is the input.
using Partition = std::vector<std::vector<TrainingInstance>>;

/** \brief Seeded shuffle, then round-robin assignment to n shards.
 *
 * Shard sizes differ by at most one. Each shard keeps its members in their
 * original input order, so n = 1 returns the input unchanged. Throws
 * InvalidArgument when n is 0 or exceeds the instance count.
 */
Partition partition_data(std::span<const TrainingInstance> instances, std::size_t n, std::uint64_t seed);

struct TeacherEnsemble {
  rank::RankModelConfig config;
  std::vector<rank::RankModelParams> teachers;
  PrivacyConfig privacy;
  std::vector<std::uint64_t> seeds;        ///< fit seed of each teacher
  std::vector<std::string> shard_hashes;   ///< FNV-1a of each shard's annotation text
};

/// Teacher i is fit on shard i with seed base_seed + i. Teachers train in
/// parallel up to `jobs`; the result does not depend on `jobs`.
TeacherEnsemble train_teachers(const Partition& partition, const rank::RankModelConfig& config,
                               const corpus::InvertedIndex& index, std::size_t epochs,
                               std::uint64_t base_seed, const PrivacyConfig& privacy,
                               const std::optional<std::filesystem::path>& embedding_file = std::nullopt,
                               std::size_t jobs = 1);

/// Inverse-CDF Laplace draw: -scale * sgn(u) * ln(1 - 2|u|) for u in
/// (-0.5, 0.5). Returns 0 when scale is 0.
double laplace_sample(double scale, double u);

/// Sequential Laplace noise source.
class NoiseStream {
 public:
  NoiseStream(double scale, std::uint64_t seed) : scale_(scale), rng_(seed) {}
  double next() { return laplace_sample(scale_, rng_.uniform_open() - 0.5); }
  double scale() const { return scale_; }

 private:
  double scale_;
  Rng rng_;
};

/// (1/n) * sum_i (score_i(q, d) + noise_i), summed left to right over teachers.
double noisy_aggregate(const TeacherEnsemble& ensemble, std::span<const TermId> query,
                       std::span<const TermId> doc, NoiseStream& noise);

/// Pool labeler built on noisy_aggregate. Query k draws its noise from a
/// stream seeded by derive_seed(noise_seed, k), documents in pool order, so
/// labels do not depend on how queries are spread over workers.
corpus::PoolLabeler aggregate_labeler(const TeacherEnsemble& ensemble, const corpus::InvertedIndex& index,
                                      double noise_scale, std::uint64_t noise_seed);

/// Plain mean of teacher scores in the same summation order, for reference.
corpus::PoolLabeler mean_labeler(const TeacherEnsemble& ensemble, const corpus::InvertedIndex& index);

struct PateResult {
  distill::DistillResult student;
};

/// Distillation whose labeler is the noisy aggregate (noise from
/// ensemble.privacy). Fidelity is measured against the noise-free mean.
PateResult pate_distill(const TeacherEnsemble& ensemble, const rank::RankModelConfig& student_config,
                        const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                        const distill::DistillOptions& options);

/// Directory with teacher_<i>.ckpt files and manifest.json (n, noise_scale,
/// privacy seed, teacher seeds, shard hashes).
void save_ensemble(const std::filesystem::path& dir, const TeacherEnsemble& ensemble);
TeacherEnsemble load_ensemble(const std::filesystem::path& dir);

}  // namespace mimic::pate
