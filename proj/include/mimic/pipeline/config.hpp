#pragma once

/** \file config.hpp
 *  \brief Run configuration: a flat `section.key = value` text file.
 *
 * Blank lines and text after `#` are ignored. Unknown keys are rejected so a
 * typo cannot silently fall back to a default. Relative paths resolve against
 * the directory holding the config file.
 *
 *     paths.corpus = corpus.jsonl
 *     teacher.hidden_size = 512
 *     run.seed = 42
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mimic/pate/pate.hpp"
#include "mimic/rank/model.hpp"

namespace mimic::pipeline {

enum class Mode { kSupervised, kWeak, kDistill, kPate };

/// Which part of a staged mode to run. Teacher covers the pate ensemble too.
enum class Stage { kAll, kTeacher, kStudent };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);
Stage parse_stage(std::string_view name);
std::string_view stage_name(Stage stage);

enum class Supervision { kWeak, kSupervised };

struct ModelSection {
  rank::RankModelConfig model;
  std::size_t epochs = 10;
};

struct RunConfig {
  struct Paths {
    std::filesystem::path corpus;
    std::filesystem::path train_queries;      ///< teacher side (sensitive)
    std::filesystem::path train_qrels;        ///< only for supervised teachers
    std::filesystem::path unlabeled_queries;  ///< student side (public)
    std::filesystem::path eval_queries;
    std::filesystem::path eval_qrels;
    std::filesystem::path embeddings;         ///< optional word vectors
  } paths;

  ModelSection teacher{rank::RankModelConfig::teacher(), 10};
  ModelSection student{rank::RankModelConfig::student(), 10};
  Supervision supervision = Supervision::kWeak;

  std::size_t pool_size = 100;
  std::size_t pairs_per_query = 20;
  std::size_t max_tie_retries = 0;

  std::size_t n_partitions = 3;
  double noise_scale = 0.05;

  std::size_t rerank_depth = 100;
  std::size_t metric_k = 20;
  bool skip_empty = false;

  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  std::optional<std::filesystem::path> embedding_file() const;
};

/// Throws InvalidArgument naming the line on a syntax error, unknown key or bad value.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig read_config(const std::filesystem::path& path);

/// Every key with its effective value, one per line in a fixed order.
/// Paths are written as given after resolution.
std::string canonical_config(const RunConfig& config);

/** \brief Checks what a stage needs before any work starts.
 *
 * The seed must be set, model sections must be valid, and every input file
 * the stage reads must exist (IoError with the path otherwise). Student
 * stages never require training queries or qrels.
 */
void validate_for(const RunConfig& config, Mode mode, Stage stage);

/// Component seeds, each a fixed offset from the master seed.
struct SeedPlan {
  std::uint64_t master = 0;
  std::uint64_t weak_annotation = 0;  ///< master + 1
  std::uint64_t partition = 0;        ///< master + 2
  std::uint64_t soft_annotation = 0;  ///< master + 3
  std::uint64_t label_noise = 0;      ///< master + 4
  std::uint64_t student = 0;          ///< master + 5
  std::uint64_t eval_noise = 0;       ///< master + 6
  std::uint64_t teacher = 0;          ///< master + 100; ensemble member i adds i

  static SeedPlan from_master(std::uint64_t master);
};

}  // namespace mimic::pipeline
