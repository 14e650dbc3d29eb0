#pragma once

/** \file pipeline.hpp
 *  \brief End-to-end runs: index, teacher(s), student, TREC runs and a metric table.
 *
 * A run directory holds everything one invocation produced:
 *
 *     manifest.json        config, config hash, seeds, version, kernel ISA, artifact hashes
 *     index.bin            inverted index
 *     weak.tsv             BM25-labeled teacher pairs (or supervised.tsv from qrels)
 *     teacher.ckpt         single teacher (supervised, weak, distill)
 *     shards/shard_<i>.tsv teacher shards (pate); safe to delete after training
 *     ensemble/            teacher_<i>.ckpt + manifest.json (pate)
 *     soft.tsv             teacher-labeled public pairs
 *     student.ckpt
 *     runs/<model>.run     TREC run per evaluated model
 *     metrics/<model>.tsv  per-query metrics per model
 *     metrics.txt          table plus notes; metrics.tsv the same table as TSV
 *     FAILED               present only when the invocation failed
 *
 * Student stages read only index.bin, teacher.ckpt or ensemble/, and the
 * public query file. Qrels are read by the final evaluation and, for a
 * supervised teacher, by teacher training.
 */

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mimic/corpus/annotate.hpp"
#include "mimic/eval/metrics.hpp"
#include "mimic/pipeline/config.hpp"

namespace mimic::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

struct MetricRow {
  std::string label;  ///< table text, e.g. "Noisy aggregated teacher"
  std::string slug;   ///< file stem under runs/ and metrics/
  eval::MetricReport report;
  std::optional<double> agreement;  ///< pairwise agreement with the reference teacher
};

struct MetricTable {
  std::size_t k = 20;
  std::vector<MetricRow> rows;
  std::vector<std::string> notes;

  const MetricRow* find(std::string_view slug) const;
};

std::string format_table(const MetricTable& table);
std::string format_table_tsv(const MetricTable& table);

/// Per-query AP, P@k and nDCG@k followed by an "all" line with the means.
std::string format_query_metrics(const eval::MetricReport& report);

/// Re-ranks each query's BM25 top `depth` by `labeler`: descending score,
/// ties by ascending doc id.
eval::RunList rerank_run(const corpus::InvertedIndex& index, const corpus::QuerySet& queries,
                         const corpus::PoolLabeler& labeler, std::size_t depth, std::size_t jobs = 1);

struct PipelineRequest {
  Mode mode = Mode::kWeak;
  Stage stage = Stage::kAll;
  std::filesystem::path out;
};

struct PipelineOutcome {
  MetricTable table;
  std::filesystem::path run_dir;
};

/// Validates, then runs the requested mode. On failure, leaves a FAILED
/// marker with the error text next to whatever was already written, and
/// rethrows.
PipelineOutcome run_pipeline(const RunConfig& config, const PipelineRequest& request);

}  // namespace mimic::pipeline
