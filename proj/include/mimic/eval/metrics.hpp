#pragma once

/** \file metrics.hpp
 *  \brief TREC-style MAP, P@k and nDCG@k over run files and relevance judgments.
 *
 * Conventions follow trec_eval: a grade >= 1 counts as relevant, P@k divides
 * by k even for shorter runs, and nDCG uses the raw grade as gain with a
 * log2(rank + 1) discount. A query without relevant documents scores 0 on
 * every metric.
 */

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mimic::eval {

/// doc_id -> grade for one query.
using Judgments = std::unordered_map<std::string, int>;

/// query_id -> judgments; ordered for deterministic reports.
using Qrels = std::map<std::string, Judgments>;

struct RunEntry {
  std::string doc_id;
  double score;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// query_id -> ranked entries, best first.
using RunList = std::map<std::string, std::vector<RunEntry>>;

double average_precision(std::span<const std::string> ranked, const Judgments& judgments);
double precision_at_k(std::span<const std::string> ranked, const Judgments& judgments, std::size_t k = 20);
double ndcg_at_k(std::span<const std::string> ranked, const Judgments& judgments, std::size_t k = 20);

struct QueryMetrics {
  std::string query_id;
  double ap = 0.0;
  double p_at_k = 0.0;
  double ndcg_at_k = 0.0;
};

struct MetricReport {
  std::vector<QueryMetrics> per_query;
  double map = 0.0;
  double p_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t query_count = 0;
  std::vector<std::string> warnings;
};

struct EvalOptions {
  std::size_t k = 20;
  /// Leave queries with no relevant judgments out of the means.
  bool skip_empty = false;
};

/// Evaluates queries present in both run and qrels. Run queries without
/// judgments are ignored and reported in warnings.
MetricReport evaluate(const RunList& run, const Qrels& qrels, const EvalOptions& options = {});

/// `query_id 0 doc_id grade`, whitespace separated. Throws IoError with the
/// line number on malformed input, negative grades or repeated pairs.
Qrels parse_qrels(std::string_view text);
Qrels read_qrels(const std::filesystem::path& path);
std::string format_qrels(const Qrels& qrels);

/// `query_id Q0 doc_id rank score tag`. Within a query, ranks must be
/// distinct positive integers and scores non-increasing in rank order;
/// doc ids must not repeat.
RunList parse_run(std::string_view text);
RunList read_run(const std::filesystem::path& path);
std::string format_run(const RunList& run, std::string_view tag);

MetricReport evaluate_run(const std::filesystem::path& run_file, const std::filesystem::path& qrels_file,
                          const EvalOptions& options = {});

}  // namespace mimic::eval
