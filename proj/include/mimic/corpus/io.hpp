#pragma once

/** \file io.hpp
 *  \brief Text formats for corpora, query sets and pairwise annotations.
 *
 *  - corpus:      one JSON object per line, `{"id": "...", "text": "..."}`
 *  - queries:     `query_id<TAB>query text`
 *  - annotations: `query_id<TAB>doc_id1<TAB>doc_id2<TAB>s1<TAB>s2`, scores
 *                 with six decimals
 *
 * Parse errors throw IoError with the 1-based line number.
 */

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mimic/corpus/annotate.hpp"
#include "mimic/corpus/index.hpp"

namespace mimic::corpus {

std::vector<Document> parse_corpus_jsonl(std::string_view text);
std::vector<Document> read_corpus(const std::filesystem::path& path);

/// Tokenizes query text; rejects duplicate ids.
QuerySet parse_queries_tsv(std::string_view text);
QuerySet read_queries(const std::filesystem::path& path);
std::string format_queries_tsv(std::span<const std::pair<std::string, std::string>> id_and_text);

std::string format_annotations(std::span<const TrainingInstance> instances);

struct LoadedAnnotations {
  std::vector<TrainingInstance> instances;
  /// Lines whose six-decimal labels tie; they carry no pairwise signal.
  std::size_t dropped_ties = 0;
};

/// Resolves ids against the query set and index; unknown ids are errors.
LoadedAnnotations parse_annotations(std::string_view text, const QuerySet& queries,
                                    const InvertedIndex& index);

InvertedIndex read_index(const std::filesystem::path& path);
void write_index(const std::filesystem::path& path, const InvertedIndex& index);

}  // namespace mimic::corpus
