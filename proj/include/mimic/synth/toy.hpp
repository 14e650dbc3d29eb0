#pragma once

/** \file toy.hpp
 *  \brief Seeded generator for a small topical test collection.
 *
 * Documents mix words from one primary topic, an occasional secondary
 * topic and a shared background vocabulary, all Zipf-weighted. Queries are
 * a few words of one topic. A document is relevant to a query (grade 1) when
 * its primary topic matches, and highly relevant (grade 2) when it also
 * contains at least half of the query words.
 */

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mimic/corpus/index.hpp"
#include "mimic/eval/metrics.hpp"

namespace mimic::synth {

struct ToySpec {
  std::size_t topics = 20;
  std::size_t words_per_topic = 40;
  std::size_t background_words = 600;
  std::size_t docs = 2000;
  std::size_t min_doc_length = 30;
  std::size_t max_doc_length = 80;
  double topic_share = 0.4;      ///< token probability of the primary topic
  double secondary_share = 0.1;  ///< token probability of the secondary topic
  std::size_t train_queries = 200;
  std::size_t unlabeled_queries = 2000;
  std::size_t eval_queries = 50;
  std::uint64_t seed = 7;
};

using QueryLines = std::vector<std::pair<std::string, std::string>>;

struct ToyCollection {
  std::vector<corpus::Document> docs;
  QueryLines train_queries;      ///< teacher training queries
  QueryLines unlabeled_queries;  ///< public queries for the student
  QueryLines eval_queries;
  eval::Qrels train_qrels;
  eval::Qrels eval_qrels;
  std::vector<std::vector<std::string>> topic_words;  ///< by topic, most frequent first
  std::vector<std::string> background_words;
};

ToyCollection make_toy_collection(const ToySpec& spec);

struct ToyEmbeddingSpec {
  std::size_t dim = 32;
  double topic_radius = 0.1;  ///< per-coordinate half-width of topic centroids
  double word_noise = 0.05;   ///< per-coordinate half-width of word offsets
  std::uint64_t seed = 13;
};

/// Word-vector text for every word of the collection. Words of one topic sit
/// around a shared centroid; background words are pure noise.
std::string make_toy_embeddings(const ToyCollection& collection, const ToyEmbeddingSpec& spec);

/// corpus.jsonl, {train,unlabeled,eval}_queries.tsv, train.qrels, eval.qrels
void write_toy_collection(const std::filesystem::path& dir, const ToyCollection& collection);

}  // namespace mimic::synth
