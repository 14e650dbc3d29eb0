#pragma once

/** \file index.hpp
 *  \brief Tokenizer, vocabulary and in-memory inverted index with IDF and BM25.
 *
 * Thread-safety: build_index is single-threaded; a built index is immutable
 * and every const member may be called concurrently.
 */

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mimic/common.hpp"

namespace mimic::corpus {

/// Lowercases ASCII letters and splits on runs of ASCII characters that are
/// not letters or digits. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct Document {
  std::string id;
  std::string text;
};

/// Dense bijection term <-> [0, size).
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws InvalidArgument on a repeated term.
  static Vocabulary from_terms(std::vector<std::string> terms);

  TermId add(std::string_view term);
  std::optional<TermId> find(std::string_view term) const;
  const std::string& term(TermId id) const { return terms_.at(id); }
  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }

  /// Maps terms to ids, dropping terms that are not in the vocabulary.
  std::vector<TermId> map_known(std::span<const std::string> terms) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, TermId> ids_;
};

struct Posting {
  DocIndex doc;
  std::uint32_t tf;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredDoc {
  DocIndex doc;
  double score;
};

class InvertedIndex {
 public:
  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  std::span<const Posting> postings(TermId term) const { return postings_.at(term); }
  std::uint32_t document_frequency(TermId term) const {
    return static_cast<std::uint32_t>(postings_.at(term).size());
  }
  /// 0 when the term does not occur in the document.
  std::uint32_t term_frequency(TermId term, DocIndex doc) const;

  std::uint32_t doc_length(DocIndex doc) const {
    return static_cast<std::uint32_t>(doc_terms_.at(doc).size());
  }
  const std::string& doc_id(DocIndex doc) const { return doc_ids_.at(doc); }
  /// Token sequence of a document as term ids (forward index).
  std::span<const TermId> doc_terms(DocIndex doc) const { return doc_terms_.at(doc); }
  std::optional<DocIndex> find_doc(std::string_view doc_id) const;

  /// Binary form: magic "MMIX", u32 version, vocabulary, then per document its
  /// id and term-id sequence. Postings and statistics are rebuilt on load.
  std::string serialize() const;
  static InvertedIndex deserialize(std::string_view bytes);

  friend InvertedIndex build_index(std::span<const Document> documents);

 private:
  void add_document(std::string id, std::vector<TermId> terms);
  void finalize();

  Vocabulary vocab_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::vector<TermId>> doc_terms_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, DocIndex> doc_lookup_;
  double avg_doc_length_ = 0.0;
};

/// Throws InvalidArgument naming the first duplicated doc id.
InvertedIndex build_index(std::span<const Document> documents);

/// ln((N + 1) / (df + 1)); unseen terms have df = 0.
double idf(const InvertedIndex& index, std::string_view term);
double idf(const InvertedIndex& index, TermId term);

/// Okapi BM25 with idf ln(1 + (N - df + 0.5) / (df + 0.5)). Repeated query
/// terms contribute once per occurrence. Throws on an out-of-range document.
double bm25_score(const InvertedIndex& index, std::span<const TermId> query, DocIndex doc,
                  const Bm25Params& params = {});
double bm25_score(const InvertedIndex& index, std::span<const std::string> query, DocIndex doc,
                  const Bm25Params& params = {});

/// Documents sharing at least one term with the query, best first, ties by
/// ascending doc id, truncated to `depth`. Scores equal bm25_score exactly.
std::vector<ScoredDoc> bm25_retrieve(const InvertedIndex& index, std::span<const TermId> query,
                                     std::size_t depth, const Bm25Params& params = {});

}  // namespace mimic::corpus
