#include "mimic/corpus/index.hpp"

#include <algorithm>
#include <cmath>

#include "mimic/binary_io.hpp"

namespace mimic::corpus {

namespace {

constexpr std::string_view kIndexMagic = "MMIX";
constexpr std::uint32_t kIndexVersion = 1;

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

double bm25_idf(std::size_t n, std::size_t df) {
  const double N = static_cast<double>(n);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (N - d + 0.5) / (d + 0.5));
}

double bm25_term(const InvertedIndex& index, const Bm25Params& p, std::size_t df, std::uint32_t tf,
                 std::uint32_t doc_len) {
  const double f = static_cast<double>(tf);
  const double norm = 1.0 - p.b + p.b * static_cast<double>(doc_len) / index.avg_doc_length();
  return bm25_idf(index.doc_count(), df) * f * (p.k1 + 1.0) / (f + p.k1 * norm);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary Vocabulary::from_terms(std::vector<std::string> terms) {
  Vocabulary v;
  v.terms_.reserve(terms.size());
  for (auto& t : terms) {
    if (v.ids_.contains(t)) throw InvalidArgument("duplicate vocabulary term '" + t + "'");
    v.ids_.emplace(t, static_cast<TermId>(v.terms_.size()));
    v.terms_.push_back(std::move(t));
  }
  return v;
}

TermId Vocabulary::add(std::string_view term) {
  std::string key(term);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const auto id = static_cast<TermId>(terms_.size());
  ids_.emplace(key, id);
  terms_.push_back(std::move(key));
  return id;
}

std::optional<TermId> Vocabulary::find(std::string_view term) const {
  if (auto it = ids_.find(std::string(term)); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::vector<TermId> Vocabulary::map_known(std::span<const std::string> terms) const {
  std::vector<TermId> out;
  out.reserve(terms.size());
  for (const auto& t : terms) {
    if (auto id = find(t)) out.push_back(*id);
  }
  return out;
}

std::uint32_t InvertedIndex::term_frequency(TermId term, DocIndex doc) const {
  if (term >= postings_.size()) return 0;
  const auto& list = postings_[term];
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, DocIndex d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

std::optional<DocIndex> InvertedIndex::find_doc(std::string_view doc_id) const {
  if (auto it = doc_lookup_.find(std::string(doc_id)); it != doc_lookup_.end()) return it->second;
  return std::nullopt;
}

void InvertedIndex::add_document(std::string id, std::vector<TermId> terms) {
  const auto doc = static_cast<DocIndex>(doc_ids_.size());
  if (!doc_lookup_.emplace(id, doc).second) {
    throw InvalidArgument("duplicate doc_id '" + id + "'");
  }
  doc_ids_.push_back(std::move(id));
  doc_terms_.push_back(std::move(terms));
}

void InvertedIndex::finalize() {
  postings_.assign(vocab_.size(), {});
  std::uint64_t total = 0;
  std::vector<TermId> sorted;
  for (DocIndex d = 0; d < doc_terms_.size(); ++d) {
    const auto& terms = doc_terms_[d];
    total += terms.size();
    sorted.assign(terms.begin(), terms.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      postings_[sorted[i]].push_back({d, static_cast<std::uint32_t>(j - i)});
      i = j;
    }
  }
  avg_doc_length_ = doc_terms_.empty()
                        ? 0.0
                        : static_cast<double>(total) / static_cast<double>(doc_terms_.size());
}

InvertedIndex build_index(std::span<const Document> documents) {
  InvertedIndex index;
  for (const auto& doc : documents) {
    if (doc.id.empty()) throw InvalidArgument("document with empty doc_id");
    std::vector<TermId> ids;
    for (const auto& tok : tokenize(doc.text)) ids.push_back(index.vocab_.add(tok));
    index.add_document(doc.id, std::move(ids));
  }
  index.finalize();
  return index;
}

std::string InvertedIndex::serialize() const {
  BinaryWriter w;
  w.raw(kIndexMagic);
  w.u32(kIndexVersion);
  w.u64(vocab_.size());
  for (const auto& t : vocab_.terms()) w.str(t);
  w.u64(doc_ids_.size());
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    w.str(doc_ids_[d]);
    w.u64(doc_terms_[d].size());
    for (const auto t : doc_terms_[d]) w.u32(t);
  }
  return w.take();
}

InvertedIndex InvertedIndex::deserialize(std::string_view bytes) {
  BinaryReader r(bytes);
  r.expect(kIndexMagic, "mimic index file");
  if (const auto version = r.u32(); version != kIndexVersion) {
    throw IoError("unsupported index version " + std::to_string(version));
  }
  InvertedIndex index;
  const auto vocab_size = r.u64();
  std::vector<std::string> terms;
  for (std::uint64_t i = 0; i < vocab_size; ++i) terms.push_back(r.str());
  index.vocab_ = Vocabulary::from_terms(std::move(terms));
  const auto docs = r.u64();
  for (std::uint64_t d = 0; d < docs; ++d) {
    auto id = r.str();
    const auto len = r.u64();
    std::vector<TermId> ids(len);
    for (auto& t : ids) {
      t = r.u32();
      if (t >= vocab_size) throw IoError("term id out of range in index file");
    }
    index.add_document(std::move(id), std::move(ids));
  }
  if (!r.at_end()) throw IoError("trailing bytes in index file");
  index.finalize();
  return index;
}

double idf(const InvertedIndex& index, TermId term) {
  const double n = static_cast<double>(index.doc_count());
  const double df = term < index.vocabulary().size() ? index.document_frequency(term) : 0.0;
  return std::log((n + 1.0) / (df + 1.0));
}

double idf(const InvertedIndex& index, std::string_view term) {
  if (auto id = index.vocabulary().find(term)) return idf(index, *id);
  return std::log(static_cast<double>(index.doc_count()) + 1.0);
}

double bm25_score(const InvertedIndex& index, std::span<const TermId> query, DocIndex doc,
                  const Bm25Params& params) {
  if (doc >= index.doc_count()) {
    throw InvalidArgument("doc index " + std::to_string(doc) + " out of range (doc_count " +
                          std::to_string(index.doc_count()) + ")");
  }
  double score = 0.0;
  const auto len = index.doc_length(doc);
  for (const auto t : query) {
    const auto tf = index.term_frequency(t, doc);
    if (tf == 0) continue;
    score += bm25_term(index, params, index.document_frequency(t), tf, len);
  }
  return score;
}

double bm25_score(const InvertedIndex& index, std::span<const std::string> query, DocIndex doc,
                  const Bm25Params& params) {
  const auto ids = index.vocabulary().map_known(query);
  return bm25_score(index, ids, doc, params);
}

std::vector<ScoredDoc> bm25_retrieve(const InvertedIndex& index, std::span<const TermId> query,
                                     std::size_t depth, const Bm25Params& params) {
  // Term-at-a-time accumulation in query order: each document receives its
  // contributions in the same order as bm25_score adds them.
  std::unordered_map<DocIndex, double> acc;
  std::vector<DocIndex> touched;
  for (const auto t : query) {
    if (t >= index.vocabulary().size()) continue;
    const auto list = index.postings(t);
    for (const auto& p : list) {
      auto [it, inserted] = acc.try_emplace(p.doc, 0.0);
      if (inserted) touched.push_back(p.doc);
      it->second += bm25_term(index, params, list.size(), p.tf, index.doc_length(p.doc));
    }
  }
  std::vector<ScoredDoc> out;
  out.reserve(touched.size());
  for (const auto d : touched) out.push_back({d, acc[d]});
  auto better = [&](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.doc_id(a.doc) < index.doc_id(b.doc);
  };
  if (out.size() > depth) {
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(depth), out.end(), better);
    out.resize(depth);
  } else {
    std::sort(out.begin(), out.end(), better);
  }
  return out;
}

}  // namespace mimic::corpus
