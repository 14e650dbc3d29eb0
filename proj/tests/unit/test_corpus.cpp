#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "mimic/corpus/annotate.hpp"
#include "mimic/corpus/index.hpp"
#include "mimic/corpus/io.hpp"
#include "test_support.hpp"

using namespace mimic;
using namespace mimic::corpus;

namespace {

/// Independent BM25 straight from token lists.
double naive_bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                  std::size_t d) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0;
  for (const auto& doc : docs) total_len += static_cast<double>(doc.size());
  const double avgdl = total_len / n;
  double s = 0.0;
  for (const auto& t : query) {
    double df = 0;
    for (const auto& doc : docs) df += std::find(doc.begin(), doc.end(), t) != doc.end() ? 1 : 0;
    const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double norm = 1.2 * (1.0 - 0.75 + 0.75 * static_cast<double>(docs[d].size()) / avgdl);
    s += idf * tf * 2.2 / (tf + norm);
  }
  return s;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  CHECK(tokenize("Neural IR, today!") == std::vector<std::string>{"neural", "ir", "today"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("a  b\tc") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("BM25 x2") == std::vector<std::string>{"bm25", "x2"});
  CHECK(tokenize("--..--").empty());
  CHECK(tokenize("caf\xc3\xa9 ok") == std::vector<std::string>{"caf\xc3\xa9", "ok"});
}

TEST_CASE("build_index on two documents") {
  const auto idx = test::index_of({"a b", "b b c"});
  CHECK(idx.doc_count() == 2);
  CHECK(idx.avg_doc_length() == 2.5);
  const auto b = *idx.vocabulary().find("b");
  const auto p = idx.postings(b);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == Posting{0, 1});
  CHECK(p[1] == Posting{1, 2});
  CHECK(idx.term_frequency(b, 1) == 2);
  CHECK(idx.term_frequency(*idx.vocabulary().find("c"), 0) == 0);
}

TEST_CASE("build_index edge cases") {
  const auto empty = build_index({});
  CHECK(empty.doc_count() == 0);
  CHECK(empty.avg_doc_length() == 0.0);

  const auto one = test::index_of({"x x x"});
  const auto x = *one.vocabulary().find("x");
  CHECK(one.postings(x).size() == 1);
  CHECK(one.postings(x)[0] == Posting{0, 3});
  CHECK(one.avg_doc_length() == 3.0);

  const std::vector<Document> dup{{"a", "one"}, {"b", "two"}, {"a", "three"}};
  CHECK_THROWS_WITH_AS(build_index(dup), doctest::Contains("'a'"), InvalidArgument);
}

TEST_CASE("postings recount matches a naive count over the corpus") {
  const auto idx = test::small_index();
  std::map<std::string, std::size_t> naive;
  std::size_t total = 0;
  for (DocIndex d = 0; d < idx.doc_count(); ++d) {
    CHECK(idx.doc_terms(d).size() == idx.doc_length(d));
    total += idx.doc_length(d);
  }
  const std::vector<std::string> texts{"the cat sat on the mat", "a cat and a dog", "dogs chase cats in the park",
                                       "stock market prices fall", "market traders sell stock", "the park has a pond",
                                       "cat food prices rise", "dog food and cat food", "traders watch the market open",
                                       "prices of stock and bonds", "a mat for the dog", "pond fish and park ducks"};
  for (const auto& t : texts) {
    for (const auto& tok : tokenize(t)) naive[tok]++;
  }
  for (const auto& [term, count] : naive) {
    const auto id = idx.vocabulary().find(term);
    REQUIRE(id.has_value());
    std::size_t sum = 0;
    DocIndex prev = 0;
    bool first = true;
    for (const auto& p : idx.postings(*id)) {
      CHECK(p.tf >= 1);
      CHECK(p.doc < idx.doc_count());
      if (!first) CHECK(p.doc > prev);
      prev = p.doc;
      first = false;
      sum += p.tf;
    }
    CHECK(sum == count);
  }
  CHECK(idx.avg_doc_length() == static_cast<double>(total) / static_cast<double>(idx.doc_count()));
}

TEST_CASE("idf values") {
  std::vector<std::string> texts(100, "filler");
  for (int i = 0; i < 10; ++i) texts[i] += " rare";
  const auto idx = test::index_of(texts);
  CHECK(idf(idx, "rare") == doctest::Approx(2.2172).epsilon(1e-4));
  CHECK(idf(idx, "rare") == std::log(101.0 / 11.0));
  CHECK(idf(idx, "filler") == 0.0);

  const auto nine = test::index_of(std::vector<std::string>(9, "w"));
  CHECK(idf(nine, "unseen") == doctest::Approx(2.3026).epsilon(1e-4));
}

TEST_CASE("idf stays within [0, ln(N+1)]") {
  const auto idx = test::small_index();
  const double hi = std::log(static_cast<double>(idx.doc_count()) + 1.0);
  for (TermId t = 0; t < idx.vocabulary().size(); ++t) {
    CHECK(idf(idx, t) >= 0.0);
    CHECK(idf(idx, t) <= hi);
  }
}

TEST_CASE("bm25 hand-evaluated example") {
  // N = 2, df(a) = 1, tf = 1, dl = avgdl.
  const auto idx = test::index_of({"a b", "c d"});
  const std::vector<std::string> q{"a"};
  CHECK(bm25_score(idx, q, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bm25_score(idx, q, 1) == 0.0);
  CHECK_THROWS_AS(bm25_score(idx, q, 2), InvalidArgument);
}

TEST_CASE("bm25 is strictly increasing and concave in tf") {
  const auto idx = test::index_of({"a b b b", "a a b b", "c c c c", "d d d d"});
  const std::vector<std::string> q{"a"};
  const double one = bm25_score(idx, q, 0);
  const double two = bm25_score(idx, q, 1);
  CHECK(two > one);
  CHECK(two < 2.0 * one);
}

TEST_CASE("bm25 matches an independent evaluation and is additive over terms") {
  const std::vector<std::string> texts{"the cat sat on the mat", "a cat and a dog", "dogs chase cats in the park",
                                       "stock market prices fall", "market traders sell stock", "the park has a pond"};
  const auto idx = test::index_of(texts);
  std::vector<std::vector<std::string>> toks;
  for (const auto& t : texts) toks.push_back(tokenize(t));
  const std::vector<std::string> q{"cat", "park", "the", "cat", "zebra"};
  for (DocIndex d = 0; d < idx.doc_count(); ++d) {
    const double s = bm25_score(idx, q, d);
    CHECK(s == doctest::Approx(naive_bm25(toks, q, d)).epsilon(1e-12));
    double parts = 0.0;
    for (const auto& t : q) parts += bm25_score(idx, std::vector<std::string>{t}, d);
    CHECK(s == doctest::Approx(parts).epsilon(1e-12));
  }
}

TEST_CASE("bm25_retrieve ranks matching docs with doc-id tie break") {
  const auto idx = build_index(std::vector<Document>{{"z", "apple pie"}, {"m", "apple pie"}, {"a", "banana"},
                                                     {"b", "apple apple pie pie"}});
  const auto q = idx.vocabulary().map_known(tokenize("apple"));
  const auto pool = bm25_retrieve(idx, q, 10);
  REQUIRE(pool.size() == 3);
  for (const auto& p : pool) CHECK(p.score == bm25_score(idx, q, p.doc));
  // z and m tie exactly; m sorts first.
  CHECK(idx.doc_id(pool[1].doc) == "m");
  CHECK(idx.doc_id(pool[2].doc) == "z");
  CHECK(pool[1].score == pool[2].score);
  CHECK(bm25_retrieve(idx, q, 1).size() == 1);
  CHECK(bm25_retrieve(idx, {}, 10).empty());
}

TEST_CASE("index serialization is byte stable and lossless") {
  const auto idx = test::small_index();
  const auto bytes = idx.serialize();
  CHECK(bytes == test::small_index().serialize());
  const auto back = InvertedIndex::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.vocabulary() == idx.vocabulary());
  CHECK(back.avg_doc_length() == idx.avg_doc_length());
  for (TermId t = 0; t < idx.vocabulary().size(); ++t) {
    CHECK(std::equal(back.postings(t).begin(), back.postings(t).end(), idx.postings(t).begin(),
                     idx.postings(t).end()));
  }
  CHECK_THROWS_AS(InvertedIndex::deserialize("XXXX"), IoError);
  CHECK_THROWS_AS(InvertedIndex::deserialize(bytes.substr(0, bytes.size() - 3)), IoError);
}

TEST_CASE("annotate: empty query set and determinism") {
  const auto idx = test::small_index();
  AnnotateOptions o;
  o.pool_size = 6;
  o.pairs_per_query = 5;
  o.seed = 9;
  CHECK(annotate_queries(idx, {}, o).instances.empty());
  const auto qs = test::queries_of({"cat dog", "stock market", "park pond", "unicorns"});
  const auto a = annotate_queries(idx, qs, o);
  const auto b = annotate_queries(idx, qs, o);
  CHECK(a.instances == b.instances);
  CHECK(format_annotations(a.instances) == format_annotations(b.instances));
  CHECK(a.report.queries_total == 4);
  CHECK(a.report.skipped_queries == std::vector<std::string>{"q3"});
  o.jobs = 3;
  CHECK(annotate_queries(idx, qs, o).instances == a.instances);
  for (const auto& inst : a.instances) {
    CHECK(inst.s1 != inst.s2);
    CHECK(inst.s1 == bm25_score(idx, inst.query, *idx.find_doc(inst.doc1_id)));
    CHECK(inst.s2 == bm25_score(idx, inst.query, *idx.find_doc(inst.doc2_id)));
  }
}

TEST_CASE("annotate: pool of two distinct docs gives one instance") {
  const auto idx = test::index_of({"red red red apple", "red apple pear", "banana"});
  AnnotateOptions o;
  o.pool_size = 2;
  o.pairs_per_query = 1;
  o.seed = 1;
  const auto r = annotate_queries(idx, test::queries_of({"red"}), o);
  REQUIRE(r.instances.size() == 1);
  const auto& i = r.instances[0];
  CHECK(i.s1 == bm25_score(idx, std::vector<std::string>{"red"}, *idx.find_doc(i.doc1_id)));
  CHECK(i.s2 == bm25_score(idx, std::vector<std::string>{"red"}, *idx.find_doc(i.doc2_id)));
  CHECK(i.s1 != i.s2);
}

TEST_CASE("annotate: query with fewer than two candidates is skipped") {
  const auto idx = test::index_of({"only here", "elsewhere"});
  AnnotateOptions o;
  o.pool_size = 10;
  const auto r = annotate_queries(idx, test::queries_of({"only"}), o);
  CHECK(r.instances.empty());
  CHECK(r.report.skipped_queries.size() == 1);
}

TEST_CASE("sample_pairs draws distinct pairs and never emits ties") {
  Rng rng(4);
  const std::vector<double> labels{1, 2, 2, 3, 3, 3, 4};
  const auto s = sample_pairs(labels, 1000, 1000, rng);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [a, b] : s.pairs) {
    CHECK(a < b);
    CHECK(labels[a] != labels[b]);
    CHECK(seen.insert({a, b}).second);
  }
  // 21 pairs in total, 4 of them tied.
  CHECK(s.pairs.size() == 17);
  CHECK(s.discarded == 4);

  Rng rng2(4);
  const std::vector<double> flat(5, 1.0);
  const auto t = sample_pairs(flat, 3, 2, rng2);
  CHECK(t.pairs.empty());
  // Two tied draws are tolerated; the third ends sampling.
  CHECK(t.discarded == 3);
}

TEST_CASE("corpus and query parsing") {
  const auto docs = parse_corpus_jsonl("{\"id\":\"a\",\"text\":\"x y\"}\n\n{\"id\":\"b\",\"text\":\"z\"}\n");
  REQUIRE(docs.size() == 2);
  CHECK(docs[1].id == "b");
  CHECK_THROWS_WITH_AS(parse_corpus_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n"),
                       doctest::Contains("line 2"), IoError);
  CHECK_THROWS_AS(parse_corpus_jsonl("not json\n"), IoError);

  const auto qs = parse_queries_tsv("q1\tRed Fox\nq2\tblue\n");
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].terms == std::vector<std::string>{"red", "fox"});
  CHECK_THROWS_AS(parse_queries_tsv("q1\ta\nq1\tb\n"), IoError);
  CHECK_THROWS_WITH_AS(parse_queries_tsv("q1\ta\nnotab\n"), doctest::Contains("line 2"), IoError);
}

TEST_CASE("annotation file round trip") {
  const auto idx = test::small_index();
  const auto qs = test::queries_of({"cat dog", "stock market"});
  AnnotateOptions o;
  o.pool_size = 5;
  o.pairs_per_query = 4;
  const auto r = annotate_queries(idx, qs, o);
  const auto text = format_annotations(r.instances);
  CHECK(text.find("q0\t") == 0);
  const auto loaded = parse_annotations(text, qs, idx);
  REQUIRE(loaded.instances.size() + loaded.dropped_ties == r.instances.size());
  for (std::size_t i = 0; i < loaded.instances.size(); ++i) {
    CHECK(loaded.instances[i].doc1_id == r.instances[i].doc1_id);
    CHECK(std::abs(loaded.instances[i].s1 - r.instances[i].s1) <= 5e-7);
  }
  CHECK_THROWS_AS(parse_annotations("qX\td0\td1\t1.0\t0.5\n", qs, idx), IoError);
  CHECK_THROWS_AS(parse_annotations("q0\td0\tnope\t1.0\t0.5\n", qs, idx), IoError);
}
