#include "mimic/corpus/annotate.hpp"

#include "mimic/parallel.hpp"

namespace mimic::corpus {

PairSample sample_pairs(std::span<const double> labels, std::size_t wanted, std::size_t max_ties,
                        Rng& rng) {
  PairSample out;
  const std::size_t n = labels.size();
  if (n < 2 || wanted == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> all;
  all.reserve(n * (n - 1) / 2);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) all.emplace_back(a, b);
  }
  // Partial Fisher-Yates: position `next` receives a uniform draw from the rest.
  for (std::size_t next = 0; next < all.size() && out.pairs.size() < wanted; ++next) {
    const auto j = next + static_cast<std::size_t>(rng.below(all.size() - next));
    std::swap(all[next], all[j]);
    const auto [a, b] = all[next];
    if (labels[a] == labels[b]) {
      if (++out.discarded > max_ties) break;
      continue;
    }
    out.pairs.emplace_back(a, b);
  }
  return out;
}

AnnotationResult annotate_with_labeler(const InvertedIndex& index, const QuerySet& queries,
                                       const AnnotateOptions& options, const PoolLabeler& labeler) {
  if (options.pool_size < 2) throw InvalidArgument("pool_size must be at least 2");
  const std::size_t max_ties =
      options.max_tie_retries == 0 ? options.pairs_per_query : options.max_tie_retries;

  struct PerQuery {
    std::vector<TrainingInstance> instances;
    bool skipped = false;
    std::size_t discarded = 0;
  };
  std::vector<PerQuery> results(queries.size());

  parallel_for(queries.size(), options.jobs, [&](std::size_t qi) {
    const auto& q = queries[qi];
    auto& slot = results[qi];
    const auto terms = index.vocabulary().map_known(q.terms);
    const auto pool = bm25_retrieve(index, terms, options.pool_size);
    if (pool.size() < 2) {
      slot.skipped = true;
      return;
    }
    const auto labels = labeler(qi, terms, pool);
    if (labels.size() != pool.size()) {
      throw InvalidArgument("labeler returned " + std::to_string(labels.size()) + " scores for a pool of " +
                            std::to_string(pool.size()));
    }
    Rng rng(derive_seed(options.seed, qi));
    const auto sample = sample_pairs(labels, options.pairs_per_query, max_ties, rng);
    slot.discarded = sample.discarded;
    for (const auto& [a, b] : sample.pairs) {
      TrainingInstance inst;
      inst.query_id = q.id;
      inst.doc1_id = index.doc_id(pool[a].doc);
      inst.doc2_id = index.doc_id(pool[b].doc);
      inst.query = terms;
      const auto d1 = index.doc_terms(pool[a].doc);
      const auto d2 = index.doc_terms(pool[b].doc);
      inst.doc1.assign(d1.begin(), d1.end());
      inst.doc2.assign(d2.begin(), d2.end());
      inst.s1 = labels[a];
      inst.s2 = labels[b];
      slot.instances.push_back(std::move(inst));
    }
  });

  AnnotationResult out;
  out.report.queries_total = queries.size();
  for (std::size_t qi = 0; qi < results.size(); ++qi) {
    auto& r = results[qi];
    if (r.skipped) out.report.skipped_queries.push_back(queries[qi].id);
    out.report.pairs_discarded += r.discarded;
    out.report.pairs_emitted += r.instances.size();
    for (auto& inst : r.instances) out.instances.push_back(std::move(inst));
  }
  return out;
}

AnnotationResult annotate_queries(const InvertedIndex& index, const QuerySet& queries,
                                  const AnnotateOptions& options) {
  return annotate_with_labeler(
      index, queries, options,
      [](std::size_t, std::span<const TermId>, std::span<const ScoredDoc> pool) {
        std::vector<double> scores;
        scores.reserve(pool.size());
        for (const auto& p : pool) scores.push_back(p.score);
        return scores;
      });
}

}  // namespace mimic::corpus
