#include "mimic/distill/distill.hpp"

#include "mimic/parallel.hpp"

namespace mimic::distill {

namespace {

void require_vocabulary(const rank::RankModelParams& model, const corpus::InvertedIndex& index) {
  if (!(model.vocabulary == index.vocabulary())) {
    throw InvalidArgument("model vocabulary does not match the index vocabulary");
  }
}

}  // namespace

corpus::PoolLabeler model_labeler(const rank::RankModelParams& model, const corpus::InvertedIndex& index) {
  require_vocabulary(model, index);
  return [&model, &index](std::size_t, std::span<const TermId> query, std::span<const corpus::ScoredDoc> pool) {
    const rank::QueryScorer scorer(model, query);
    std::vector<double> out;
    out.reserve(pool.size());
    for (const auto& p : pool) out.push_back(scorer(index.doc_terms(p.doc)));
    return out;
  };
}

corpus::AnnotationResult teacher_annotate(const AnnotationJob& job, const corpus::InvertedIndex& index) {
  if (job.teacher == nullptr || job.queries == nullptr) {
    throw InvalidArgument("annotation job needs a teacher and a query set");
  }
  const corpus::AnnotateOptions options{job.pool_size, job.pairs_per_query, job.seed, job.max_tie_retries,
                                        job.jobs};
  return corpus::annotate_with_labeler(index, *job.queries, options, model_labeler(*job.teacher, index));
}

Fidelity pairwise_agreement(const corpus::InvertedIndex& index, const corpus::QuerySet& queries,
                            std::size_t pool_size, const corpus::PoolLabeler& reference,
                            const corpus::PoolLabeler& candidate, std::size_t jobs) {
  struct Counts {
    std::size_t agree = 0;
    std::size_t compared = 0;
    std::size_t ties = 0;
  };
  std::vector<Counts> per_query(queries.size());
  parallel_for(queries.size(), jobs, [&](std::size_t qi) {
    const auto terms = index.vocabulary().map_known(queries[qi].terms);
    const auto pool = corpus::bm25_retrieve(index, terms, pool_size);
    if (pool.size() < 2) return;
    const auto ref = reference(qi, terms, pool);
    const auto cand = candidate(qi, terms, pool);
    auto& c = per_query[qi];
    for (std::size_t a = 0; a < pool.size(); ++a) {
      for (std::size_t b = a + 1; b < pool.size(); ++b) {
        if (ref[a] == ref[b]) {
          ++c.ties;
          continue;
        }
        ++c.compared;
        const bool ref_order = ref[a] > ref[b];
        if (cand[a] != cand[b] && (cand[a] > cand[b]) == ref_order) ++c.agree;
      }
    }
  });
  Fidelity f;
  std::size_t agree = 0;
  for (const auto& c : per_query) {
    agree += c.agree;
    f.compared += c.compared;
    f.reference_ties += c.ties;
  }
  f.agreement = f.compared == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(f.compared);
  return f;
}

DistillResult distill_with_labeler(const corpus::PoolLabeler& labeler,
                                   const rank::RankModelConfig& student_config,
                                   const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                                   const DistillOptions& options,
                                   const corpus::PoolLabeler& fidelity_reference) {
  auto annotated = corpus::annotate_with_labeler(index, unlabeled, options.annotate, labeler);
  DistillResult out;
  out.annotation = std::move(annotated.report);
  out.soft_labels = std::move(annotated.instances);
  if (options.epochs > 0 && out.soft_labels.empty()) {
    throw InvalidArgument("distillation produced no untied teacher pairs to train on");
  }
  auto fitted = rank::fit(student_config, index, out.soft_labels, options.epochs, options.seed,
                          options.embedding_file);
  out.student = std::move(fitted.params);
  out.training = std::move(fitted.training);
  if (options.heldout != nullptr) {
    out.fidelity = pairwise_agreement(index, *options.heldout, options.annotate.pool_size,
                                      fidelity_reference ? fidelity_reference : labeler,
                                      model_labeler(out.student, index), options.annotate.jobs);
  }
  return out;
}

DistillResult distill(const rank::RankCheckpoint& teacher, const rank::RankModelConfig& student_config,
                      const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                      const DistillOptions& options) {
  return distill_with_labeler(model_labeler(teacher.params, index), student_config, unlabeled, index,
                              options);
}

}  // namespace mimic::distill
