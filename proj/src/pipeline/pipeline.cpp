#include "mimic/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "mimic/binary_io.hpp"
#include "mimic/corpus/io.hpp"
#include "mimic/distill/distill.hpp"
#include "mimic/parallel.hpp"
#include "mimic/pate/pate.hpp"
#include "mimic/simd/kernels.hpp"

namespace mimic::pipeline {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Files written by this invocation, relative to the run dir, with content hashes.
class RunDir {
 public:
  explicit RunDir(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path path(const fs::path& rel) const { return root_ / rel; }

  void write(const fs::path& rel, std::string_view bytes) {
    write_file(root_ / rel, bytes);
    record(rel, bytes);
  }
  void record(const fs::path& rel, std::string_view bytes) { artifacts_[rel.generic_string()] = hex64(fnv1a(bytes)); }
  void record_file(const fs::path& rel) { record(rel, read_file(root_ / rel)); }

  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }

 private:
  fs::path root_;
  std::map<std::string, std::string> artifacts_;
};

struct EvalSet {
  corpus::QuerySet queries;
  eval::Qrels qrels;
};

corpus::PoolLabeler bm25_labeler() {
  return [](std::size_t, std::span<const TermId>, std::span<const corpus::ScoredDoc> pool) {
    std::vector<double> out;
    out.reserve(pool.size());
    for (const auto& p : pool) out.push_back(p.score);
    return out;
  };
}

/// Grade of each pool document from the judgments of the query (0 when unjudged).
corpus::PoolLabeler qrels_labeler(const corpus::InvertedIndex& index, const corpus::QuerySet& queries,
                                  const eval::Qrels& qrels) {
  return [&index, &queries, &qrels](std::size_t qi, std::span<const TermId>,
                                    std::span<const corpus::ScoredDoc> pool) {
    std::vector<double> out(pool.size(), 0.0);
    const auto it = qrels.find(queries[qi].id);
    if (it == qrels.end()) return out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto g = it->second.find(std::string(index.doc_id(pool[i].doc)));
      if (g != it->second.end()) out[i] = g->second;
    }
    return out;
  };
}

class Evaluator {
 public:
  Evaluator(const RunConfig& config, const corpus::InvertedIndex& index, RunDir& dir)
      : config_(config), index_(index), dir_(dir) {
    eval_.queries = corpus::read_queries(config.paths.eval_queries);
    eval_.qrels = eval::read_qrels(config.paths.eval_qrels);
    table_.k = config.metric_k;
  }

  const corpus::QuerySet& queries() const { return eval_.queries; }

  eval::MetricReport measure(const std::string& slug, const corpus::PoolLabeler& labeler) {
    const auto run = rerank_run(index_, eval_.queries, labeler, config_.rerank_depth, config_.jobs);
    dir_.write(fs::path("runs") / (slug + ".run"), eval::format_run(run, slug));
    auto report = eval::evaluate(run, eval_.qrels, {config_.metric_k, config_.skip_empty});
    dir_.write(fs::path("metrics") / (slug + ".tsv"), format_query_metrics(report));
    return report;
  }

  double agreement(const corpus::PoolLabeler& reference, const corpus::PoolLabeler& candidate) const {
    return distill::pairwise_agreement(index_, eval_.queries, config_.pool_size, reference, candidate, config_.jobs)
        .agreement;
  }

  void add(std::string label, std::string slug, const corpus::PoolLabeler& labeler,
           const corpus::PoolLabeler* reference = nullptr) {
    MetricRow row{std::move(label), slug, measure(slug, labeler), std::nullopt};
    if (reference != nullptr) row.agreement = agreement(*reference, labeler);
    table_.rows.push_back(std::move(row));
  }

  void add_row(MetricRow row) { table_.rows.push_back(std::move(row)); }
  void note(std::string text) { table_.notes.push_back(std::move(text)); }
  const MetricTable& table() const { return table_; }

  MetricTable finish() {
    dir_.write("metrics.txt", format_table(table_));
    dir_.write("metrics.tsv", format_table_tsv(table_));
    return table_;
  }

 private:
  const RunConfig& config_;
  const corpus::InvertedIndex& index_;
  RunDir& dir_;
  EvalSet eval_;
  MetricTable table_;
};

corpus::AnnotateOptions annotate_options(const RunConfig& config, std::uint64_t seed) {
  return {config.pool_size, config.pairs_per_query, seed, config.max_tie_retries, config.jobs};
}

corpus::InvertedIndex build_and_store_index(const RunConfig& config, RunDir& dir) {
  auto index = corpus::build_index(corpus::read_corpus(config.paths.corpus));
  dir.write("index.bin", index.serialize());
  return index;
}

corpus::InvertedIndex load_stored_index(const RunDir& dir) {
  const auto path = dir.path("index.bin");
  if (!fs::exists(path)) throw IoError("cannot open " + path.string() + " (run the teacher stage first)");
  return corpus::read_index(path);
}

/// Teacher training pairs from the sensitive query set.
std::vector<TrainingInstance> teacher_pairs(const RunConfig& config, bool supervised,
                                            const corpus::InvertedIndex& index, const SeedPlan& seeds,
                                            RunDir& dir) {
  const auto queries = corpus::read_queries(config.paths.train_queries);
  corpus::AnnotationResult result;
  if (supervised) {
    const auto qrels = eval::read_qrels(config.paths.train_qrels);
    result = corpus::annotate_with_labeler(index, queries, annotate_options(config, seeds.weak_annotation),
                                           qrels_labeler(index, queries, qrels));
  } else {
    result = corpus::annotate_queries(index, queries, annotate_options(config, seeds.weak_annotation));
  }
  dir.write(supervised ? "supervised.tsv" : "weak.tsv", corpus::format_annotations(result.instances));
  if (result.instances.empty()) throw InvalidArgument("teacher annotation produced no untied pairs");
  return std::move(result.instances);
}

rank::RankModelParams fit_teacher(const RunConfig& config, const corpus::InvertedIndex& index,
                                  std::span<const TrainingInstance> pairs, const SeedPlan& seeds, RunDir& dir) {
  auto fitted = rank::fit(config.teacher.model, index, pairs, config.teacher.epochs, seeds.teacher,
                          config.embedding_file());
  dir.write("teacher.ckpt", rank::serialize_checkpoint(config.teacher.model, fitted.params));
  return std::move(fitted.params);
}

distill::DistillOptions student_options(const RunConfig& config, const SeedPlan& seeds) {
  distill::DistillOptions o;
  o.epochs = config.student.epochs;
  o.seed = seeds.student;
  o.annotate = annotate_options(config, seeds.soft_annotation);
  o.embedding_file = config.embedding_file();
  return o;
}

void store_student(const RunConfig& config, const distill::DistillResult& result, const std::string& stem,
                   RunDir& dir) {
  dir.write(stem + ".ckpt", rank::serialize_checkpoint(config.student.model, result.student));
  dir.write(stem == "student" ? "soft.tsv" : "soft_" + stem.substr(std::string("student_").size()) + ".tsv",
            corpus::format_annotations(result.soft_labels));
}

// --- modes ------------------------------------------------------------------

MetricTable run_single_teacher(const RunConfig& config, bool supervised, RunDir& dir, const SeedPlan& seeds) {
  const auto index = build_and_store_index(config, dir);
  const auto pairs = teacher_pairs(config, supervised, index, seeds, dir);
  const auto teacher = fit_teacher(config, index, pairs, seeds, dir);
  Evaluator ev(config, index, dir);
  ev.add("BM25", "bm25", bm25_labeler());
  ev.add(supervised ? "Teacher (supervised)" : "Teacher (weak supervision)", "teacher",
         distill::model_labeler(teacher, index));
  return ev.finish();
}

MetricTable run_distill(const RunConfig& config, Stage stage, RunDir& dir, const SeedPlan& seeds) {
  const bool supervised = config.supervision == Supervision::kSupervised;
  corpus::InvertedIndex index;
  rank::RankModelParams teacher;
  if (stage != Stage::kStudent) {
    index = build_and_store_index(config, dir);
    const auto pairs = teacher_pairs(config, supervised, index, seeds, dir);
    teacher = fit_teacher(config, index, pairs, seeds, dir);
  } else {
    index = load_stored_index(dir);
    teacher = rank::load_checkpoint(dir.path("teacher.ckpt")).params;
  }
  const auto teacher_labeler = distill::model_labeler(teacher, index);

  std::optional<distill::DistillResult> student;
  if (stage != Stage::kTeacher) {
    const auto unlabeled = corpus::read_queries(config.paths.unlabeled_queries);
    student = distill::distill_with_labeler(teacher_labeler, config.student.model, unlabeled, index,
                                            student_options(config, seeds));
    store_student(config, *student, "student", dir);
  }

  Evaluator ev(config, index, dir);
  ev.add("BM25", "bm25", bm25_labeler());
  ev.add("Teacher", "teacher", teacher_labeler);
  if (student) ev.add("Student", "student", distill::model_labeler(student->student, index), &teacher_labeler);
  return ev.finish();
}

MetricTable run_pate(const RunConfig& config, Stage stage, RunDir& dir, const SeedPlan& seeds) {
  const bool supervised = config.supervision == Supervision::kSupervised;
  corpus::InvertedIndex index;
  pate::TeacherEnsemble ensemble;
  if (stage != Stage::kStudent) {
    index = build_and_store_index(config, dir);
    const auto pairs = teacher_pairs(config, supervised, index, seeds, dir);
    const auto partition = pate::partition_data(pairs, config.n_partitions, seeds.partition);
    for (std::size_t k = 0; k < partition.size(); ++k) {
      dir.write(fs::path("shards") / ("shard_" + std::to_string(k) + ".tsv"),
                corpus::format_annotations(partition[k]));
    }
    const pate::PrivacyConfig privacy{config.n_partitions, config.noise_scale, seeds.label_noise};
    ensemble = pate::train_teachers(partition, config.teacher.model, index, config.teacher.epochs, seeds.teacher,
                                    privacy, config.embedding_file(), config.jobs);
    pate::save_ensemble(dir.path("ensemble"), ensemble);
    for (const auto& entry : fs::directory_iterator(dir.path("ensemble"))) {
      dir.record_file(fs::path("ensemble") / entry.path().filename());
    }
  } else {
    index = load_stored_index(dir);
    ensemble = pate::load_ensemble(dir.path("ensemble"));
    if (ensemble.privacy.noise_scale != config.noise_scale || ensemble.privacy.n_partitions != config.n_partitions) {
      throw InvalidArgument("stored ensemble was trained with different privacy settings");
    }
  }

  const auto mean = pate::mean_labeler(ensemble, index);
  const auto clean = pate::aggregate_labeler(ensemble, index, 0.0, seeds.eval_noise);
  const auto noisy = pate::aggregate_labeler(ensemble, index, config.noise_scale, seeds.eval_noise);

  std::optional<distill::DistillResult> student;
  std::optional<distill::DistillResult> clean_student;
  if (stage != Stage::kTeacher) {
    const auto unlabeled = corpus::read_queries(config.paths.unlabeled_queries);
    const auto options = student_options(config, seeds);
    student = pate::pate_distill(ensemble, config.student.model, unlabeled, index, options).student;
    store_student(config, *student, "student", dir);
    if (config.noise_scale > 0.0) {
      auto clean_ensemble = ensemble;
      clean_ensemble.privacy.noise_scale = 0.0;
      clean_student = pate::pate_distill(clean_ensemble, config.student.model, unlabeled, index, options).student;
      store_student(config, *clean_student, "student_nonnoisy", dir);
    }
  }

  Evaluator ev(config, index, dir);
  ev.add("BM25", "bm25", bm25_labeler());

  MetricRow avg{"Teachers (average)", "teachers_avg", {}, 0.0};
  const auto n = static_cast<double>(ensemble.teachers.size());
  for (std::size_t i = 0; i < ensemble.teachers.size(); ++i) {
    const auto labeler = distill::model_labeler(ensemble.teachers[i], index);
    const auto r = ev.measure("teacher_" + std::to_string(i), labeler);
    avg.report.map += r.map / n;
    avg.report.p_at_k += r.p_at_k / n;
    avg.report.ndcg_at_k += r.ndcg_at_k / n;
    avg.report.query_count = r.query_count;
    *avg.agreement += ev.agreement(mean, labeler) / n;
  }
  ev.add_row(std::move(avg));
  ev.add("Non-noisy aggregated teacher", "aggregate", clean, &mean);
  ev.add("Noisy aggregated teacher", "aggregate_noisy", noisy, &mean);
  if (clean_student) {
    ev.add("Student (non-noisy aggregate)", "student_nonnoisy", distill::model_labeler(clean_student->student, index),
           &mean);
  }
  if (student) {
    ev.add(config.noise_scale > 0.0 ? "Student (noisy aggregate)" : "Student", "student",
           distill::model_labeler(student->student, index), &mean);
  }

  const auto* c = ev.table().find("aggregate");
  const auto* z = ev.table().find("aggregate_noisy");
  std::string comparison = "noisy vs non-noisy aggregated teacher (b = " + fixed(config.noise_scale, 4) +
                           "): MAP " + fixed(z->report.map, 4) + " vs " + fixed(c->report.map, 4) + " (" +
                           (z->report.map - c->report.map >= 0 ? "+" : "") + fixed(z->report.map - c->report.map, 4) +
                           "), pairwise agreement with teacher mean " + fixed(*z->agreement, 4) + " vs " +
                           fixed(*c->agreement, 4);
  ev.note(comparison);
  nlohmann::ordered_json cmp;
  cmp["noise_scale"] = config.noise_scale;
  cmp["non_noisy"] = {{"map", c->report.map}, {"p_at_k", c->report.p_at_k}, {"ndcg_at_k", c->report.ndcg_at_k},
                      {"agreement", *c->agreement}};
  cmp["noisy"] = {{"map", z->report.map}, {"p_at_k", z->report.p_at_k}, {"ndcg_at_k", z->report.ndcg_at_k},
                  {"agreement", *z->agreement}};
  cmp["map_delta"] = z->report.map - c->report.map;
  dir.write("noise_comparison.json", cmp.dump(2) + "\n");
  return ev.finish();
}

void write_manifest(const RunConfig& config, const PipelineRequest& request, const SeedPlan& seeds,
                    const RunDir& dir) {
  nlohmann::ordered_json m;
  const auto path = dir.path("manifest.json");
  const auto canonical = canonical_config(config);
  const auto hash = hex64(fnv1a(canonical));
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
  if (fs::exists(path)) {
    try {
      const auto old = nlohmann::ordered_json::parse(read_file(path));
      if (old.value("config_hash", "") == hash && old.value("mode", "") == mode_name(request.mode)) {
        artifacts = old.at("artifacts");
      }
    } catch (const nlohmann::json::exception&) {
    }
  }
  for (const auto& [name, h] : dir.artifacts()) artifacts[name] = h;
  std::map<std::string, std::string> sorted;
  for (const auto& [name, h] : artifacts.items()) sorted[name] = h.get<std::string>();

  m["tool"] = "mimic";
  m["version"] = kVersion;
  m["mode"] = mode_name(request.mode);
  m["stage"] = stage_name(request.stage);
  m["kernel_isa"] = simd::isa_name(simd::active_kernels().isa);
  m["config_hash"] = hash;
  nlohmann::ordered_json cfg;
  std::string_view rest = canonical;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line = rest.substr(0, nl);
    rest = rest.substr(nl + 1);
    const auto eq = line.find(" = ");
    cfg[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
  }
  m["config"] = cfg;
  m["seeds"] = {{"master", seeds.master},
                {"weak_annotation", seeds.weak_annotation},
                {"partition", seeds.partition},
                {"soft_annotation", seeds.soft_annotation},
                {"label_noise", seeds.label_noise},
                {"student", seeds.student},
                {"eval_noise", seeds.eval_noise},
                {"teacher", seeds.teacher}};
  m["seed_offsets"] = {{"weak_annotation", 1}, {"partition", 2}, {"soft_annotation", 3}, {"label_noise", 4},
                       {"student", 5},         {"eval_noise", 6}, {"teacher", 100}};
  m["artifacts"] = sorted;
  write_file(path, m.dump(2) + "\n");
}

}  // namespace

const MetricRow* MetricTable::find(std::string_view slug) const {
  for (const auto& r : rows) {
    if (r.slug == slug) return &r;
  }
  return nullptr;
}

std::string format_table(const MetricTable& table) {
  std::size_t width = 5;
  for (const auto& r : table.rows) width = std::max(width, r.label.size());
  const auto k = std::to_string(table.k);
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("Model", width) + "  " + pad("MAP", 7) + "  " + pad("P@" + k, 7) + "  " +
                    pad("nDCG@" + k, 8) + "  Agreement\n";
  for (const auto& r : table.rows) {
    out += pad(r.label, width) + "  " + pad(fixed(r.report.map, 4), 7) + "  " + pad(fixed(r.report.p_at_k, 4), 7) +
           "  " + pad(fixed(r.report.ndcg_at_k, 4), 8) + "  " + (r.agreement ? fixed(*r.agreement, 4) : "-") + "\n";
  }
  for (const auto& n : table.notes) out += "\n" + n + "\n";
  return out;
}

std::string format_table_tsv(const MetricTable& table) {
  const auto k = std::to_string(table.k);
  std::string out = "model\tmap\tp_at_" + k + "\tndcg_at_" + k + "\tagreement\tqueries\n";
  for (const auto& r : table.rows) {
    out += r.slug + "\t" + fixed(r.report.map, 6) + "\t" + fixed(r.report.p_at_k, 6) + "\t" +
           fixed(r.report.ndcg_at_k, 6) + "\t" + (r.agreement ? fixed(*r.agreement, 6) : "-") + "\t" +
           std::to_string(r.report.query_count) + "\n";
  }
  return out;
}

std::string format_query_metrics(const eval::MetricReport& report) {
  std::string out;
  for (const auto& q : report.per_query) {
    out += q.query_id + "\t" + fixed(q.ap, 6) + "\t" + fixed(q.p_at_k, 6) + "\t" + fixed(q.ndcg_at_k, 6) + "\n";
  }
  out += "all\t" + fixed(report.map, 6) + "\t" + fixed(report.p_at_k, 6) + "\t" + fixed(report.ndcg_at_k, 6) + "\n";
  return out;
}

eval::RunList rerank_run(const corpus::InvertedIndex& index, const corpus::QuerySet& queries,
                         const corpus::PoolLabeler& labeler, std::size_t depth, std::size_t jobs) {
  std::vector<std::vector<eval::RunEntry>> ranked(queries.size());
  parallel_for(queries.size(), jobs, [&](std::size_t qi) {
    const auto terms = index.vocabulary().map_known(queries[qi].terms);
    const auto pool = corpus::bm25_retrieve(index, terms, depth);
    if (pool.empty()) return;
    const auto scores = labeler(qi, terms, pool);
    auto& entries = ranked[qi];
    entries.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) entries.push_back({std::string(index.doc_id(pool[i].doc)), scores[i]});
    std::sort(entries.begin(), entries.end(), [](const eval::RunEntry& a, const eval::RunEntry& b) {
      return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
    });
  });
  eval::RunList run;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    if (!ranked[qi].empty()) run[queries[qi].id] = std::move(ranked[qi]);
  }
  return run;
}

PipelineOutcome run_pipeline(const RunConfig& config, const PipelineRequest& request) {
  validate_for(config, request.mode, request.stage);
  if (request.out.empty()) throw InvalidArgument("no output directory given");
  fs::create_directories(request.out);
  fs::remove(request.out / "FAILED");
  const auto seeds = SeedPlan::from_master(*config.seed);
  RunDir dir(request.out);
  try {
    MetricTable table;
    switch (request.mode) {
      case Mode::kSupervised: table = run_single_teacher(config, true, dir, seeds); break;
      case Mode::kWeak: table = run_single_teacher(config, false, dir, seeds); break;
      case Mode::kDistill: table = run_distill(config, request.stage, dir, seeds); break;
      case Mode::kPate: table = run_pate(config, request.stage, dir, seeds); break;
    }
    write_manifest(config, request, seeds, dir);
    return {std::move(table), request.out};
  } catch (const std::exception& e) {
    write_file(request.out / "FAILED", std::string(mode_name(request.mode)) + " " +
                                           std::string(stage_name(request.stage)) + ": " + e.what() + "\n");
    throw;
  }
}

}  // namespace mimic::pipeline
