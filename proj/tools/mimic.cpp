// mimic: command-line front end for indexing, annotation, teacher/student
// training and evaluation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mimic/binary_io.hpp"
#include "mimic/corpus/io.hpp"
#include "mimic/distill/distill.hpp"
#include "mimic/pipeline/pipeline.hpp"
#include "mimic/synth/toy.hpp"

namespace fs = std::filesystem;
using namespace mimic;

namespace {

constexpr int kOk = 0;
constexpr int kPipelineError = 1;
constexpr int kUsageError = 2;

/// Raised for problems the user fixes on the command line.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
};

pipeline::RunConfig load_config(const Globals& g) {
  pipeline::RunConfig config;
  if (!g.config.empty()) {
    if (!fs::is_regular_file(g.config)) throw IoError("cannot open " + g.config);
    try {
      config = pipeline::read_config(g.config);
    } catch (const InvalidArgument& e) {
      throw UsageError(g.config + ": " + e.what());
    }
  }
  if (g.seed) config.seed = g.seed;
  if (g.jobs) config.jobs = *g.jobs;
  return config;
}

std::string pick(const std::string& flag, const fs::path& from_config, std::string_view what) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config.string();
  throw UsageError(std::string("missing ") + std::string(what));
}

std::string require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

corpus::InvertedIndex index_from(const std::string& index_path, const pipeline::RunConfig& config) {
  if (!index_path.empty()) return corpus::read_index(index_path);
  if (config.paths.corpus.empty()) throw UsageError("give --index or a config with paths.corpus");
  return corpus::build_index(corpus::read_corpus(config.paths.corpus));
}

int run_stage(const Globals& g, pipeline::Mode mode, pipeline::Stage stage) {
  const auto config = load_config(g);
  pipeline::PipelineRequest request{mode, stage, require_out(g)};
  try {
    pipeline::validate_for(config, mode, stage);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto outcome = pipeline::run_pipeline(config, request);
  std::cout << pipeline::format_table(outcome.table);
  std::cerr << "run directory: " << outcome.run_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-student neural ranking with private aggregation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pipeline::kVersion));

  Globals g;
  app.add_option("--config", g.config, "Run configuration file (section.key = value)");
  app.add_option("--seed", g.seed, "Master seed; overrides run.seed");
  app.add_option("--jobs", g.jobs, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or run directory");

  std::string corpus_path, queries_path, index_path, teacher_path, checkpoint_path, run_path, qrels_path;
  std::size_t pool = 100, pairs = 20, retries = 0, depth = 100, cutoff = 1000, k = 20;
  std::uint64_t annotate_seed = 0;
  bool skip_empty = false, per_query = false;
  std::string mode_arg = "weak", stage_arg = "all";

  auto* build = app.add_subcommand("build-index", "Build and serialize the inverted index");
  build->add_option("--corpus", corpus_path, "JSONL corpus; defaults to paths.corpus");

  auto* annotate = app.add_subcommand("annotate", "Label query pools with BM25 or a teacher checkpoint");
  annotate->add_option("--index", index_path, "Index file; built from paths.corpus when absent");
  annotate->add_option("--queries", queries_path, "Query TSV")->required();
  annotate->add_option("--teacher", teacher_path, "Teacher checkpoint for soft labels");
  annotate->add_option("--pool", pool, "BM25 pool size")->check(CLI::Range(2, 1 << 30));
  annotate->add_option("--pairs", pairs, "Pairs per query")->check(CLI::PositiveNumber);
  annotate->add_option("--max-tie-retries", retries, "Tied draws tolerated per query (0: same as --pairs)");
  annotate->add_option("--sample-seed", annotate_seed, "Pair sampling seed; defaults to --seed");

  auto* train = app.add_subcommand("train-teacher", "Run the teacher stage of the distill pipeline");
  auto* distill_cmd = app.add_subcommand("distill", "Teacher-to-student distillation pipeline");
  distill_cmd->add_option("--stage", stage_arg, "teacher, student or all")
      ->check(CLI::IsMember({"teacher", "student", "all"}));
  auto* pate_cmd = app.add_subcommand("pate", "Teacher ensemble with noisy aggregation");
  pate_cmd->add_option("--stage", stage_arg, "teachers, student or all")
      ->check(CLI::IsMember({"teachers", "student", "all"}));
  auto* pipe = app.add_subcommand("pipeline", "Run a full pipeline mode");
  pipe->add_option("--mode", mode_arg, "supervised, weak, distill or pate")
      ->check(CLI::IsMember({"supervised", "weak", "distill", "pate"}));
  pipe->add_option("--stage", stage_arg, "teacher, student or all (distill and pate)")
      ->check(CLI::IsMember({"teacher", "teachers", "student", "all"}));

  auto* rank_cmd = app.add_subcommand("rank", "Re-rank BM25 candidates with a checkpoint and write a TREC run");
  rank_cmd->add_option("--index", index_path, "Index file; built from paths.corpus when absent");
  rank_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  rank_cmd->add_option("--queries", queries_path, "Query TSV; defaults to paths.eval_queries");
  rank_cmd->add_option("--depth", depth, "BM25 candidates per query")->check(CLI::PositiveNumber);
  rank_cmd->add_option("--cutoff", cutoff, "Entries kept per query")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "MAP, P@k and nDCG@k of a run file");
  evaluate->add_option("--run", run_path, "TREC run file")->required();
  evaluate->add_option("--qrels", qrels_path, "Qrels file; defaults to paths.eval_qrels");
  evaluate->add_option("--k", k, "Cutoff for P@k and nDCG@k")->check(CLI::PositiveNumber);
  evaluate->add_flag("--skip-empty", skip_empty, "Leave queries without relevant documents out of the means");
  evaluate->add_flag("--per-query", per_query, "Print per-query values");

  auto* toy = app.add_subcommand("make-toy", "Write the synthetic toy collection and word vectors");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (*build) {
      const auto config = load_config(g);
      const auto index = corpus::build_index(corpus::read_corpus(pick(corpus_path, config.paths.corpus, "--corpus")));
      corpus::write_index(require_out(g), index);
      std::cerr << index.doc_count() << " documents, " << index.vocabulary().size() << " terms\n";
    } else if (*annotate) {
      const auto config = load_config(g);
      const auto index = index_from(index_path, config);
      const auto queries = corpus::read_queries(queries_path);
      const corpus::AnnotateOptions options{pool, pairs, annotate_seed != 0 ? annotate_seed : config.seed.value_or(0),
                                            retries, config.jobs};
      corpus::AnnotationResult result;
      if (teacher_path.empty()) {
        result = corpus::annotate_queries(index, queries, options);
      } else {
        const auto teacher = rank::load_checkpoint(teacher_path);
        result = corpus::annotate_with_labeler(index, queries, options,
                                               distill::model_labeler(teacher.params, index));
      }
      write_file(require_out(g), corpus::format_annotations(result.instances));
      std::cerr << result.report.pairs_emitted << " pairs from " << result.report.queries_total << " queries ("
                << result.report.skipped_queries.size() << " skipped, " << result.report.pairs_discarded
                << " tied draws discarded)\n";
    } else if (*train) {
      return run_stage(g, pipeline::Mode::kDistill, pipeline::Stage::kTeacher);
    } else if (*distill_cmd) {
      return run_stage(g, pipeline::Mode::kDistill, pipeline::parse_stage(stage_arg));
    } else if (*pate_cmd) {
      return run_stage(g, pipeline::Mode::kPate, pipeline::parse_stage(stage_arg));
    } else if (*pipe) {
      return run_stage(g, pipeline::parse_mode(mode_arg), pipeline::parse_stage(stage_arg));
    } else if (*rank_cmd) {
      const auto config = load_config(g);
      const auto index = index_from(index_path, config);
      const auto model = rank::load_checkpoint(checkpoint_path);
      const auto queries = corpus::read_queries(pick(queries_path, config.paths.eval_queries, "--queries"));
      auto run = pipeline::rerank_run(index, queries, distill::model_labeler(model.params, index), depth, config.jobs);
      for (auto& [qid, entries] : run) {
        if (entries.size() > cutoff) entries.resize(cutoff);
      }
      write_file(require_out(g), eval::format_run(run, "mimic"));
    } else if (*evaluate) {
      const auto config = load_config(g);
      const auto report =
          eval::evaluate_run(run_path, pick(qrels_path, config.paths.eval_qrels, "--qrels"), {k, skip_empty});
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      if (per_query) std::cout << pipeline::format_query_metrics(report);
      std::printf("queries\t%zu\nmap\t%.4f\nP@%zu\t%.4f\nnDCG@%zu\t%.4f\n", report.query_count, report.map, k,
                  report.p_at_k, k, report.ndcg_at_k);
    } else if (*toy) {
      synth::ToySpec spec;
      if (g.seed) spec.seed = *g.seed;
      const fs::path dir = require_out(g);
      const auto collection = synth::make_toy_collection(spec);
      synth::write_toy_collection(dir, collection);
      write_file(dir / "vectors.txt", synth::make_toy_embeddings(collection, {}));
      std::cerr << "wrote " << collection.docs.size() << " documents to " << dir.string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "mimic: " << e.what() << "\n";
    return kUsageError;
  } catch (const IoError& e) {
    std::cerr << "mimic: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "mimic: " << e.what() << "\n";
    return kPipelineError;
  }
  return kOk;
}
