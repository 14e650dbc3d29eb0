#include <doctest.h>

#include "mimic/binary_io.hpp"
#include "mimic/pipeline/pipeline.hpp"
#include "mimic/synth/toy.hpp"
#include "test_support.hpp"

using namespace mimic;
using namespace mimic::pipeline;
namespace fs = std::filesystem;

namespace {

const char* kTinyModels = R"(
teacher.embedding_dim = 8
teacher.hidden_layers = 1
teacher.hidden_size = 8
teacher.dropout = 0.1
teacher.learning_rate = 0.01
teacher.batch_size = 16
teacher.epochs = 2
student.embedding_dim = 8
student.hidden_layers = 1
student.hidden_size = 6
student.dropout = 0
student.learning_rate = 0.01
student.batch_size = 16
student.epochs = 2
annotate.pool_size = 10
annotate.pairs_per_query = 6
privacy.n_partitions = 2
eval.rerank_depth = 20
run.seed = 3
)";

/// A small generated collection with a config next to it.
fs::path tiny_collection(const std::string& name) {
  const auto dir = test::scratch(name);
  synth::ToySpec spec;
  spec.topics = 4;
  spec.words_per_topic = 10;
  spec.background_words = 40;
  spec.docs = 80;
  spec.min_doc_length = 10;
  spec.max_doc_length = 20;
  spec.train_queries = 20;
  spec.unlabeled_queries = 30;
  spec.eval_queries = 6;
  synth::write_toy_collection(dir, synth::make_toy_collection(spec));
  write_file(dir / "run.conf", std::string(R"(paths.corpus = corpus.jsonl
paths.train_queries = train_queries.tsv
paths.train_qrels = train.qrels
paths.unlabeled_queries = unlabeled_queries.tsv
paths.eval_queries = eval_queries.tsv
paths.eval_qrels = eval.qrels
)") + kTinyModels);
  return dir;
}

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("defaults follow the reference architecture") {
  const auto c = parse_config("");
  CHECK(c.teacher.model == rank::RankModelConfig::teacher());
  CHECK(c.student.model == rank::RankModelConfig::student());
  CHECK(c.teacher.model.hidden_layers == 3);
  CHECK(c.teacher.model.dropout_keep == 0.8);
  CHECK(c.student.model.dropout_keep == 0.9);
  CHECK(c.teacher.model.batch_size == 512);
  CHECK(c.n_partitions == 3);
  CHECK(c.noise_scale == 0.05);
  CHECK(c.metric_k == 20);
  CHECK_FALSE(c.seed.has_value());
}

TEST_CASE("config parsing") {
  const auto c = parse_config("# comment\nteacher.dropout = 0.25  # trailing\nrun.seed = 9\neval.skip_empty = true\n"
                              "paths.corpus = c.jsonl\npaths.eval_qrels = /abs/q.qrels\n",
                              "/data/base");
  CHECK(c.teacher.model.dropout_keep == 0.75);
  CHECK(c.seed == 9u);
  CHECK(c.skip_empty);
  CHECK(c.paths.corpus == fs::path("/data/base/c.jsonl"));
  CHECK(c.paths.eval_qrels == fs::path("/abs/q.qrels"));
  CHECK_THROWS_WITH_AS(parse_config("run.seed = 1\n\nteacher.hiden_size = 3\n"), doctest::Contains("config line 3"),
                       InvalidArgument);
  CHECK_THROWS_WITH_AS(parse_config("teacher.dropout = 1.0\n"), doctest::Contains("config line 1"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("eval.k = -3\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("just words\n"), InvalidArgument);
  CHECK(parse_config(canonical_config(c)).teacher.model == c.teacher.model);
  CHECK(canonical_config(parse_config(canonical_config(c))) == canonical_config(c));
}

TEST_CASE("mode and stage names") {
  CHECK(parse_mode("pate") == Mode::kPate);
  CHECK(mode_name(Mode::kSupervised) == "supervised");
  CHECK(parse_stage("teachers") == Stage::kTeacher);
  CHECK_THROWS_AS(parse_mode("mimic"), InvalidArgument);
  CHECK_THROWS_AS(parse_stage("half"), InvalidArgument);
}

TEST_CASE("seed plan offsets") {
  const auto s = SeedPlan::from_master(1000);
  CHECK(s.master == 1000);
  CHECK(s.weak_annotation == 1001);
  CHECK(s.partition == 1002);
  CHECK(s.soft_annotation == 1003);
  CHECK(s.label_noise == 1004);
  CHECK(s.student == 1005);
  CHECK(s.eval_noise == 1006);
  CHECK(s.teacher == 1100);
}

TEST_CASE("validation reports what is missing") {
  const auto dir = tiny_collection("pipe_validate");
  auto c = read_config(dir / "run.conf");
  CHECK_NOTHROW(validate_for(c, Mode::kDistill, Stage::kAll));

  auto no_seed = c;
  no_seed.seed.reset();
  CHECK_THROWS_WITH_AS(validate_for(no_seed, Mode::kWeak, Stage::kAll), doctest::Contains("run.seed"), InvalidArgument);

  auto gone = c;
  gone.paths.corpus = dir / "nope.jsonl";
  CHECK_THROWS_WITH_AS(validate_for(gone, Mode::kWeak, Stage::kAll), doctest::Contains("nope.jsonl"), IoError);

  auto student_only = c;
  student_only.paths.train_queries = dir / "absent.tsv";
  student_only.paths.train_qrels = dir / "absent.qrels";
  CHECK_NOTHROW(validate_for(student_only, Mode::kDistill, Stage::kStudent));
  CHECK_NOTHROW(validate_for(student_only, Mode::kPate, Stage::kStudent));
  CHECK_THROWS_AS(validate_for(student_only, Mode::kDistill, Stage::kTeacher), IoError);

  auto supervised = c;
  supervised.paths.train_qrels = dir / "absent.qrels";
  CHECK_NOTHROW(validate_for(supervised, Mode::kWeak, Stage::kAll));
  CHECK_THROWS_AS(validate_for(supervised, Mode::kSupervised, Stage::kAll), IoError);

  CHECK_THROWS_AS(validate_for(c, Mode::kWeak, Stage::kStudent), InvalidArgument);
}

TEST_CASE("rerank_run orders by score then doc id") {
  const auto index = test::small_index();
  const auto qs = test::queries_of({"cat dog", "unknownword"});
  const corpus::PoolLabeler flat = [](std::size_t, std::span<const TermId>, std::span<const corpus::ScoredDoc> pool) {
    return std::vector<double>(pool.size(), 0.5);
  };
  const auto run = rerank_run(index, qs, flat, 5);
  REQUIRE(run.count("q0"));
  const auto& entries = run.at("q0");
  CHECK(entries.size() == 5);
  for (std::size_t i = 1; i < entries.size(); ++i) CHECK(entries[i - 1].doc_id < entries[i].doc_id);
  CHECK((run.count("q1") == 0 || run.at("q1").empty()));
}

TEST_CASE("table formatting") {
  MetricTable t;
  t.k = 10;
  MetricRow r{"BM25", "bm25", {}, std::nullopt};
  r.report.map = 0.5;
  r.report.p_at_k = 0.25;
  r.report.ndcg_at_k = 0.75;
  t.rows.push_back(r);
  t.rows.push_back({"Student", "student", {}, 0.875});
  t.notes.push_back("a note");
  const auto text = format_table(t);
  CHECK(text.find("P@10") != std::string::npos);
  CHECK(text.find("0.5000") != std::string::npos);
  CHECK(text.find("0.8750") != std::string::npos);
  CHECK(text.find("a note") != std::string::npos);
  CHECK(format_table_tsv(t).find("bm25") != std::string::npos);
  CHECK(t.find("student") == &t.rows[1]);
  CHECK(t.find("nothing") == nullptr);
}

TEST_CASE("weak and distill runs are reproducible") {
  const auto dir = tiny_collection("pipe_runs");
  const auto config = read_config(dir / "run.conf");

  const auto weak = run_pipeline(config, {Mode::kWeak, Stage::kAll, dir / "weak"});
  CHECK(weak.table.find("bm25") != nullptr);
  CHECK(weak.table.find("teacher") != nullptr);
  CHECK(fs::exists(dir / "weak" / "teacher.ckpt"));
  CHECK(fs::exists(dir / "weak" / "manifest.json"));
  CHECK_FALSE(fs::exists(dir / "weak" / "FAILED"));

  const auto d1 = run_pipeline(config, {Mode::kDistill, Stage::kAll, dir / "d1"});
  const auto d2 = run_pipeline(config, {Mode::kDistill, Stage::kAll, dir / "d2"});
  for (const char* f : {"index.bin", "teacher.ckpt", "student.ckpt", "soft.tsv", "metrics.txt", "runs/student.run",
                        "metrics/student.tsv", "manifest.json"}) {
    INFO(f);
    CHECK(slurp(dir / "d1" / f) == slurp(dir / "d2" / f));
  }
  const auto* student = d1.table.find("student");
  REQUIRE(student != nullptr);
  CHECK(student->agreement.has_value());

  // Student stage alone reproduces the student from the teacher artifacts.
  fs::create_directories(dir / "d3");
  fs::copy_file(dir / "d1" / "index.bin", dir / "d3" / "index.bin");
  fs::copy_file(dir / "d1" / "teacher.ckpt", dir / "d3" / "teacher.ckpt");
  auto student_config = config;
  student_config.paths.train_queries = dir / "missing.tsv";
  student_config.paths.train_qrels = dir / "missing.qrels";
  run_pipeline(student_config, {Mode::kDistill, Stage::kStudent, dir / "d3"});
  CHECK(slurp(dir / "d3" / "student.ckpt") == slurp(dir / "d1" / "student.ckpt"));
}

TEST_CASE("pate run writes the ensemble and both aggregate rows") {
  const auto dir = tiny_collection("pipe_pate");
  const auto config = read_config(dir / "run.conf");
  const auto out = run_pipeline(config, {Mode::kPate, Stage::kAll, dir / "p"});
  CHECK(fs::exists(dir / "p" / "ensemble" / "teacher_0.ckpt"));
  CHECK(fs::exists(dir / "p" / "ensemble" / "teacher_1.ckpt"));
  CHECK(fs::exists(dir / "p" / "shards" / "shard_0.tsv"));
  const auto* agg = out.table.find("aggregate");
  REQUIRE(agg != nullptr);
  REQUIRE(agg->agreement.has_value());
  CHECK(*agg->agreement == 1.0);
  CHECK(out.table.find("aggregate_noisy") != nullptr);
  CHECK(out.table.find("student") != nullptr);
}

TEST_CASE("a failing run leaves a FAILED marker") {
  const auto dir = tiny_collection("pipe_fail");
  write_file(dir / "vectors.txt", "1 5\nfoo 1 2 3 4 5\n");
  auto config = read_config(dir / "run.conf");
  config.paths.embeddings = dir / "vectors.txt";
  CHECK_THROWS_AS(run_pipeline(config, {Mode::kWeak, Stage::kAll, dir / "out"}), InvalidArgument);
  CHECK(fs::exists(dir / "out" / "FAILED"));
  CHECK(slurp(dir / "out" / "FAILED").find("dimension") != std::string::npos);
}
