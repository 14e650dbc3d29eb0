// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mimic/binary_io.hpp"
#include "mimic/corpus/annotate.hpp"
#include "mimic/eval/metrics.hpp"
#include "mimic/nn/gradcheck.hpp"
#include "mimic/pate/pate.hpp"
#include "mimic/pipeline/pipeline.hpp"
#include "mimic/rank/model.hpp"

using namespace mimic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(MIMIC_SCRATCH_DIR) / "acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

pipeline::RunConfig toy_config() { return pipeline::read_config(fs::path(MIMIC_TOY_DIR) / "toy.conf"); }

pipeline::PipelineOutcome run(const pipeline::RunConfig& c, pipeline::Mode mode, const fs::path& out,
                              pipeline::Stage stage = pipeline::Stage::kAll) {
  return pipeline::run_pipeline(c, {mode, stage, out});
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && read_file(a) == read_file(b);
}

/// Relative paths of every regular file under dir, sorted.
std::vector<std::string> tree(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> words{"alpha", "beta",  "gamma", "delta", "eps", "zeta",  "eta",
                                       "theta", "iota",  "kappa", "lam",   "mu",  "nu",    "xi"};
  std::size_t instances = 0, checked = 0, kinks = 0;
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 24; ++trial) {
    Rng rng(derive_seed(2024, trial));
    std::vector<corpus::Document> docs;
    for (int d = 0; d < 10; ++d) {
      std::string text;
      for (std::size_t i = 0, n = 2 + rng.below(6); i < n; ++i) text += words[rng.below(words.size())] + " ";
      docs.push_back({"d" + std::to_string(d), text});
    }
    const auto index = corpus::build_index(docs);
    rank::RankModelConfig c;
    c.embedding_dim = 2 + rng.below(5);
    c.hidden_layers = 1 + rng.below(3);
    c.hidden_size = 2 + rng.below(7);
    c.dropout_keep = 1.0;
    auto params = rank::init_params(c, index, {std::nullopt, rng.next()});
    for (auto& w : params.term_weights) w += rng.uniform() * 0.5;
    for (auto& l : params.dense) {
      for (auto& b : l.bias) b = rng.uniform() * 0.2 - 0.1;
    }

    std::vector<TrainingInstance> batch;
    for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) {
      TrainingInstance inst;
      const auto a = static_cast<DocIndex>(rng.below(index.doc_count()));
      const auto b = static_cast<DocIndex>(rng.below(index.doc_count()));
      for (std::size_t k = 0, m = 1 + rng.below(3); k < m; ++k) {
        inst.query.push_back(static_cast<TermId>(rng.below(index.vocabulary().size())));
      }
      inst.doc1.assign(index.doc_terms(a).begin(), index.doc_terms(a).end());
      inst.doc2.assign(index.doc_terms(b).begin(), index.doc_terms(b).end());
      inst.s1 = rng.uniform();
      inst.s2 = inst.s1 + (rng.below(2) == 0 ? 0.5 : -0.5);
      batch.push_back(std::move(inst));
    }

    auto grad = rank::ModelGradient::zeros_like(params);
    rank::batch_loss_and_gradient(params, batch, grad);
    nn::GradCheckOptions o;
    o.h = 1e-5;
    o.tolerance = 1e-4;
    o.coords_per_block = 16;
    o.seed = trial;
    const auto r = nn::finite_difference_check([&] { return rank::batch_loss(params, batch); },
                                               rank::parameter_blocks(params), rank::gradient_blocks(grad), o,
                                               [&] { return rank::kink_signature(params, batch); });
    ++instances;
    checked += r.checked;
    kinks += r.skipped_kinks;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) {
      return {false, "instance " + std::to_string(trial) + " block " + std::to_string(r.worst_block) +
                         " rel err " + fmt("%.3g", r.max_rel_error)};
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = instances >= 20 && checked > 0 && worst < 1e-4 && secs < 60.0;
  return {ok, std::to_string(instances) + " instances, " + std::to_string(checked) + " coordinates (" +
                  std::to_string(kinks) + " at kinks), max rel err " + fmt("%.3g", worst) + ", " +
                  fmt("%.2fs", secs)};
}

// ---------------------------------------------------------------------------

struct BruteForce {
  double ap, p20, ndcg20;
};

/// Straight from the definitions, no shared code with the library.
BruteForce brute(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades) {
  const auto grade = [&](const std::string& d) {
    const auto it = grades.find(d);
    return it == grades.end() ? 0 : it->second;
  };
  int relevant = 0;
  for (const auto& [d, g] : grades) relevant += g > 0;
  double ap = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (grade(ranked[i]) > 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  ap = relevant ? ap / relevant : 0.0;
  int top = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(20, ranked.size()); ++i) top += grade(ranked[i]) > 0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(20, ranked.size()); ++i) {
    dcg += grade(ranked[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [d, g] : grades) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(20, ideal.size()); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return {ap, top / 20.0, idcg > 0 ? dcg / idcg : 0.0};
}

Outcome metric_oracle() {
  const std::map<std::string, std::vector<std::string>> ranked{
      {"q1", {"a", "b", "c"}},
      {"q2", {"a", "b", "c"}},
      {"q3", {"x1", "r1", "x2", "x3", "r2", "x4", "x5", "x6", "r3", "x7", "x8", "x9", "x10", "x11", "x12",
              "x13", "x14", "x15", "x16", "x17", "x18", "r4"}}};
  const std::map<std::string, std::map<std::string, int>> grades{
      {"q1", {{"a", 1}, {"c", 1}}},
      {"q2", {{"a", 1}, {"c", 1}, {"e", 1}}},
      {"q3", {{"r1", 3}, {"r2", 1}, {"r3", 2}, {"r4", 1}, {"r5", 2}, {"x2", 0}}}};

  eval::RunList run;
  eval::Qrels qrels;
  for (const auto& [q, docs] : ranked) {
    double s = 100.0;
    for (const auto& d : docs) run[q].push_back({d, s--});
    for (const auto& [d, g] : grades.at(q)) qrels[q][d] = g;
  }
  const auto report = eval::evaluate(run, qrels, {20, false});

  double worst = 0.0;
  BruteForce mean{0, 0, 0};
  for (const auto& m : report.per_query) {
    const auto b = brute(ranked.at(m.query_id), grades.at(m.query_id));
    worst = std::max({worst, std::abs(m.ap - b.ap), std::abs(m.p_at_k - b.p20), std::abs(m.ndcg_at_k - b.ndcg20)});
    mean.ap += b.ap / 3;
    mean.p20 += b.p20 / 3;
    mean.ndcg20 += b.ndcg20 / 3;
  }
  worst = std::max({worst, std::abs(report.map - mean.ap), std::abs(report.p_at_k - mean.p20),
                    std::abs(report.ndcg_at_k - mean.ndcg20)});
  const auto q1 = brute(ranked.at("q1"), grades.at("q1"));
  const auto q2 = brute(ranked.at("q2"), grades.at("q2"));
  const bool worked = std::abs(q1.ap - 5.0 / 6.0) < 1e-12 && std::abs(q2.ndcg20 - 0.7039) < 5e-5;
  const bool ok = report.per_query.size() == 3 && worst <= 1e-9 && worked;
  return {ok, "max abs diff " + fmt("%.3g", worst) + ", AP(q1) " + fmt("%.4f", report.per_query[0].ap) +
                  ", nDCG@20(q2) " + fmt("%.4f", report.per_query[1].ndcg_at_k)};
}

// ---------------------------------------------------------------------------

Outcome laplace() {
  std::string detail;
  bool ok = true;
  for (const double b : {0.05, 1.0}) {
    pate::NoiseStream noise(b, 20240601);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    std::vector<double> xs(n);
    for (auto& x : xs) {
      x = noise.next();
      sum += x;
    }
    const double mean = sum / n;
    for (const double x : xs) sq += (x - mean) * (x - mean);
    const double var = sq / (n - 1);
    const double target = 2 * b * b;
    const bool pass = std::abs(mean) <= 0.02 * b && std::abs(var - target) <= 0.05 * target;
    ok = ok && pass;
    detail += (detail.empty() ? "" : "; ") + std::string("b=") + fmt("%g", b) + " mean " + fmt("%.5f", mean) +
              " var " + fmt("%.5f", var) + " (target " + fmt("%.5f", target) + ")";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Outcome distill_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run(toy_config(), pipeline::Mode::kDistill, scratch("distill"));
  const double secs = seconds_since(t0);
  const auto* teacher = out.table.find("teacher");
  const auto* student = out.table.find("student");
  if (!teacher || !student || !student->agreement) return {false, "missing teacher or student row"};
  const double rel = std::abs(student->report.map - teacher->report.map) / teacher->report.map;
  const bool ok = rel <= 0.10 && *student->agreement >= 0.85 && secs < 600.0;
  return {ok, "teacher MAP " + fmt("%.4f", teacher->report.map) + ", student MAP " +
                  fmt("%.4f", student->report.map) + " (" + fmt("%.1f%%", 100 * rel) + " relative), agreement " +
                  fmt("%.4f", *student->agreement) + ", " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------

Outcome pate_reduction() {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = toy_config();
  c.n_partitions = 1;
  c.noise_scale = 0.0;
  const auto d = scratch("reduce_distill");
  const auto p = scratch("reduce_pate");
  run(c, pipeline::Mode::kDistill, d);
  run(c, pipeline::Mode::kPate, p);
  const double secs = seconds_since(t0);
  std::string detail;
  bool ok = secs < 600.0;
  for (const char* f : {"student.ckpt", "metrics/student.tsv", "runs/student.run", "soft.tsv"}) {
    const bool same = same_bytes(d / f, p / f);
    ok = ok && same;
    detail += std::string(f) + (same ? " identical" : " DIFFERS") + ", ";
  }
  return {ok, detail + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------

Outcome noise_report() {
  const auto dir = scratch("pate_n3");
  const auto noisy = run(toy_config(), pipeline::Mode::kPate, dir);
  std::string missing;
  for (const char* slug : {"teachers_avg", "aggregate", "aggregate_noisy", "student"}) {
    if (!noisy.table.find(slug)) missing += std::string(" ") + slug;
  }
  if (!missing.empty()) return {false, "missing rows:" + missing};
  const auto text = read_file(dir / "metrics.txt");
  const bool noted = text.find("noisy vs non-noisy") != std::string::npos && fs::exists(dir / "noise_comparison.json");

  auto quiet_config = toy_config();
  quiet_config.noise_scale = 0.0;
  const auto quiet = run(quiet_config, pipeline::Mode::kPate, scratch("pate_n3_quiet"));
  const auto* agg = quiet.table.find("aggregate");
  const bool exact = agg && agg->agreement && *agg->agreement == 1.0;

  const auto* clean = noisy.table.find("aggregate");
  const auto* dirty = noisy.table.find("aggregate_noisy");
  return {noted && exact,
          std::string(noted ? "comparison recorded" : "comparison MISSING") + ", non-noisy agreement at b=0 " +
              (agg && agg->agreement ? fmt("%.6f", *agg->agreement) : "n/a") + "; at b=0.05 MAP noisy " +
              fmt("%.4f", dirty->report.map) + " vs non-noisy " + fmt("%.4f", clean->report.map)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  std::string detail;
  bool ok = true;
  const std::vector<std::pair<pipeline::Mode, std::string>> modes{{pipeline::Mode::kSupervised, "supervised"},
                                                                   {pipeline::Mode::kWeak, "weak"},
                                                                   {pipeline::Mode::kDistill, "distill"},
                                                                   {pipeline::Mode::kPate, "pate"}};
  for (const auto& [mode, name] : modes) {
    const auto a = scratch("repeat_" + name + "_a");
    const auto b = scratch("repeat_" + name + "_b");
    run(toy_config(), mode, a);
    run(toy_config(), mode, b);
    const auto files = tree(a);
    bool same = files == tree(b);
    std::size_t compared = 0;
    for (const auto& f : files) {
      if (!same) break;
      same = same_bytes(a / f, b / f);
      ++compared;
    }
    const bool has_outputs = std::any_of(files.begin(), files.end(), [](const std::string& f) {
      return f.size() > 5 && f.compare(f.size() - 5, 5, ".ckpt") == 0;
    }) && fs::exists(a / "metrics.txt");
    ok = ok && same && has_outputs;
    detail += (detail.empty() ? "" : ", ") + name + (same ? " " : " DIFFERS ") + std::to_string(compared) + " files";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Outcome privacy_hygiene() {
  const auto dir = scratch("pate_staged");
  auto c = toy_config();
  run(c, pipeline::Mode::kPate, dir, pipeline::Stage::kTeacher);
  if (!fs::exists(dir / "shards")) return {false, "teacher stage wrote no shards"};
  fs::remove_all(dir / "shards");
  fs::remove(dir / "weak.tsv");
  c.paths.train_queries = dir / "deleted_train_queries.tsv";
  c.paths.train_qrels = dir / "deleted_train.qrels";
  run(c, pipeline::Mode::kPate, dir, pipeline::Stage::kStudent);
  const bool trained = fs::exists(dir / "student.ckpt");
  const auto reference = fs::path(MIMIC_SCRATCH_DIR) / "acceptance" / "pate_n3" / "student.ckpt";
  const bool matches = same_bytes(dir / "student.ckpt", reference);
  return {trained && matches, std::string("student stage ran without shards or training queries; checkpoint ") +
                                  (matches ? "matches" : "DIFFERS FROM") + " the single-invocation run"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_check},   {"metric oracle equivalence", metric_oracle},
      {"laplace mechanism", laplace},             {"distillation fidelity", distill_fidelity},
      {"pate reduction", pate_reduction},         {"noise degradation report", noise_report},
      {"determinism", determinism},               {"privacy-path hygiene", privacy_hygiene}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
