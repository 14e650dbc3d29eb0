#include "mimic/pipeline/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "mimic/binary_io.hpp"

namespace mimic::pipeline {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw InvalidArgument("expected a non-negative integer");
  return out;
}

double to_double(std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
    throw InvalidArgument("expected a finite number");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("expected true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

void add_model_keys(std::vector<std::pair<std::string, Key>>& keys, const std::string& prefix,
                    ModelSection RunConfig::*section) {
  auto model = [section](RunConfig& c) -> rank::RankModelConfig& { return (c.*section).model; };
  auto cmodel = [section](const RunConfig& c) -> const rank::RankModelConfig& { return (c.*section).model; };
  keys.push_back({prefix + ".embedding_dim",
                  {[=](RunConfig& c, std::string_view v) { model(c).embedding_dim = to_u64(v); },
                   [=](const RunConfig& c) { return std::to_string(cmodel(c).embedding_dim); }}});
  keys.push_back({prefix + ".hidden_layers",
                  {[=](RunConfig& c, std::string_view v) { model(c).hidden_layers = to_u64(v); },
                   [=](const RunConfig& c) { return std::to_string(cmodel(c).hidden_layers); }}});
  keys.push_back({prefix + ".hidden_size",
                  {[=](RunConfig& c, std::string_view v) { model(c).hidden_size = to_u64(v); },
                   [=](const RunConfig& c) { return std::to_string(cmodel(c).hidden_size); }}});
  keys.push_back({prefix + ".dropout",
                  {[=](RunConfig& c, std::string_view v) {
                     const double rate = to_double(v);
                     if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
                     model(c).dropout_keep = 1.0 - rate;
                   },
                   [=](const RunConfig& c) { return fmt(1.0 - cmodel(c).dropout_keep); }}});
  keys.push_back({prefix + ".learning_rate",
                  {[=](RunConfig& c, std::string_view v) { model(c).learning_rate = to_double(v); },
                   [=](const RunConfig& c) { return fmt(cmodel(c).learning_rate); }}});
  keys.push_back({prefix + ".batch_size",
                  {[=](RunConfig& c, std::string_view v) { model(c).batch_size = to_u64(v); },
                   [=](const RunConfig& c) { return std::to_string(cmodel(c).batch_size); }}});
  keys.push_back({prefix + ".train_embeddings",
                  {[=](RunConfig& c, std::string_view v) { model(c).train_embeddings = to_bool(v); },
                   [=](const RunConfig& c) { return std::string(cmodel(c).train_embeddings ? "true" : "false"); }}});
  keys.push_back({prefix + ".train_term_weights",
                  {[=](RunConfig& c, std::string_view v) { model(c).train_term_weights = to_bool(v); },
                   [=](const RunConfig& c) {
                     return std::string(cmodel(c).train_term_weights ? "true" : "false");
                   }}});
  keys.push_back({prefix + ".epochs",
                  {[=](RunConfig& c, std::string_view v) { (c.*section).epochs = to_u64(v); },
                   [=](const RunConfig& c) { return std::to_string((c.*section).epochs); }}});
}

template <typename T>
Key number_key(T RunConfig::*field) {
  return {[field](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, double>) {
              c.*field = to_double(v);
            } else {
              c.*field = static_cast<T>(to_u64(v));
            }
          },
          [field](const RunConfig& c) {
            if constexpr (std::is_same_v<T, double>) {
              return fmt(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

Key path_key(std::filesystem::path RunConfig::Paths::*field) {
  return {[field](RunConfig& c, std::string_view v) { c.paths.*field = std::filesystem::path(v); },
          [field](const RunConfig& c) { return (c.paths.*field).string(); }};
}

const std::vector<std::pair<std::string, Key>>& key_table() {
  static const auto table = [] {
    std::vector<std::pair<std::string, Key>> keys;
    keys.push_back({"paths.corpus", path_key(&RunConfig::Paths::corpus)});
    keys.push_back({"paths.train_queries", path_key(&RunConfig::Paths::train_queries)});
    keys.push_back({"paths.train_qrels", path_key(&RunConfig::Paths::train_qrels)});
    keys.push_back({"paths.unlabeled_queries", path_key(&RunConfig::Paths::unlabeled_queries)});
    keys.push_back({"paths.eval_queries", path_key(&RunConfig::Paths::eval_queries)});
    keys.push_back({"paths.eval_qrels", path_key(&RunConfig::Paths::eval_qrels)});
    keys.push_back({"paths.embeddings", path_key(&RunConfig::Paths::embeddings)});
    add_model_keys(keys, "teacher", &RunConfig::teacher);
    keys.push_back({"teacher.supervision",
                    {[](RunConfig& c, std::string_view v) {
                       if (v == "weak") {
                         c.supervision = Supervision::kWeak;
                       } else if (v == "supervised") {
                         c.supervision = Supervision::kSupervised;
                       } else {
                         throw InvalidArgument("expected weak or supervised");
                       }
                     },
                     [](const RunConfig& c) {
                       return std::string(c.supervision == Supervision::kWeak ? "weak" : "supervised");
                     }}});
    add_model_keys(keys, "student", &RunConfig::student);
    keys.push_back({"annotate.pool_size", number_key(&RunConfig::pool_size)});
    keys.push_back({"annotate.pairs_per_query", number_key(&RunConfig::pairs_per_query)});
    keys.push_back({"annotate.max_tie_retries", number_key(&RunConfig::max_tie_retries)});
    keys.push_back({"privacy.n_partitions", number_key(&RunConfig::n_partitions)});
    keys.push_back({"privacy.noise_scale", number_key(&RunConfig::noise_scale)});
    keys.push_back({"eval.rerank_depth", number_key(&RunConfig::rerank_depth)});
    keys.push_back({"eval.k", number_key(&RunConfig::metric_k)});
    keys.push_back({"eval.skip_empty",
                    {[](RunConfig& c, std::string_view v) { c.skip_empty = to_bool(v); },
                     [](const RunConfig& c) { return std::string(c.skip_empty ? "true" : "false"); }}});
    keys.push_back({"run.seed",
                    {[](RunConfig& c, std::string_view v) { c.seed = to_u64(v); },
                     [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }}});
    keys.push_back({"run.jobs", number_key(&RunConfig::jobs)});
    return keys;
  }();
  return table;
}

void require_file(const std::filesystem::path& path, std::string_view key) {
  if (path.empty()) throw InvalidArgument(std::string(key) + " is not set");
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("cannot open " + path.string() + " (" + std::string(key) + ")");
  }
}

}  // namespace

Mode parse_mode(std::string_view name) {
  if (name == "supervised") return Mode::kSupervised;
  if (name == "weak") return Mode::kWeak;
  if (name == "distill") return Mode::kDistill;
  if (name == "pate") return Mode::kPate;
  throw InvalidArgument("unknown mode '" + std::string(name) + "'");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kSupervised: return "supervised";
    case Mode::kWeak: return "weak";
    case Mode::kDistill: return "distill";
    case Mode::kPate: return "pate";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "all") return Stage::kAll;
  if (name == "teacher" || name == "teachers") return Stage::kTeacher;
  if (name == "student") return Stage::kStudent;
  throw InvalidArgument("unknown stage '" + std::string(name) + "'");
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kAll: return "all";
    case Stage::kTeacher: return "teacher";
    case Stage::kStudent: return "student";
  }
  return "?";
}

std::optional<std::filesystem::path> RunConfig::embedding_file() const {
  if (paths.embeddings.empty()) return std::nullopt;
  return paths.embeddings;
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  std::map<std::string_view, const Key*> lookup;
  for (const auto& [name, key] : key_table()) lookup.emplace(name, &key);
  RunConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument(where + ": expected key = value");
    const auto name = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = lookup.find(name);
    if (it == lookup.end()) throw InvalidArgument(where + ": unknown key '" + std::string(name) + "'");
    try {
      it->second->set(config, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + ": " + std::string(name) + ": " + e.what());
    }
  }
  if (!base_dir.empty()) {
    for (auto* p : {&config.paths.corpus, &config.paths.train_queries, &config.paths.train_qrels,
                    &config.paths.unlabeled_queries, &config.paths.eval_queries, &config.paths.eval_qrels,
                    &config.paths.embeddings}) {
      if (!p->empty() && p->is_relative()) *p = (base_dir / *p).lexically_normal();
    }
  }
  return config;
}

RunConfig read_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::string canonical_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, key] : key_table()) out += name + " = " + key.get(config) + "\n";
  return out;
}

void validate_for(const RunConfig& config, Mode mode, Stage stage) {
  if (!config.seed) throw InvalidArgument("run.seed is required");
  if (config.pool_size < 2) throw InvalidArgument("annotate.pool_size must be at least 2");
  if (config.pairs_per_query == 0) throw InvalidArgument("annotate.pairs_per_query must be positive");
  if (config.rerank_depth == 0) throw InvalidArgument("eval.rerank_depth must be positive");
  if (config.metric_k == 0) throw InvalidArgument("eval.k must be positive");
  pate::PrivacyConfig{config.n_partitions, config.noise_scale, 0}.validate();

  const bool staged = mode == Mode::kDistill || mode == Mode::kPate;
  if (!staged && stage != Stage::kAll) {
    throw InvalidArgument(std::string(mode_name(mode)) + " mode has no separate stages");
  }
  const bool teacher_side = stage != Stage::kStudent;
  const bool student_side = staged && stage != Stage::kTeacher;
  if (teacher_side) {
    config.teacher.model.validate();
    require_file(config.paths.corpus, "paths.corpus");
    require_file(config.paths.train_queries, "paths.train_queries");
    const bool supervised = mode == Mode::kSupervised || (staged && config.supervision == Supervision::kSupervised);
    if (supervised) require_file(config.paths.train_qrels, "paths.train_qrels");
  }
  if (student_side) {
    config.student.model.validate();
    require_file(config.paths.unlabeled_queries, "paths.unlabeled_queries");
  }
  require_file(config.paths.eval_queries, "paths.eval_queries");
  require_file(config.paths.eval_qrels, "paths.eval_qrels");
  if (!config.paths.embeddings.empty()) require_file(config.paths.embeddings, "paths.embeddings");
}

SeedPlan SeedPlan::from_master(std::uint64_t master) {
  SeedPlan s;
  s.master = master;
  s.weak_annotation = master + 1;
  s.partition = master + 2;
  s.soft_annotation = master + 3;
  s.label_noise = master + 4;
  s.student = master + 5;
  s.eval_noise = master + 6;
  s.teacher = master + 100;
  return s;
}

}  // namespace mimic::pipeline
