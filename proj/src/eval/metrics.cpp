#include "mimic/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "mimic/binary_io.hpp"
#include "mimic/common.hpp"

namespace mimic::eval {

namespace {

int grade_of(const Judgments& j, const std::string& doc) {
  auto it = j.find(doc);
  return it == j.end() ? 0 : it->second;
}

std::size_t relevant_count(const Judgments& j) {
  return static_cast<std::size_t>(
      std::count_if(j.begin(), j.end(), [](const auto& kv) { return kv.second >= 1; }));
}

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const auto start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    fn(line_no, text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
}

template <class T>
T parse_number(std::string_view s, std::size_t line_no, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

double average_precision(std::span<const std::string> ranked, const Judgments& judgments) {
  const auto total = relevant_count(judgments);
  if (total == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (grade_of(judgments, ranked[i]) >= 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

double precision_at_k(std::span<const std::string> ranked, const Judgments& judgments, std::size_t k) {
  if (k == 0) throw InvalidArgument("precision cutoff must be at least 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
    if (grade_of(judgments, ranked[i]) >= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const std::string> ranked, const Judgments& judgments, std::size_t k) {
  if (k == 0) throw InvalidArgument("nDCG cutoff must be at least 1");
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
    const int g = grade_of(judgments, ranked[i]);
    if (g > 0) dcg += g / std::log2(static_cast<double>(i + 2));
  }
  std::vector<int> grades;
  for (const auto& [doc, g] : judgments) {
    if (g > 0) grades.push_back(g);
  }
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double ideal = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < k; ++i) {
    ideal += grades[i] / std::log2(static_cast<double>(i + 2));
  }
  return ideal == 0.0 ? 0.0 : dcg / ideal;
}

MetricReport evaluate(const RunList& run, const Qrels& qrels, const EvalOptions& options) {
  MetricReport report;
  std::vector<std::string> unjudged;
  for (const auto& [qid, entries] : run) {
    auto q = qrels.find(qid);
    if (q == qrels.end()) {
      unjudged.push_back(qid);
      continue;
    }
    if (options.skip_empty && relevant_count(q->second) == 0) continue;
    std::vector<std::string> ranked;
    ranked.reserve(entries.size());
    for (const auto& e : entries) ranked.push_back(e.doc_id);
    QueryMetrics m{qid, average_precision(ranked, q->second), precision_at_k(ranked, q->second, options.k),
                   ndcg_at_k(ranked, q->second, options.k)};
    report.map += m.ap;
    report.p_at_k += m.p_at_k;
    report.ndcg_at_k += m.ndcg_at_k;
    report.per_query.push_back(std::move(m));
  }
  report.query_count = report.per_query.size();
  if (report.query_count > 0) {
    const auto n = static_cast<double>(report.query_count);
    report.map /= n;
    report.p_at_k /= n;
    report.ndcg_at_k /= n;
  }
  if (!unjudged.empty()) {
    std::string w = std::to_string(unjudged.size()) + " run queries have no judgments and were ignored:";
    for (std::size_t i = 0; i < unjudged.size() && i < 5; ++i) w += " " + unjudged[i];
    if (unjudged.size() > 5) w += " ...";
    report.warnings.push_back(std::move(w));
  }
  if (report.query_count == 0) report.warnings.push_back("no queries evaluated");
  return report;
}

Qrels parse_qrels(std::string_view text) {
  Qrels qrels;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = fields_of(line);
    if (f.empty()) return;
    if (f.size() != 4) throw IoError("line " + std::to_string(line_no) + ": expected 'query_id 0 doc_id grade'");
    const int grade = parse_number<int>(f[3], line_no, "grade");
    if (grade < 0) throw IoError("line " + std::to_string(line_no) + ": negative grade");
    auto& j = qrels[std::string(f[0])];
    if (!j.emplace(std::string(f[2]), grade).second) {
      throw IoError("line " + std::to_string(line_no) + ": repeated judgment for " + std::string(f[2]));
    }
  });
  return qrels;
}

Qrels read_qrels(const std::filesystem::path& path) {
  try {
    return parse_qrels(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string format_qrels(const Qrels& qrels) {
  std::ostringstream out;
  for (const auto& [qid, j] : qrels) {
    std::vector<std::pair<std::string, int>> sorted(j.begin(), j.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [doc, g] : sorted) out << qid << " 0 " << doc << ' ' << g << '\n';
  }
  return out.str();
}

RunList parse_run(std::string_view text) {
  struct Raw {
    long rank;
    double score;
    std::string doc;
    std::size_t line;
  };
  std::map<std::string, std::vector<Raw>> raw;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = fields_of(line);
    if (f.empty()) return;
    if (f.size() != 6) {
      throw IoError("line " + std::to_string(line_no) + ": expected 'query_id Q0 doc_id rank score tag'");
    }
    const auto rank = parse_number<long>(f[3], line_no, "rank");
    if (rank < 1) throw IoError("line " + std::to_string(line_no) + ": rank must be positive");
    const auto score = parse_number<double>(f[4], line_no, "score");
    raw[std::string(f[0])].push_back({rank, score, std::string(f[2]), line_no});
  });
  RunList run;
  for (auto& [qid, rows] : raw) {
    std::stable_sort(rows.begin(), rows.end(), [](const Raw& a, const Raw& b) { return a.rank < b.rank; });
    std::set<std::string> seen;
    auto& out = run[qid];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (i > 0 && rows[i - 1].rank == r.rank) {
        throw IoError("line " + std::to_string(r.line) + ": repeated rank " + std::to_string(r.rank) +
                      " for query " + qid);
      }
      if (i > 0 && rows[i - 1].score < r.score) {
        throw IoError("line " + std::to_string(r.line) + ": score increases with rank for query " + qid);
      }
      if (!seen.insert(r.doc).second) {
        throw IoError("line " + std::to_string(r.line) + ": repeated doc_id " + r.doc + " for query " + qid);
      }
      out.push_back({r.doc, r.score});
    }
  }
  return run;
}

RunList read_run(const std::filesystem::path& path) {
  try {
    return parse_run(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string format_run(const RunList& run, std::string_view tag) {
  std::string out;
  char buf[64];
  for (const auto& [qid, entries] : run) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      out += qid;
      out += " Q0 ";
      out += entries[i].doc_id;
      std::snprintf(buf, sizeof buf, " %zu %.8f ", i + 1, entries[i].score);
      out += buf;
      out += tag;
      out += '\n';
    }
  }
  return out;
}

MetricReport evaluate_run(const std::filesystem::path& run_file, const std::filesystem::path& qrels_file,
                          const EvalOptions& options) {
  return evaluate(read_run(run_file), read_qrels(qrels_file), options);
}

}  // namespace mimic::eval
