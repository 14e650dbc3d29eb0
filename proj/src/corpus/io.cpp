#include "mimic/corpus/io.hpp"

#include <charconv>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "mimic/binary_io.hpp"

namespace mimic::corpus {

namespace {

/// Calls fn(line_number, line) for each line, stripping a trailing '\r'.
template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line_no, line);
  }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

IoError line_error(std::size_t line_no, const std::string& what) {
  return IoError("line " + std::to_string(line_no) + ": " + what);
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw line_error(line_no, "bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<Document> parse_corpus_jsonl(std::string_view text) {
  std::vector<Document> docs;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw line_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object() || !record.contains("id") || !record.contains("text") ||
        !record["id"].is_string() || !record["text"].is_string()) {
      throw line_error(line_no, "expected {\"id\": string, \"text\": string}");
    }
    docs.push_back({record["id"].get<std::string>(), record["text"].get<std::string>()});
  });
  return docs;
}

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  try {
    return parse_corpus_jsonl(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

QuerySet parse_queries_tsv(std::string_view text) {
  QuerySet out;
  std::unordered_set<std::string> seen;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw line_error(line_no, "expected query_id<TAB>text");
    }
    std::string id(line.substr(0, tab));
    if (!seen.insert(id).second) throw line_error(line_no, "duplicate query_id '" + id + "'");
    out.push_back({std::move(id), tokenize(line.substr(tab + 1))});
  });
  return out;
}

QuerySet read_queries(const std::filesystem::path& path) {
  try {
    return parse_queries_tsv(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string format_queries_tsv(std::span<const std::pair<std::string, std::string>> id_and_text) {
  std::string out;
  for (const auto& [id, text] : id_and_text) {
    out += id;
    out += '\t';
    out += text;
    out += '\n';
  }
  return out;
}

std::string format_annotations(std::span<const TrainingInstance> instances) {
  std::string out;
  char buf[64];
  for (const auto& inst : instances) {
    out += inst.query_id;
    out += '\t';
    out += inst.doc1_id;
    out += '\t';
    out += inst.doc2_id;
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", inst.s1, inst.s2);
    out += buf;
  }
  return out;
}

LoadedAnnotations parse_annotations(std::string_view text, const QuerySet& queries,
                                    const InvertedIndex& index) {
  std::unordered_map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id.emplace(q.id, &q);
  LoadedAnnotations out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 5) throw line_error(line_no, "expected 5 tab-separated fields");
    auto q = by_id.find(std::string(fields[0]));
    if (q == by_id.end()) throw line_error(line_no, "unknown query_id '" + std::string(fields[0]) + "'");
    const auto d1 = index.find_doc(fields[1]);
    const auto d2 = index.find_doc(fields[2]);
    if (!d1 || !d2) throw line_error(line_no, "unknown doc_id");
    TrainingInstance inst;
    inst.query_id = fields[0];
    inst.doc1_id = fields[1];
    inst.doc2_id = fields[2];
    inst.s1 = parse_double(fields[3], line_no);
    inst.s2 = parse_double(fields[4], line_no);
    if (inst.s1 == inst.s2) {
      ++out.dropped_ties;
      return;
    }
    inst.query = index.vocabulary().map_known(q->second->terms);
    const auto t1 = index.doc_terms(*d1);
    const auto t2 = index.doc_terms(*d2);
    inst.doc1.assign(t1.begin(), t1.end());
    inst.doc2.assign(t2.begin(), t2.end());
    out.instances.push_back(std::move(inst));
  });
  return out;
}

InvertedIndex read_index(const std::filesystem::path& path) {
  return InvertedIndex::deserialize(read_file(path));
}

void write_index(const std::filesystem::path& path, const InvertedIndex& index) {
  write_file(path, index.serialize());
}

}  // namespace mimic::corpus
