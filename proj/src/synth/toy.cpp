#include "mimic/synth/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "mimic/binary_io.hpp"
#include "mimic/common.hpp"
#include "mimic/corpus/io.hpp"

namespace mimic::synth {

namespace {

class Zipf {
 public:
  explicit Zipf(std::size_t n, double exponent = 1.0) : cdf_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = total;
    }
    for (auto& c : cdf_) c /= total;
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::vector<std::string> make_words(std::size_t count, Rng& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    const auto syllables = 2 + rng.below(2);
    std::string w;
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += kConsonants[rng.below(kConsonants.size())];
      w += kVowels[rng.below(kVowels.size())];
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string numbered(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

ToyCollection make_toy_collection(const ToySpec& spec) {
  Rng rng(spec.seed);
  const auto words = make_words(spec.topics * spec.words_per_topic + spec.background_words, rng);
  auto topic_word = [&](std::size_t topic, std::size_t r) { return words[topic * spec.words_per_topic + r]; };
  auto background_word = [&](std::size_t r) { return words[spec.topics * spec.words_per_topic + r]; };
  const Zipf topic_zipf(spec.words_per_topic);
  const Zipf background_zipf(spec.background_words);

  ToyCollection c;
  c.topic_words.resize(spec.topics);
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t r = 0; r < spec.words_per_topic; ++r) c.topic_words[t].push_back(topic_word(t, r));
  }
  for (std::size_t r = 0; r < spec.background_words; ++r) c.background_words.push_back(background_word(r));
  std::vector<std::size_t> primary(spec.docs);
  std::vector<std::set<std::string>> doc_words(spec.docs);
  for (std::size_t d = 0; d < spec.docs; ++d) {
    const auto topic = static_cast<std::size_t>(rng.below(spec.topics));
    auto secondary = static_cast<std::size_t>(rng.below(spec.topics));
    if (secondary == topic) secondary = (secondary + 1) % spec.topics;
    primary[d] = topic;
    const auto len = spec.min_doc_length + rng.below(spec.max_doc_length - spec.min_doc_length + 1);
    std::string text;
    for (std::uint64_t i = 0; i < len; ++i) {
      const double u = rng.uniform();
      std::string w;
      if (u < spec.topic_share) {
        w = topic_word(topic, topic_zipf.draw(rng));
      } else if (u < spec.topic_share + spec.secondary_share) {
        w = topic_word(secondary, topic_zipf.draw(rng));
      } else {
        w = background_word(background_zipf.draw(rng));
      }
      doc_words[d].insert(w);
      if (!text.empty()) text += ' ';
      text += w;
    }
    text += '.';
    c.docs.push_back({numbered('D', d + 1, 5), std::move(text)});
  }

  auto make_queries = [&](char prefix, std::size_t count, std::uint64_t stream, QueryLines& lines,
                          eval::Qrels* qrels) {
    Rng rng(derive_seed(spec.seed, stream));
    for (std::size_t i = 0; i < count; ++i) {
      const auto topic = static_cast<std::size_t>(rng.below(spec.topics));
      const auto n_terms = 2 + static_cast<std::size_t>(rng.below(3));
      std::vector<std::string> terms;
      while (terms.size() < n_terms) {
        auto w = topic_word(topic, topic_zipf.draw(rng));
        if (std::find(terms.begin(), terms.end(), w) == terms.end()) terms.push_back(std::move(w));
      }
      std::string text;
      for (const auto& t : terms) text += (text.empty() ? "" : " ") + t;
      const auto id = numbered(prefix, i + 1, 3);
      lines.emplace_back(id, text);
      if (qrels == nullptr) continue;
      auto& j = (*qrels)[id];
      for (std::size_t d = 0; d < spec.docs; ++d) {
        if (primary[d] != topic) continue;
        const auto hits = static_cast<std::size_t>(
            std::count_if(terms.begin(), terms.end(), [&](const auto& t) { return doc_words[d].contains(t); }));
        j[c.docs[d].id] = 2 * hits >= terms.size() ? 2 : 1;
      }
    }
  };
  make_queries('T', spec.train_queries, 1, c.train_queries, &c.train_qrels);
  make_queries('U', spec.unlabeled_queries, 2, c.unlabeled_queries, nullptr);
  make_queries('E', spec.eval_queries, 3, c.eval_queries, &c.eval_qrels);
  return c;
}

std::string make_toy_embeddings(const ToyCollection& collection, const ToyEmbeddingSpec& spec) {
  Rng rng(spec.seed);
  std::string out = std::to_string(collection.background_words.size() +
                                   collection.topic_words.size() *
                                       (collection.topic_words.empty() ? 0 : collection.topic_words[0].size())) +
                    " " + std::to_string(spec.dim) + "\n";
  auto emit = [&](const std::string& word, const std::vector<double>* centroid) {
    out += word;
    char buf[32];
    for (std::size_t k = 0; k < spec.dim; ++k) {
      double v = (2.0 * rng.uniform() - 1.0) * spec.word_noise;
      if (centroid != nullptr) v += (*centroid)[k];
      std::snprintf(buf, sizeof buf, " %.6f", v);
      out += buf;
    }
    out += '\n';
  };
  for (const auto& words : collection.topic_words) {
    std::vector<double> centroid(spec.dim);
    for (auto& x : centroid) x = (2.0 * rng.uniform() - 1.0) * spec.topic_radius;
    for (const auto& w : words) emit(w, &centroid);
  }
  for (const auto& w : collection.background_words) emit(w, nullptr);
  return out;
}

void write_toy_collection(const std::filesystem::path& dir, const ToyCollection& c) {
  std::string corpus;
  for (const auto& d : c.docs) {
    corpus += nlohmann::json{{"id", d.id}, {"text", d.text}}.dump();
    corpus += '\n';
  }
  write_file(dir / "corpus.jsonl", corpus);
  write_file(dir / "train_queries.tsv", corpus::format_queries_tsv(c.train_queries));
  write_file(dir / "unlabeled_queries.tsv", corpus::format_queries_tsv(c.unlabeled_queries));
  write_file(dir / "eval_queries.tsv", corpus::format_queries_tsv(c.eval_queries));
  write_file(dir / "train.qrels", eval::format_qrels(c.train_qrels));
  write_file(dir / "eval.qrels", eval::format_qrels(c.eval_qrels));
}

}  // namespace mimic::synth
