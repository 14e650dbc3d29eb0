#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mimic/corpus/annotate.hpp"
#include "mimic/corpus/index.hpp"
#include "mimic/rank/model.hpp"

namespace test {

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(MIMIC_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline mimic::corpus::InvertedIndex index_of(const std::vector<std::string>& texts) {
  std::vector<mimic::corpus::Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({"d" + std::to_string(i), texts[i]});
  return mimic::corpus::build_index(docs);
}

/// A dozen short documents over two themes.
inline mimic::corpus::InvertedIndex small_index() {
  return index_of({"the cat sat on the mat", "a cat and a dog", "dogs chase cats in the park",
                   "stock market prices fall", "market traders sell stock", "the park has a pond",
                   "cat food prices rise", "dog food and cat food", "traders watch the market open",
                   "prices of stock and bonds", "a mat for the dog", "pond fish and park ducks"});
}

inline mimic::corpus::QuerySet queries_of(const std::vector<std::string>& texts) {
  mimic::corpus::QuerySet qs;
  for (std::size_t i = 0; i < texts.size(); ++i) qs.push_back({"q" + std::to_string(i), mimic::corpus::tokenize(texts[i])});
  return qs;
}

inline mimic::rank::RankModelConfig tiny_config() {
  mimic::rank::RankModelConfig c;
  c.embedding_dim = 4;
  c.hidden_layers = 2;
  c.hidden_size = 5;
  c.dropout_keep = 1.0;
  c.learning_rate = 1e-2;
  c.batch_size = 4;
  return c;
}

inline mimic::rank::RankModelParams tiny_params(const mimic::corpus::InvertedIndex& index, std::uint64_t seed = 1,
                                                mimic::rank::RankModelConfig config = tiny_config()) {
  return mimic::rank::init_params(config, index, {std::nullopt, seed});
}

}  // namespace test
