#pragma once

/** \file model.hpp
 *  \brief Pairwise neural ranker: weighted bag-of-embeddings representation
 *         feeding a ReLU MLP with a single tanh output.
 *
 * A text is represented as sum_t w(t) * e(t) over its in-vocabulary terms,
 * where e is a trainable embedding table and w a trainable per-term weight
 * initialized from IDF. The scorer sees [repr(query) || repr(doc)].
 * Training feeds (q, d1) and (q, d2) through the same parameters and
 * minimizes the batch-mean hinge
 *
 *     max(0, 1 - sign(s1 - s2) * (S(q, d1) - S(q, d2)))
 *
 * At inference the model scores each (query, document) independently.
 *
 * Trained params are immutable for scoring and may be shared across threads;
 * train() needs exclusive ownership.
 */

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mimic/corpus/index.hpp"
#include "mimic/instance.hpp"
#include "mimic/nn/network.hpp"

namespace mimic::rank {

struct RankModelConfig {
  std::size_t embedding_dim = 500;
  std::size_t hidden_layers = 3;
  std::size_t hidden_size = 512;
  double dropout_keep = 0.8;
  double learning_rate = 1e-3;
  std::size_t batch_size = 512;
  bool train_embeddings = true;
  bool train_term_weights = true;

  /// 3 x 512 hidden, dropout 0.2, embeddings 500, lr 1e-3, batch 512.
  static RankModelConfig teacher();
  /// 3 x 128 hidden, dropout 0.1, embeddings 300, lr 1e-3, batch 512.
  static RankModelConfig student();

  /// Throws InvalidArgument unless all sizes are positive and keep is in (0, 1].
  void validate() const;

  friend bool operator==(const RankModelConfig&, const RankModelConfig&) = default;
};

struct RankModelParams {
  corpus::Vocabulary vocabulary;
  nn::Matrix embeddings;              ///< |V| x m
  std::vector<double> term_weights;   ///< |V|
  std::vector<nn::DenseLayer> dense;  ///< ReLU hidden layers, then 1-unit tanh

  std::size_t embedding_dim() const { return embeddings.cols(); }
  /// Throws InvalidArgument when shapes disagree with each other.
  void check_consistency() const;

  friend bool operator==(const RankModelParams&, const RankModelParams&) = default;
};

/// Weighted sum of term embeddings; ids outside the vocabulary are ignored,
/// so an empty or fully unknown text maps to the zero vector.
std::vector<double> represent(const RankModelParams& params, std::span<const TermId> terms);
std::vector<double> represent(const RankModelParams& params, std::span<const std::string> terms);

/// Pointwise relevance in (-1, 1).
double score(const RankModelParams& params, std::span<const TermId> query, std::span<const TermId> doc);

/// Scores many documents against one query, representing the query once.
class QueryScorer {
 public:
  QueryScorer(const RankModelParams& params, std::span<const TermId> query);
  double operator()(std::span<const TermId> doc) const;

 private:
  const RankModelParams* params_;
  std::vector<double> input_;
};

/// One hinge term. Throws InvalidArgument when s1 == s2.
double hinge_term(double s1, double s2, double score1, double score2);

struct PairScores {
  double first;
  double second;
};

/// Batch mean of hinge_term. Throws on an empty batch or a size mismatch.
double hinge_loss(std::span<const TrainingInstance> batch, std::span<const PairScores> scores);

/// Gradient buffers for every trainable tensor of a RankModelParams.
struct ModelGradient {
  nn::Matrix embeddings;
  std::vector<double> term_weights;
  nn::GradientStore dense;

  static ModelGradient zeros_like(const RankModelParams& params);
  void set_zero();
};

/// Dropout-free batch loss (infer mode).
double batch_loss(const RankModelParams& params, std::span<const TrainingInstance> batch);

/// Dropout-free batch loss and its exact gradient w.r.t. embeddings, term
/// weights and dense parameters. At the hinge kink the subgradient is 0.
double batch_loss_and_gradient(const RankModelParams& params, std::span<const TrainingInstance> batch,
                               ModelGradient& grad);

/// Fingerprint of the piecewise-linear regime (ReLU on/off pattern and hinge
/// active set) of a dropout-free batch evaluation, for kink-aware gradient checks.
std::uint64_t kink_signature(const RankModelParams& params, std::span<const TrainingInstance> batch);

/// Blocks in fixed order: embeddings, term weights, then weight/bias per layer.
std::vector<std::span<double>> parameter_blocks(RankModelParams& params);
std::vector<std::span<const double>> gradient_blocks(const ModelGradient& grad);

struct TrainResult {
  std::vector<double> epoch_loss;  ///< mean train-mode hinge per epoch
  std::size_t steps = 0;
};

/// Raised when a loss or gradient goes non-finite. The params passed to
/// train() have been restored to their state at the start of the failing
/// epoch; last_good() holds a copy of that state.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t step,
                  std::shared_ptr<const RankModelParams> last_good)
      : NumericError(what), epoch_(epoch), step_(step), last_good_(std::move(last_good)) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }
  const RankModelParams& last_good() const { return *last_good_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
  std::shared_ptr<const RankModelParams> last_good_;
};

/** \brief Mini-batch Adam on the pairwise hinge.
 *
 * Each epoch reshuffles with a stream seeded by `seed`; batches hold
 * config.batch_size instances and the last partial batch is kept. Dropout
 * masks are drawn per forward pass from seeds derived from `seed`, so the
 * loss trace and final params are a pure function of the inputs.
 */
TrainResult train(RankModelParams& params, const RankModelConfig& config,
                  std::span<const TrainingInstance> instances, std::size_t epochs, std::uint64_t seed);

struct FitResult {
  RankModelParams params;
  TrainResult training;
};

/// init_params then train, with independent streams derived from one seed.
/// Every teacher and student in the toolkit is produced through this call.
FitResult fit(const RankModelConfig& config, const corpus::InvertedIndex& index,
              std::span<const TrainingInstance> instances, std::size_t epochs, std::uint64_t seed,
              const std::optional<std::filesystem::path>& embedding_file = std::nullopt);

struct Candidate {
  std::string doc_id;
  std::span<const TermId> terms;
};

struct RankedDoc {
  std::string doc_id;
  double score;
  friend bool operator==(const RankedDoc&, const RankedDoc&) = default;
};

/// Applied to scores only where they are compared; defaults to identity.
using ScoreTransform = std::function<double(double)>;

/// Candidates by descending score, ties by ascending doc id, truncated to cutoff.
std::vector<RankedDoc> rank(const RankModelParams& params, std::span<const TermId> query,
                            std::span<const Candidate> candidates, std::size_t cutoff,
                            const ScoreTransform& compare_transform = {});

struct InitOptions {
  std::optional<std::filesystem::path> embedding_file;
  std::uint64_t seed = 0;
};

/** \brief Fresh parameters for the index vocabulary.
 *
 * Embeddings come from the file where it has the token, otherwise uniform in
 * +-0.1. Term weights are idf(index, t). Dense layers use Glorot-uniform
 * weights and zero biases. Throws InvalidArgument if the file dimension
 * differs from config.embedding_dim.
 */
RankModelParams init_params(const RankModelConfig& config, const corpus::InvertedIndex& index,
                            const InitOptions& options);

/// Word-vector text file: optional "<count> <dim>" header, then
/// "token v1 ... vm" per line. Only tokens in `keep` are returned.
struct EmbeddingFile {
  std::size_t dim = 0;
  std::vector<std::pair<std::string, std::vector<double>>> vectors;
};
EmbeddingFile parse_embeddings(std::string_view text, const corpus::Vocabulary* keep = nullptr);

struct RankCheckpoint {
  RankModelConfig config;
  RankModelParams params;
};

/// "MMRK", u32 version, config, vocabulary, embedding table, term weights,
/// then the dense stack in network checkpoint form. Bit-exact round trip.
std::string serialize_checkpoint(const RankModelConfig& config, const RankModelParams& params);
RankCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const RankModelConfig& config,
                     const RankModelParams& params);
RankCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mimic::rank
