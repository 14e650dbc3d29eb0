#include "mimic/rank/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "mimic/binary_io.hpp"
#include "mimic/nn/optimizer.hpp"
#include "mimic/simd/kernels.hpp"

namespace mimic::rank {

namespace {

constexpr std::string_view kCheckpointMagic = "MMRK";
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Pushes d(loss)/d(repr) back into the embedding rows and term weights.
void scatter_repr_grad(const RankModelParams& params, std::span<const TermId> terms,
                       std::span<const double> grad_repr, ModelGradient& grad, bool embeddings,
                       bool weights) {
  const auto& k = simd::active_kernels();
  const auto m = grad_repr.size();
  for (const auto t : terms) {
    if (t >= params.vocabulary.size()) continue;
    if (embeddings) k.axpy(params.term_weights[t], grad_repr.data(), grad.embeddings.row(t).data(), m);
    if (weights) grad.term_weights[t] += k.dot(params.embeddings.row(t).data(), grad_repr.data(), m);
  }
}

void mix(std::uint64_t& h, std::uint64_t bit) { h = (h ^ bit) * 0x100000001b3ULL; }

struct EvalSpec {
  nn::Mode mode = nn::Mode::kInfer;
  double keep = 1.0;
  std::uint64_t dropout_seed = 0;
  bool grad_embeddings = true;
  bool grad_weights = true;
};

/// Batch-mean hinge over the instances; optionally accumulates the gradient
/// and fingerprints the piecewise-linear regime.
double evaluate_batch(const RankModelParams& params, std::span<const TrainingInstance* const> batch,
                      const EvalSpec& spec, ModelGradient* grad, std::uint64_t* signature) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const std::size_t m = params.embedding_dim();
  const double keep_storage[1] = {spec.keep};
  const std::span<const double> keep =
      spec.mode == nn::Mode::kTrain && spec.keep < 1.0 ? std::span<const double>(keep_storage)
                                                       : std::span<const double>{};
  std::uint64_t sig = 0xcbf29ce484222325ULL;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& inst = *batch[i];
    const auto rq = represent(params, inst.query);
    const auto r1 = represent(params, inst.doc1);
    const auto r2 = represent(params, inst.doc2);
    const auto x1 = concat(rq, r1);
    const auto x2 = concat(rq, r2);
    auto f1 = nn::forward(params.dense, x1, keep, spec.mode, derive_seed(spec.dropout_seed, 2 * i));
    auto f2 = nn::forward(params.dense, x2, keep, spec.mode, derive_seed(spec.dropout_seed, 2 * i + 1));
    const double S1 = f1.output[0];
    const double S2 = f2.output[0];
    const double term = hinge_term(inst.s1, inst.s2, S1, S2);
    total += term;
    const bool active = term > 0.0;

    if (signature != nullptr) {
      mix(sig, active ? 1 : 2);
      for (const auto* f : {&f1, &f2}) {
        for (std::size_t l = 0; l + 1 < params.dense.size(); ++l) {
          if (params.dense[l].activation != nn::Activation::kRelu) continue;
          for (const double a : f->cache.activations[l]) mix(sig, a > 0.0 ? 3 : 4);
        }
      }
    }
    if (grad == nullptr || !active) continue;

    const double sgn = inst.s1 > inst.s2 ? 1.0 : -1.0;
    const double up1[1] = {-sgn * inv_b};
    const double up2[1] = {sgn * inv_b};
    const auto g1 = nn::accumulate_backward(params.dense, f1.cache, up1, grad->dense);
    const auto g2 = nn::accumulate_backward(params.dense, f2.cache, up2, grad->dense);
    if (!spec.grad_embeddings && !spec.grad_weights) continue;
    std::vector<double> gq(m);
    for (std::size_t j = 0; j < m; ++j) gq[j] = g1[j] + g2[j];
    const std::span<const double> gd1(g1.data() + m, m);
    const std::span<const double> gd2(g2.data() + m, m);
    scatter_repr_grad(params, inst.query, gq, *grad, spec.grad_embeddings, spec.grad_weights);
    scatter_repr_grad(params, inst.doc1, gd1, *grad, spec.grad_embeddings, spec.grad_weights);
    scatter_repr_grad(params, inst.doc2, gd2, *grad, spec.grad_embeddings, spec.grad_weights);
  }
  if (signature != nullptr) *signature = sig;
  return total * inv_b;
}

std::vector<const TrainingInstance*> pointers(std::span<const TrainingInstance> batch) {
  std::vector<const TrainingInstance*> out;
  out.reserve(batch.size());
  for (const auto& inst : batch) out.push_back(&inst);
  return out;
}

std::vector<double> parse_vector(std::span<const std::string_view> fields, std::size_t line_no) {
  std::vector<double> v(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto f = fields[i];
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[i]);
    if (ec != std::errc{} || ptr != f.data() + f.size()) {
      throw IoError("embedding file line " + std::to_string(line_no) + ": bad number '" +
                    std::string(f) + "'");
    }
  }
  return v;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool is_unsigned(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

RankModelConfig RankModelConfig::teacher() {
  RankModelConfig c;
  c.embedding_dim = 500;
  c.hidden_layers = 3;
  c.hidden_size = 512;
  c.dropout_keep = 1.0 - 0.2;
  c.learning_rate = 1e-3;
  c.batch_size = 512;
  return c;
}

RankModelConfig RankModelConfig::student() {
  RankModelConfig c;
  c.embedding_dim = 300;
  c.hidden_layers = 3;
  c.hidden_size = 128;
  c.dropout_keep = 1.0 - 0.1;
  c.learning_rate = 1e-3;
  c.batch_size = 512;
  return c;
}

void RankModelConfig::validate() const {
  if (embedding_dim == 0 || hidden_layers == 0 || hidden_size == 0 || batch_size == 0) {
    throw InvalidArgument("rank model sizes must be positive");
  }
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) {
    throw InvalidArgument("dropout keep probability must be in (0, 1]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be positive");
  }
}

void RankModelParams::check_consistency() const {
  const auto v = vocabulary.size();
  if (embeddings.rows() != v || term_weights.size() != v) {
    throw InvalidArgument("embedding table / term weights do not match vocabulary size " +
                          std::to_string(v));
  }
  if (dense.empty() || dense.front().in_dim() != 2 * embeddings.cols()) {
    throw InvalidArgument("first dense layer must take 2 x embedding_dim inputs");
  }
  nn::check_chain(dense);
  if (dense.back().out_dim() != 1 || dense.back().activation != nn::Activation::kTanh) {
    throw InvalidArgument("dense stack must end in a single tanh unit");
  }
}

std::vector<double> represent(const RankModelParams& params, std::span<const TermId> terms) {
  const auto m = params.embedding_dim();
  std::vector<double> out(m, 0.0);
  const auto& k = simd::active_kernels();
  for (const auto t : terms) {
    if (t >= params.vocabulary.size()) continue;
    k.axpy(params.term_weights[t], params.embeddings.row(t).data(), out.data(), m);
  }
  return out;
}

std::vector<double> represent(const RankModelParams& params, std::span<const std::string> terms) {
  const auto ids = params.vocabulary.map_known(terms);
  return represent(params, ids);
}

double score(const RankModelParams& params, std::span<const TermId> query, std::span<const TermId> doc) {
  return QueryScorer(params, query)(doc);
}

QueryScorer::QueryScorer(const RankModelParams& params, std::span<const TermId> query)
    : params_(&params), input_(represent(params, query)) {
  input_.resize(2 * params.embedding_dim(), 0.0);
}

double QueryScorer::operator()(std::span<const TermId> doc) const {
  auto x = input_;
  const auto m = params_->embedding_dim();
  const auto rd = represent(*params_, doc);
  std::copy(rd.begin(), rd.end(), x.begin() + static_cast<std::ptrdiff_t>(m));
  const auto out = nn::infer(params_->dense, x);
  if (out.size() != 1) throw InvalidArgument("scorer output must have one unit");
  return out[0];
}

double hinge_term(double s1, double s2, double score1, double score2) {
  if (s1 == s2) throw InvalidArgument("tied labels (s1 == s2) give no pairwise signal");
  const double sgn = s1 > s2 ? 1.0 : -1.0;
  return std::max(0.0, 1.0 - sgn * (score1 - score2));
}

double hinge_loss(std::span<const TrainingInstance> batch, std::span<const PairScores> scores) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  if (batch.size() != scores.size()) throw InvalidArgument("batch and score counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += hinge_term(batch[i].s1, batch[i].s2, scores[i].first, scores[i].second);
  }
  return total / static_cast<double>(batch.size());
}

ModelGradient ModelGradient::zeros_like(const RankModelParams& params) {
  return {nn::Matrix(params.embeddings.rows(), params.embeddings.cols()),
          std::vector<double>(params.term_weights.size(), 0.0),
          nn::GradientStore::zeros_like(params.dense)};
}

void ModelGradient::set_zero() {
  embeddings.fill(0.0);
  std::fill(term_weights.begin(), term_weights.end(), 0.0);
  dense.set_zero();
}

double batch_loss(const RankModelParams& params, std::span<const TrainingInstance> batch) {
  return evaluate_batch(params, pointers(batch), EvalSpec{}, nullptr, nullptr);
}

double batch_loss_and_gradient(const RankModelParams& params, std::span<const TrainingInstance> batch,
                               ModelGradient& grad) {
  return evaluate_batch(params, pointers(batch), EvalSpec{}, &grad, nullptr);
}

std::uint64_t kink_signature(const RankModelParams& params, std::span<const TrainingInstance> batch) {
  std::uint64_t sig = 0;
  evaluate_batch(params, pointers(batch), EvalSpec{}, nullptr, &sig);
  return sig;
}

std::vector<std::span<double>> parameter_blocks(RankModelParams& params) {
  std::vector<std::span<double>> out{params.embeddings.values(), std::span<double>(params.term_weights)};
  for (auto b : nn::parameter_blocks(params.dense)) out.push_back(b);
  return out;
}

std::vector<std::span<const double>> gradient_blocks(const ModelGradient& grad) {
  std::vector<std::span<const double>> out{grad.embeddings.values(),
                                           std::span<const double>(grad.term_weights)};
  for (auto b : nn::gradient_blocks(grad.dense)) out.push_back(b);
  return out;
}

TrainResult train(RankModelParams& params, const RankModelConfig& config,
                  std::span<const TrainingInstance> instances, std::size_t epochs, std::uint64_t seed) {
  config.validate();
  params.check_consistency();
  TrainResult result;
  if (epochs == 0) return result;
  if (instances.empty()) throw InvalidArgument("train: no training instances");

  // Frozen tensors are left out of the optimizer entirely.
  auto all_params = parameter_blocks(params);
  auto grad = ModelGradient::zeros_like(params);
  auto all_grads = gradient_blocks(grad);
  std::vector<std::span<double>> p_blocks;
  std::vector<std::span<const double>> g_blocks;
  std::vector<std::size_t> sizes;
  for (std::size_t b = 0; b < all_params.size(); ++b) {
    if (b == 0 && !config.train_embeddings) continue;
    if (b == 1 && !config.train_term_weights) continue;
    p_blocks.push_back(all_params[b]);
    g_blocks.push_back(all_grads[b]);
    sizes.push_back(all_params[b].size());
  }
  nn::OptimizerState state(nn::AdamConfig{config.learning_rate}, sizes);

  EvalSpec spec;
  spec.mode = nn::Mode::kTrain;
  spec.keep = config.dropout_keep;
  spec.grad_embeddings = config.train_embeddings;
  spec.grad_weights = config.train_term_weights;

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(seed, 0));
  std::vector<const TrainingInstance*> batch;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const RankModelParams last_good = params;
    shuffle_rng.shuffle(std::span(order));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (auto i = start; i < end; ++i) batch.push_back(&instances[order[i]]);
      grad.set_zero();
      spec.dropout_seed = derive_seed(seed, 1 + result.steps);
      const double loss = evaluate_batch(params, batch, spec, &grad, nullptr);
      try {
        if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
        nn::optimizer_step(p_blocks, g_blocks, state);
      } catch (const NumericError& e) {
        params = last_good;
        throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(result.steps),
                              epoch, result.steps, std::make_shared<const RankModelParams>(last_good));
      }
      ++result.steps;
      epoch_total += loss * static_cast<double>(end - start);
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
  }
  return result;
}

FitResult fit(const RankModelConfig& config, const corpus::InvertedIndex& index,
              std::span<const TrainingInstance> instances, std::size_t epochs, std::uint64_t seed,
              const std::optional<std::filesystem::path>& embedding_file) {
  FitResult out;
  out.params = init_params(config, index, InitOptions{embedding_file, derive_seed(seed, 1)});
  out.training = train(out.params, config, instances, epochs, derive_seed(seed, 2));
  return out;
}

std::vector<RankedDoc> rank(const RankModelParams& params, std::span<const TermId> query,
                            std::span<const Candidate> candidates, std::size_t cutoff,
                            const ScoreTransform& compare_transform) {
  const QueryScorer scorer(params, query);
  struct Entry {
    RankedDoc doc;
    double key;
  };
  std::vector<Entry> entries;
  entries.reserve(candidates.size());
  for (const auto& c : candidates) {
    const double s = scorer(c.terms);
    entries.push_back({{c.doc_id, s}, compare_transform ? compare_transform(s) : s});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.doc.doc_id < b.doc.doc_id;
  });
  std::vector<RankedDoc> out;
  for (std::size_t i = 0; i < entries.size() && i < cutoff; ++i) out.push_back(std::move(entries[i].doc));
  return out;
}

EmbeddingFile parse_embeddings(std::string_view text, const corpus::Vocabulary* keep) {
  EmbeddingFile out;
  std::size_t line_no = 0;
  bool first = true;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields.size() == 2 && is_unsigned(fields[0]) && is_unsigned(fields[1])) {
        out.dim = std::stoul(std::string(fields[1]));
        continue;
      }
    }
    if (fields.size() < 2) {
      throw IoError("embedding file line " + std::to_string(line_no) + ": token without values");
    }
    const auto dim = fields.size() - 1;
    if (out.dim == 0) out.dim = dim;
    if (dim != out.dim) {
      throw IoError("embedding file line " + std::to_string(line_no) + ": " + std::to_string(dim) +
                    " values, expected " + std::to_string(out.dim));
    }
    std::string token(fields[0]);
    if (keep != nullptr && !keep->find(token)) continue;
    out.vectors.emplace_back(std::move(token), parse_vector(std::span(fields).subspan(1), line_no));
  }
  return out;
}

RankModelParams init_params(const RankModelConfig& config, const corpus::InvertedIndex& index,
                            const InitOptions& options) {
  config.validate();
  RankModelParams p;
  p.vocabulary = index.vocabulary();
  const auto v = p.vocabulary.size();
  const auto m = config.embedding_dim;
  p.embeddings = nn::Matrix(v, m);

  std::vector<bool> loaded(v, false);
  if (options.embedding_file) {
    const auto file = parse_embeddings(read_file(*options.embedding_file), &p.vocabulary);
    if (file.dim != 0 && file.dim != m) {
      throw InvalidArgument("embedding file dimension " + std::to_string(file.dim) +
                            " != configured embedding_dim " + std::to_string(m));
    }
    for (const auto& [token, vec] : file.vectors) {
      const auto id = *p.vocabulary.find(token);
      std::copy(vec.begin(), vec.end(), p.embeddings.row(id).begin());
      loaded[id] = true;
    }
  }
  Rng emb_rng(derive_seed(options.seed, 0));
  for (TermId t = 0; t < v; ++t) {
    if (loaded[t]) continue;
    for (auto& x : p.embeddings.row(t)) x = (2.0 * emb_rng.uniform() - 1.0) * 0.1;
  }

  p.term_weights.resize(v);
  for (TermId t = 0; t < v; ++t) p.term_weights[t] = corpus::idf(index, t);

  Rng dense_rng(derive_seed(options.seed, 1));
  std::size_t in = 2 * m;
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    p.dense.push_back(nn::init_dense(in, config.hidden_size, nn::Activation::kRelu, dense_rng));
    in = config.hidden_size;
  }
  p.dense.push_back(nn::init_dense(in, 1, nn::Activation::kTanh, dense_rng));
  return p;
}

std::string serialize_checkpoint(const RankModelConfig& config, const RankModelParams& params) {
  params.check_consistency();
  BinaryWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(config.embedding_dim);
  w.u64(config.hidden_layers);
  w.u64(config.hidden_size);
  w.f64(config.dropout_keep);
  w.f64(config.learning_rate);
  w.u64(config.batch_size);
  w.u8(config.train_embeddings ? 1 : 0);
  w.u8(config.train_term_weights ? 1 : 0);
  w.u64(params.vocabulary.size());
  for (const auto& t : params.vocabulary.terms()) w.str(t);
  w.u64(params.embeddings.rows());
  w.u64(params.embeddings.cols());
  w.f64s(params.embeddings.values());
  w.u64(params.term_weights.size());
  w.f64s(params.term_weights);
  nn::write_layers(w, params.dense);
  return w.take();
}

RankCheckpoint deserialize_checkpoint(std::string_view bytes) {
  BinaryReader r(bytes);
  r.expect(kCheckpointMagic, "mimic rank-model checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw IoError("unsupported rank-model checkpoint version " + std::to_string(v));
  }
  RankCheckpoint ck;
  auto& c = ck.config;
  c.embedding_dim = r.u64();
  c.hidden_layers = r.u64();
  c.hidden_size = r.u64();
  c.dropout_keep = r.f64();
  c.learning_rate = r.f64();
  c.batch_size = r.u64();
  c.train_embeddings = r.u8() != 0;
  c.train_term_weights = r.u8() != 0;
  const auto vocab_size = r.u64();
  std::vector<std::string> terms;
  for (std::uint64_t i = 0; i < vocab_size; ++i) terms.push_back(r.str());
  auto& p = ck.params;
  p.vocabulary = corpus::Vocabulary::from_terms(std::move(terms));
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (rows != vocab_size || cols == 0 || cols > (1u << 20)) throw IoError("bad embedding table shape");
  p.embeddings = nn::Matrix(rows, cols, r.f64s(rows * cols));
  const auto nw = r.u64();
  if (nw != vocab_size) throw IoError("bad term weight count");
  p.term_weights = r.f64s(nw);
  p.dense = nn::read_layers(r);
  if (!r.at_end()) throw IoError("trailing bytes in rank-model checkpoint");
  try {
    p.check_consistency();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const RankModelConfig& config,
                     const RankModelParams& params) {
  write_file(path, serialize_checkpoint(config, params));
}

RankCheckpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace mimic::rank
