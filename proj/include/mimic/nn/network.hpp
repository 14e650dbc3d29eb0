#pragma once

/** \file network.hpp
 *  \brief Dense feed-forward layers with exact reverse-mode gradients.
 *
 * Layer weights are stored in_dim x out_dim, row-major, so a forward pass is
 * a sequence of axpy calls over weight rows and the input gradient is a
 * sequence of dot products. All arithmetic is float64.
 *
 * Parameter stores are owned by the caller. forward/backward never mutate
 * layers; concurrent inference on shared layers is safe.
 */

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mimic/binary_io.hpp"
#include "mimic/common.hpp"

namespace mimic::nn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1, kIdentity = 2 };

std::string_view activation_name(Activation a);

struct DenseLayer {
  Matrix weights;             ///< in_dim x out_dim
  std::vector<double> bias;   ///< out_dim
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weights.rows(); }
  std::size_t out_dim() const { return weights.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
DenseLayer init_dense(std::size_t in_dim, std::size_t out_dim, Activation activation, Rng& rng);

/// Throws InvalidArgument naming the first layer whose in_dim does not match
/// its predecessor's out_dim or whose bias length differs from out_dim.
void check_chain(std::span<const DenseLayer> layers);

enum class Mode { kTrain, kInfer };

/// Per-layer intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;       ///< input seen by layer l
  std::vector<std::vector<double>> activations;  ///< activation of layer l, before dropout
  std::vector<std::vector<double>> masks;        ///< scaled dropout mask of layer l, or empty
};

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

/** \brief Affine map and activation per layer.
 *
 * In train mode an inverted-dropout mask follows every hidden layer (all but
 * the last): a unit survives with probability keep and survivors are scaled
 * by 1/keep. `dropout_keep` holds one probability per hidden layer, or a
 * single value applied to all of them; empty means no dropout. Masks are drawn
 * from `seed`, so a (params, input, seed) triple always yields one output.
 * In infer mode there is no dropout and the seed is unused.
 */
ForwardResult forward(std::span<const DenseLayer> layers, std::span<const double> input,
                      std::span<const double> dropout_keep, Mode mode, std::uint64_t seed);

/// Infer-mode output without keeping a cache.
std::vector<double> infer(std::span<const DenseLayer> layers, std::span<const double> input);

struct LayerGradient {
  Matrix weights;
  std::vector<double> bias;
};

/// Gradient buffers shaped like a layer stack, plus the input gradient.
struct GradientStore {
  std::vector<LayerGradient> layers;
  std::vector<double> input;

  static GradientStore zeros_like(std::span<const DenseLayer> layers);
  void set_zero();
};

/// Gradients of upstream . output with respect to every weight, bias and the input.
GradientStore backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                       std::span<const double> upstream);

/// Adds parameter gradients into `acc` (input gradient not stored) and
/// returns the input gradient. Lets a batch share one store.
std::vector<double> accumulate_backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                                        std::span<const double> upstream, GradientStore& acc);

/// Weight and bias buffers of each layer, in order, as optimizer blocks.
std::vector<std::span<double>> parameter_blocks(std::span<DenseLayer> layers);
std::vector<std::span<const double>> gradient_blocks(const GradientStore& grads);

// Checkpoint: "MMNN", u32 version, u32 layer count, then per layer u64 in_dim,
// u64 out_dim, u8 activation tag, weights (row-major) and bias as
// little-endian float64.
void write_layers(BinaryWriter& w, std::span<const DenseLayer> layers);
std::vector<DenseLayer> read_layers(BinaryReader& r);
std::string serialize_layers(std::span<const DenseLayer> layers);
std::vector<DenseLayer> deserialize_layers(std::string_view bytes);

}  // namespace mimic::nn
