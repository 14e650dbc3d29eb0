#include "mimic/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "mimic/simd/kernels.hpp"

namespace mimic::nn {

namespace {

constexpr std::string_view kNetMagic = "MMNN";
constexpr std::uint32_t kNetVersion = 1;

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

/// Derivative expressed through the activation's output.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

double keep_for(std::span<const double> keep, std::size_t layer) {
  if (keep.empty()) return 1.0;
  if (keep.size() == 1) return keep[0];
  return keep[layer];
}

/// y = bias + W^T x
void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y) {
  y.assign(layer.bias.begin(), layer.bias.end());
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    k.axpy(x[i], layer.weights.row(i).data(), y.data(), y.size());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw InvalidArgument("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                          std::to_string(values_.size()) + " values");
  }
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

DenseLayer init_dense(std::size_t in_dim, std::size_t out_dim, Activation activation, Rng& rng) {
  DenseLayer layer{Matrix(in_dim, out_dim), std::vector<double>(out_dim, 0.0), activation};
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (auto& w : layer.weights.values()) w = (2.0 * rng.uniform() - 1.0) * limit;
  return layer;
}

void check_chain(std::span<const DenseLayer> layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.out_dim()) {
      throw InvalidArgument("layer " + std::to_string(l) + ": bias length " +
                            std::to_string(layer.bias.size()) + " != out_dim " +
                            std::to_string(layer.out_dim()));
    }
    if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
      throw InvalidArgument("layer " + std::to_string(l) + ": in_dim " + std::to_string(layer.in_dim()) +
                            " != previous out_dim " + std::to_string(layers[l - 1].out_dim()));
    }
  }
}

ForwardResult forward(std::span<const DenseLayer> layers, std::span<const double> input,
                      std::span<const double> dropout_keep, Mode mode, std::uint64_t seed) {
  if (layers.empty()) throw InvalidArgument("forward on an empty layer stack");
  if (input.size() != layers.front().in_dim()) {
    throw InvalidArgument("layer 0: input length " + std::to_string(input.size()) + " != in_dim " +
                          std::to_string(layers.front().in_dim()));
  }
  check_chain(layers);
  if (!dropout_keep.empty() && dropout_keep.size() != 1 && dropout_keep.size() + 1 != layers.size()) {
    throw InvalidArgument("dropout_keep needs 1 or " + std::to_string(layers.size() - 1) + " entries");
  }

  ForwardResult result;
  auto& cache = result.cache;
  cache.inputs.resize(layers.size());
  cache.activations.resize(layers.size());
  cache.masks.resize(layers.size());
  Rng rng(seed);

  std::vector<double> x(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    std::vector<double> y;
    affine(layer, x, y);
    for (auto& v : y) v = activate(layer.activation, v);
    cache.inputs[l] = std::move(x);
    cache.activations[l] = y;

    const bool hidden = l + 1 < layers.size();
    const double keep = keep_for(dropout_keep, l);
    if (hidden && mode == Mode::kTrain && keep < 1.0) {
      if (!(keep > 0.0)) throw InvalidArgument("dropout keep probability must be in (0, 1]");
      auto& mask = cache.masks[l];
      mask.resize(y.size());
      const double scale = 1.0 / keep;
      for (std::size_t j = 0; j < y.size(); ++j) {
        mask[j] = rng.uniform() < keep ? scale : 0.0;
        y[j] *= mask[j];
      }
    }
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

std::vector<double> infer(std::span<const DenseLayer> layers, std::span<const double> input) {
  if (layers.empty()) throw InvalidArgument("forward on an empty layer stack");
  if (input.size() != layers.front().in_dim()) {
    throw InvalidArgument("layer 0: input length " + std::to_string(input.size()) + " != in_dim " +
                          std::to_string(layers.front().in_dim()));
  }
  check_chain(layers);
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  for (const auto& layer : layers) {
    affine(layer, x, y);
    for (auto& v : y) v = activate(layer.activation, v);
    std::swap(x, y);
  }
  return x;
}

GradientStore GradientStore::zeros_like(std::span<const DenseLayer> layers) {
  GradientStore g;
  g.layers.reserve(layers.size());
  for (const auto& l : layers) {
    g.layers.push_back({Matrix(l.in_dim(), l.out_dim()), std::vector<double>(l.out_dim(), 0.0)});
  }
  if (!layers.empty()) g.input.assign(layers.front().in_dim(), 0.0);
  return g;
}

void GradientStore::set_zero() {
  for (auto& l : layers) {
    l.weights.fill(0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  std::fill(input.begin(), input.end(), 0.0);
}

std::vector<double> accumulate_backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                                        std::span<const double> upstream, GradientStore& acc) {
  if (cache.inputs.size() != layers.size() || acc.layers.size() != layers.size()) {
    throw InvalidArgument("backward: cache or gradient store does not match the layer stack");
  }
  if (upstream.size() != layers.back().out_dim()) {
    throw InvalidArgument("backward: upstream length " + std::to_string(upstream.size()) +
                          " != output dim " + std::to_string(layers.back().out_dim()));
  }
  const auto& k = simd::active_kernels();
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& mask = cache.masks[l];
    const auto& act = cache.activations[l];
    const auto& x = cache.inputs[l];
    for (std::size_t j = 0; j < delta.size(); ++j) {
      if (!mask.empty()) delta[j] *= mask[j];
      delta[j] *= activation_slope(layer.activation, act[j]);
    }
    auto& g = acc.layers[l];
    for (std::size_t j = 0; j < delta.size(); ++j) g.bias[j] += delta[j];
    std::vector<double> dx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] != 0.0) k.axpy(x[i], delta.data(), g.weights.row(i).data(), delta.size());
      dx[i] = k.dot(layer.weights.row(i).data(), delta.data(), delta.size());
    }
    delta = std::move(dx);
  }
  return delta;
}

GradientStore backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                       std::span<const double> upstream) {
  auto g = GradientStore::zeros_like(layers);
  g.input = accumulate_backward(layers, cache, upstream, g);
  return g;
}

std::vector<std::span<double>> parameter_blocks(std::span<DenseLayer> layers) {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.push_back(l.weights.values());
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> gradient_blocks(const GradientStore& grads) {
  std::vector<std::span<const double>> out;
  for (const auto& l : grads.layers) {
    out.push_back(l.weights.values());
    out.emplace_back(l.bias);
  }
  return out;
}

void write_layers(BinaryWriter& w, std::span<const DenseLayer> layers) {
  w.raw(kNetMagic);
  w.u32(kNetVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.u64(l.in_dim());
    w.u64(l.out_dim());
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.f64s(l.weights.values());
    w.f64s(l.bias);
  }
}

std::vector<DenseLayer> read_layers(BinaryReader& r) {
  r.expect(kNetMagic, "mimic network checkpoint");
  if (const auto v = r.u32(); v != kNetVersion) {
    throw IoError("unsupported network checkpoint version " + std::to_string(v));
  }
  const auto n = r.u32();
  std::vector<DenseLayer> layers;
  layers.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto in = r.u64();
    const auto out = r.u64();
    const auto tag = r.u8();
    if (tag > static_cast<std::uint8_t>(Activation::kIdentity)) {
      throw IoError("unknown activation tag " + std::to_string(tag));
    }
    if (in == 0 || out == 0 || in > (std::uint64_t{1} << 32) || out > (std::uint64_t{1} << 32)) {
      throw IoError("implausible layer shape in checkpoint");
    }
    DenseLayer layer;
    layer.activation = static_cast<Activation>(tag);
    layer.weights = Matrix(in, out, r.f64s(in * out));
    layer.bias = r.f64s(out);
    layers.push_back(std::move(layer));
  }
  check_chain(layers);
  return layers;
}

std::string serialize_layers(std::span<const DenseLayer> layers) {
  BinaryWriter w;
  write_layers(w, layers);
  return w.take();
}

std::vector<DenseLayer> deserialize_layers(std::string_view bytes) {
  BinaryReader r(bytes);
  auto layers = read_layers(r);
  if (!r.at_end()) throw IoError("trailing bytes in network checkpoint");
  return layers;
}

}  // namespace mimic::nn
