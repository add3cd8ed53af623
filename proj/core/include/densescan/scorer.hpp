#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densescan/image.hpp"

namespace densescan {

enum class LayerKind { Conv, ReLU, MaxPool, Conv1x1, Softmax };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int kernel = 0;        // Conv only (Conv1x1 implies 1)
  int in_channels = 0;   // Conv / Conv1x1
  int out_channels = 0;  // Conv / Conv1x1

  static LayerSpec conv(int kernel, int in_channels, int out_channels) {
    return {LayerKind::Conv, kernel, in_channels, out_channels};
  }
  static LayerSpec conv1x1(int in_channels, int out_channels) {
    return {LayerKind::Conv1x1, 1, in_channels, out_channels};
  }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, 0}; }
  static LayerSpec maxpool() { return {LayerKind::MaxPool, 0, 0, 0}; }
  static LayerSpec softmax() { return {LayerKind::Softmax, 0, 0, 0}; }
};

struct NetGeometry {
  int receptive_field = 0;
  int total_stride = 0;
};

struct ProbabilityGrid {
  int height = 0;
  int width = 0;
  NetGeometry origin;  // geometry of the net that produced the grid
  std::vector<float> p;

  float at(int y, int x) const { return p[static_cast<std::size_t>(y) * width + x]; }
};

// Per-conv-layer parameter block. Weights are indexed
// [out][in][ky][kx], all float32; accumulation is float32 throughout.
struct ConvParams {
  std::vector<float> weights;
  std::vector<float> bias;
};

struct NetGradients {
  std::vector<ConvParams> conv;  // parallel to ConvNet::conv_layer order

  void zero();
};

// No-padding fully convolutional scorer. Channel 0 = normal, channel 1 =
// tumor. Immutable once the weights are set; forward is pure and callable
// concurrently.
class ConvNet {
 public:
  ConvNet() = default;
  // Zero-initialized weights (constant 0.5 output). Throws SpecError on an
  // inconsistent layer list.
  explicit ConvNet(std::vector<LayerSpec> layers);

  // The default desk-scale net with receptive field 20 and stride 4:
  // [Conv5, ReLU, Pool, Conv5, ReLU, Pool, Conv2, Conv1x1, Softmax].
  static ConvNet toy_default(int input_channels = 3);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_channels() const { return input_channels_; }
  NetGeometry net_geometry() const { return geometry_; }

  int conv_layer_count() const { return static_cast<int>(params_.size()); }
  ConvParams& conv_params(int i) { return params_[i]; }
  const ConvParams& conv_params(int i) const { return params_[i]; }

  void init_random(std::uint64_t seed);

  // Pre-softmax activations; with a cache, records every layer input for
  // backward(). Throws SizeError if the input is smaller than the receptive
  // field.
  struct ForwardCache {
    std::vector<Tensor> inputs;  // inputs[i] = input to layer i
  };
  Tensor forward_logits(const Tensor& input, ForwardCache* cache = nullptr) const;

  // Softmax tumor-probability grid; output side (n - rf)/stride + 1.
  ProbabilityGrid forward(const Tensor& input) const;
  ProbabilityGrid forward(const ImageRGB& image) const;

  // Score of one receptive-field-sized patch == forward(patch)[0,0].
  float patch_score(const ImageRGB& patch) const;
  float patch_score(const Tensor& patch) const;

  // Backpropagates d(loss)/d(logits) through the cached forward pass,
  // accumulating parameter gradients into grads.
  void backward(const ForwardCache& cache, const Tensor& dlogits, NetGradients& grads) const;

  NetGradients make_gradients() const;

  bool operator==(const ConvNet& other) const {
    return input_channels_ == other.input_channels_ && layer_specs_equal(other) &&
           params_equal(other);
  }

 private:
  bool layer_specs_equal(const ConvNet& other) const;
  bool params_equal(const ConvNet& other) const;

  std::vector<LayerSpec> layers_;
  std::vector<ConvParams> params_;
  std::vector<int> conv_index_;  // layer index -> conv params index (-1 otherwise)
  int input_channels_ = 0;
  NetGeometry geometry_;
};

// Process-wide multiply-accumulate counter over all conv layers; the
// instrumentation behind the dense-vs-patch work comparison.
std::uint64_t conv_mac_count();
void reset_conv_mac_count();

// Weight file: magic "FCNWv1\n", uint32 LE header length, JSON header
// describing the layer list, then one float32 LE blob per conv layer
// (weights [out][in][ky][kx] then bias [out]) in layer order.
void save_net(const ConvNet& net, const std::filesystem::path& path);
ConvNet load_net(const std::filesystem::path& path);

}  // namespace densescan
