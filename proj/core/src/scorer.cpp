#include "densescan/scorer.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "densescan/errors.hpp"
#include "densescan/rng.hpp"
#include "json.hpp"

namespace densescan {
namespace {

std::atomic<std::uint64_t> g_conv_macs{0};

// Valid (no padding) convolution, stride 1. The loop nest keeps the per-site
// accumulation order (bias, then ci->ky->kx ascending) independent of the
// input extent, so a window pass reproduces the patch pass at every site.
void conv_forward(const Tensor& in, Tensor& out, const float* w, const float* b, int k) {
  const int oh = out.height, ow = out.width;
  for (int co = 0; co < out.channels; ++co) {
    float* op = out.channel(co);
    const float bias = b[co];
    for (std::size_t i = 0; i < out.plane(); ++i) op[i] = bias;
    for (int ci = 0; ci < in.channels; ++ci) {
      const float* ip = in.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const float wv = w[((static_cast<std::size_t>(co) * in.channels + ci) * k + ky) * k + kx];
          for (int y = 0; y < oh; ++y) {
            const float* irow = ip + static_cast<std::size_t>(y + ky) * in.width + kx;
            float* orow = op + static_cast<std::size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
  g_conv_macs.fetch_add(static_cast<std::uint64_t>(oh) * ow * k * k * in.channels * out.channels,
                        std::memory_order_relaxed);
}

void conv_backward(const Tensor& in, const Tensor& dout, Tensor& din, ConvParams& grad,
                   const float* w, int k) {
  const int oh = dout.height, ow = dout.width;
  for (int co = 0; co < dout.channels; ++co) {
    const float* dop = dout.channel(co);
    double db = 0;
    for (std::size_t i = 0; i < dout.plane(); ++i) db += dop[i];
    grad.bias[co] += static_cast<float>(db);
    for (int ci = 0; ci < in.channels; ++ci) {
      const float* ip = in.channel(ci);
      float* dip = din.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t widx =
              ((static_cast<std::size_t>(co) * in.channels + ci) * k + ky) * k + kx;
          const float wv = w[widx];
          float dw = 0;
          for (int y = 0; y < oh; ++y) {
            const float* irow = ip + static_cast<std::size_t>(y + ky) * in.width + kx;
            float* dirow = dip + static_cast<std::size_t>(y + ky) * in.width + kx;
            const float* dorow = dop + static_cast<std::size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              dw += dorow[x] * irow[x];
              dirow[x] += wv * dorow[x];
            }
          }
          grad.weights[widx] += dw;
        }
      }
    }
  }
}

Tensor maxpool_forward(const Tensor& in) {
  Tensor out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const float a = in.at(c, 2 * y, 2 * x);
        const float b = in.at(c, 2 * y, 2 * x + 1);
        const float d = in.at(c, 2 * y + 1, 2 * x);
        const float e = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = std::max(std::max(a, b), std::max(d, e));
      }
    }
  }
  return out;
}

void maxpool_backward(const Tensor& in, const Tensor& dout, Tensor& din) {
  for (int c = 0; c < dout.channels; ++c) {
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        // Route to the first maximum in scan order.
        int by = 2 * y, bx = 2 * x;
        float best = in.at(c, by, bx);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const float v = in.at(c, 2 * y + dy, 2 * x + dx);
            if (v > best) {
              best = v;
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
          }
        }
        din.at(c, by, bx) += dout.at(c, y, x);
      }
    }
  }
}

}  // namespace

void NetGradients::zero() {
  for (auto& p : conv) {
    std::fill(p.weights.begin(), p.weights.end(), 0.0f);
    std::fill(p.bias.begin(), p.bias.end(), 0.0f);
  }
}

ConvNet::ConvNet(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw SpecError("empty layer list");
  if (layers_.back().kind != LayerKind::Softmax) {
    throw SpecError("final layer must be Softmax");
  }
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::Softmax) throw SpecError("Softmax before the final layer");
  }

  int channels = -1;  // unknown until the first conv
  int rf = 1, stride = 1;
  conv_index_.assign(layers_.size(), -1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Conv1x1: {
        const int k = l.kind == LayerKind::Conv1x1 ? 1 : l.kernel;
        if (k <= 0) throw SpecError("conv kernel must be positive");
        if (l.in_channels <= 0 || l.out_channels <= 0) {
          throw SpecError("conv channel counts must be positive");
        }
        if (channels == -1) {
          input_channels_ = l.in_channels;
        } else if (channels != l.in_channels) {
          throw SpecError("layer " + std::to_string(i) + " expects " +
                          std::to_string(l.in_channels) + " channels, got " +
                          std::to_string(channels));
        }
        channels = l.out_channels;
        rf += (k - 1) * stride;
        conv_index_[i] = static_cast<int>(params_.size());
        ConvParams p;
        p.weights.assign(static_cast<std::size_t>(l.out_channels) * l.in_channels * k * k, 0.0f);
        p.bias.assign(l.out_channels, 0.0f);
        params_.push_back(std::move(p));
        break;
      }
      case LayerKind::MaxPool:
        rf += stride;
        stride *= 2;
        break;
      case LayerKind::ReLU:
        break;
      case LayerKind::Softmax:
        if (channels != 2) {
          throw SpecError("Softmax head must see exactly 2 channels, got " +
                          std::to_string(channels));
        }
        break;
    }
  }
  if (input_channels_ == 0) throw SpecError("net has no conv layer");
  geometry_ = {rf, stride};
}

ConvNet ConvNet::toy_default(int input_channels) {
  return ConvNet({LayerSpec::conv(5, input_channels, 8), LayerSpec::relu(), LayerSpec::maxpool(),
                  LayerSpec::conv(5, 8, 16), LayerSpec::relu(), LayerSpec::maxpool(),
                  LayerSpec::conv(2, 16, 32), LayerSpec::conv1x1(32, 2), LayerSpec::softmax()});
}

void ConvNet::init_random(std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    ConvParams& p = params_[i];
    const std::size_t fan_in = p.weights.size() / p.bias.size();
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& w : p.weights) w = dist(rng);
    std::fill(p.bias.begin(), p.bias.end(), 0.0f);
  }
}

Tensor ConvNet::forward_logits(const Tensor& input, ForwardCache* cache) const {
  if (input.channels != input_channels_) {
    throw SizeError("input has " + std::to_string(input.channels) + " channels, net expects " +
                    std::to_string(input_channels_));
  }
  if (input.height < geometry_.receptive_field || input.width < geometry_.receptive_field) {
    throw SizeError("input " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                    " smaller than receptive field " + std::to_string(geometry_.receptive_field));
  }

  Tensor cur = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (cache) cache->inputs.push_back(cur);
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Conv1x1: {
        const int k = l.kind == LayerKind::Conv1x1 ? 1 : l.kernel;
        const ConvParams& p = params_[conv_index_[i]];
        Tensor out(l.out_channels, cur.height - k + 1, cur.width - k + 1);
        conv_forward(cur, out, p.weights.data(), p.bias.data(), k);
        cur = std::move(out);
        break;
      }
      case LayerKind::ReLU:
        for (auto& v : cur.data) v = v > 0.0f ? v : 0.0f;
        break;
      case LayerKind::MaxPool:
        cur = maxpool_forward(cur);
        break;
      case LayerKind::Softmax:
        // handled by forward(); logits stop here
        break;
    }
  }
  return cur;
}

ProbabilityGrid ConvNet::forward(const Tensor& input) const {
  Tensor logits = forward_logits(input);
  ProbabilityGrid grid;
  grid.height = logits.height;
  grid.width = logits.width;
  grid.origin = geometry_;
  grid.p.resize(logits.plane());
  const float* normal = logits.channel(0);
  const float* tumor = logits.channel(1);
  for (std::size_t i = 0; i < logits.plane(); ++i) {
    // softmax over {normal, tumor}
    const float m = std::max(normal[i], tumor[i]);
    const float en = std::exp(normal[i] - m);
    const float et = std::exp(tumor[i] - m);
    grid.p[i] = et / (en + et);
  }
  return grid;
}

ProbabilityGrid ConvNet::forward(const ImageRGB& image) const { return forward(to_tensor(image)); }

float ConvNet::patch_score(const Tensor& patch) const {
  if (patch.height != geometry_.receptive_field || patch.width != geometry_.receptive_field) {
    throw SizeError("patch must be exactly " + std::to_string(geometry_.receptive_field) + "x" +
                    std::to_string(geometry_.receptive_field));
  }
  return forward(patch).at(0, 0);
}

float ConvNet::patch_score(const ImageRGB& patch) const { return patch_score(to_tensor(patch)); }

void ConvNet::backward(const ForwardCache& cache, const Tensor& dlogits,
                       NetGradients& grads) const {
  if (cache.inputs.size() != layers_.size()) throw SpecError("forward cache layer count mismatch");

  Tensor dcur = dlogits;
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = layers_[i];
    const Tensor& in = cache.inputs[i];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Conv1x1: {
        const int k = l.kind == LayerKind::Conv1x1 ? 1 : l.kernel;
        const ConvParams& p = params_[conv_index_[i]];
        Tensor din(in.channels, in.height, in.width);
        conv_backward(in, dcur, din, grads.conv[conv_index_[i]], p.weights.data(), k);
        dcur = std::move(din);
        break;
      }
      case LayerKind::ReLU: {
        for (std::size_t j = 0; j < dcur.data.size(); ++j) {
          if (in.data[j] <= 0.0f) dcur.data[j] = 0.0f;
        }
        break;
      }
      case LayerKind::MaxPool: {
        Tensor din(in.channels, in.height, in.width);
        maxpool_backward(in, dcur, din);
        dcur = std::move(din);
        break;
      }
      case LayerKind::Softmax:
        // caller supplies d(loss)/d(logits); nothing to do
        break;
    }
  }
}

NetGradients ConvNet::make_gradients() const {
  NetGradients g;
  for (const auto& p : params_) {
    ConvParams zero;
    zero.weights.assign(p.weights.size(), 0.0f);
    zero.bias.assign(p.bias.size(), 0.0f);
    g.conv.push_back(std::move(zero));
  }
  return g;
}

bool ConvNet::layer_specs_equal(const ConvNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.kind != b.kind || a.kernel != b.kernel || a.in_channels != b.in_channels ||
        a.out_channels != b.out_channels) {
      return false;
    }
  }
  return true;
}

bool ConvNet::params_equal(const ConvNet& other) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].weights != other.params_[i].weights) return false;
    if (params_[i].bias != other.params_[i].bias) return false;
  }
  return true;
}

std::uint64_t conv_mac_count() { return g_conv_macs.load(std::memory_order_relaxed); }
void reset_conv_mac_count() { g_conv_macs.store(0, std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

const char kMagic[7] = {'F', 'C', 'N', 'W', 'v', '1', '\n'};

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Conv1x1: return "conv1x1";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "conv1x1") return LayerKind::Conv1x1;
  if (s == "relu") return LayerKind::ReLU;
  if (s == "maxpool") return LayerKind::MaxPool;
  if (s == "softmax") return LayerKind::Softmax;
  throw FormatError("unknown layer kind '" + s + "'");
}

}  // namespace

void save_net(const ConvNet& net, const std::filesystem::path& path) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json jl{{"kind", kind_name(l.kind)}};
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Conv1x1) {
      jl["kernel"] = l.kind == LayerKind::Conv1x1 ? 1 : l.kernel;
      jl["in"] = l.in_channels;
      jl["out"] = l.out_channels;
    }
    layers.push_back(jl);
  }
  const std::string header =
      nlohmann::json{{"input_channels", net.input_channels()}, {"layers", layers}}.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), header.size());
  for (int i = 0; i < net.conv_layer_count(); ++i) {
    const ConvParams& p = net.conv_params(i);
    out.write(reinterpret_cast<const char*>(p.weights.data()), p.weights.size() * sizeof(float));
    out.write(reinterpret_cast<const char*>(p.bias.data()), p.bias.size() * sizeof(float));
  }
  if (!out) throw IoError("failed writing weights file " + path.string());
}

ConvNet load_net(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a weights file: " + path.string());
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw FormatError("truncated weights header in " + path.string());

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad weights header: " + std::string(e.what()));
  }

  std::vector<LayerSpec> layers;
  for (const auto& jl : j.at("layers")) {
    LayerSpec l;
    l.kind = kind_from_name(jl.at("kind").get<std::string>());
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Conv1x1) {
      l.kernel = jl.at("kernel").get<int>();
      l.in_channels = jl.at("in").get<int>();
      l.out_channels = jl.at("out").get<int>();
    }
    layers.push_back(l);
  }

  ConvNet net(std::move(layers));
  for (int i = 0; i < net.conv_layer_count(); ++i) {
    ConvParams& p = net.conv_params(i);
    in.read(reinterpret_cast<char*>(p.weights.data()), p.weights.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(p.bias.data()), p.bias.size() * sizeof(float));
  }
  if (!in) throw FormatError("truncated weight blob in " + path.string());
  return net;
}

}  // namespace densescan
