#include "hypergan/backbone.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hypergan/errors.hpp"
#include "hypergan/hashing.hpp"

namespace hypergan {

namespace {

constexpr char kWeightsMagic[8] = {'H', 'G', 'V', 'G', 'G', '1', '6', '\0'};
constexpr uint32_t kWeightsVersion = 1;

// Max-pool follows these convolution indices.
bool pool_after(size_t conv_index) { return conv_index == 1 || conv_index == 3 || conv_index == 6; }

const torch::Tensor& imagenet_mean() {
  static const torch::Tensor mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  return mean;
}

const torch::Tensor& imagenet_std() {
  static const torch::Tensor std = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
  return std;
}

}  // namespace

const std::vector<ConvShape>& vgg16_block4_layout() {
  static const std::vector<ConvShape> layout = {
      {3, 64},    {64, 64},                   // block 1
      {64, 128},  {128, 128},                 // block 2
      {128, 256}, {256, 256}, {256, 256},     // block 3
      {256, 512}, {512, 512}, {512, 512},     // block 4
  };
  return layout;
}

Vgg16Block4Impl::Vgg16Block4Impl() {
  const auto& layout = vgg16_block4_layout();
  for (size_t i = 0; i < layout.size(); ++i) {
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(layout[i].in_channels, layout[i].out_channels, 3).padding(1));
    convs_.push_back(register_module("conv" + std::to_string(i), conv));
  }
}

torch::Tensor Vgg16Block4Impl::forward(torch::Tensor x) {
  for (size_t i = 0; i < convs_.size(); ++i) {
    x = torch::relu(convs_[i]->forward(x));
    if (pool_after(i)) x = torch::max_pool2d(x, 2, 2);
  }
  return x;
}

PerceptualEmbedder::PerceptualEmbedder(Vgg16Block4 net, std::string id)
    : net_(std::move(net)), backbone_id_(std::move(id)) {
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

PerceptualEmbedder PerceptualEmbedder::from_weights(const std::filesystem::path& weights) {
  const std::string asset = "VGG-16 ImageNet weights (convolutions 1_1 .. 4_3)";
  if (!std::filesystem::exists(weights)) {
    throw SetupError("missing " + asset + " at '" + weights.string() +
                     "'; export them with tools/export_vgg16_weights.py");
  }
  std::ifstream in(weights, std::ios::binary);
  char magic[8];
  uint32_t version = 0, layers = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&layers), sizeof(layers));
  const auto& layout = vgg16_block4_layout();
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0 || version != kWeightsVersion ||
      layers != layout.size()) {
    throw SetupError("'" + weights.string() + "' is not a valid " + asset + " file");
  }
  Vgg16Block4 net;
  torch::NoGradGuard no_grad;
  uint64_t digest = kFnvOffset;
  for (size_t i = 0; i < layout.size(); ++i) {
    uint32_t dims[4];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] != layout[i].out_channels || dims[1] != layout[i].in_channels || dims[2] != 3 ||
        dims[3] != 3) {
      throw SetupError("layer " + std::to_string(i) + " of '" + weights.string() + "' has the wrong shape");
    }
    auto& conv = net->convs()[i];
    in.read(reinterpret_cast<char*>(conv->weight.data_ptr<float>()), conv->weight.numel() * sizeof(float));
    in.read(reinterpret_cast<char*>(conv->bias.data_ptr<float>()), conv->bias.numel() * sizeof(float));
    if (!in) throw SetupError("'" + weights.string() + "' is truncated at layer " + std::to_string(i));
    digest = fnv1a(conv->weight.data_ptr<float>(), conv->weight.numel() * sizeof(float), digest);
    digest = fnv1a(conv->bias.data_ptr<float>(), conv->bias.numel() * sizeof(float), digest);
  }
  return PerceptualEmbedder(net, "vgg16:" + to_hex(digest));
}

PerceptualEmbedder PerceptualEmbedder::random(uint64_t seed) {
  Vgg16Block4 net;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& conv : net->convs()) {
    // He-normal keeps activations from vanishing through ten ReLU layers.
    const double fan_in = static_cast<double>(conv->weight.size(1) * 9);
    conv->weight.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    conv->bias.zero_();
  }
  return PerceptualEmbedder(net, "vgg16-random:" + std::to_string(seed));
}

PerceptualEmbedder PerceptualEmbedder::from_spec(const std::string& spec) {
  const std::string prefix = "random:";
  if (spec.rfind(prefix, 0) == 0) {
    try {
      return random(std::stoull(spec.substr(prefix.size())));
    } catch (const std::logic_error&) {
      throw ConfigError("bad backbone spec '" + spec + "'");
    }
  }
  return from_weights(spec);
}

Embedding PerceptualEmbedder::embed(const Patch& patch) const { return embed(patch.data); }

Embedding PerceptualEmbedder::embed(const torch::Tensor& patch) const {
  if (patch.dim() != 3 || patch.size(0) != 3 || patch.size(1) != patch.size(2)) {
    throw ShapeError("embedding expects a square 3xPxP patch");
  }
  torch::NoGradGuard no_grad;
  auto unit = (patch.detach().to(torch::kFloat32).unsqueeze(0) + 1.0f) / 2.0f;
  auto input = (unit - imagenet_mean()) / imagenet_std();
  auto features = net_->forward(input).flatten().contiguous();
  Embedding out;
  out.vector.assign(features.data_ptr<float>(), features.data_ptr<float>() + features.numel());
  double sq = 0.0;
  for (float v : out.vector) {
    if (!std::isfinite(v)) throw Error("backbone produced a non-finite embedding");
    sq += static_cast<double>(v) * v;
  }
  out.norm = std::sqrt(sq);
  return out;
}

int64_t PerceptualEmbedder::dimension_for(int64_t patch_size) {
  int64_t s = patch_size;
  for (int i = 0; i < 3; ++i) s /= 2;
  return 512 * s * s;
}

void save_vgg16_weights(Vgg16Block4& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const uint32_t layers = static_cast<uint32_t>(net->convs().size());
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  out.write(reinterpret_cast<const char*>(&kWeightsVersion), sizeof(kWeightsVersion));
  out.write(reinterpret_cast<const char*>(&layers), sizeof(layers));
  for (auto& conv : net->convs()) {
    auto w = conv->weight.detach().contiguous();
    auto b = conv->bias.detach().contiguous();
    const uint32_t dims[4] = {static_cast<uint32_t>(w.size(0)), static_cast<uint32_t>(w.size(1)),
                              static_cast<uint32_t>(w.size(2)), static_cast<uint32_t>(w.size(3))};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(w.data_ptr<float>()), w.numel() * sizeof(float));
    out.write(reinterpret_cast<const char*>(b.data_ptr<float>()), b.numel() * sizeof(float));
  }
}

}  // namespace hypergan
