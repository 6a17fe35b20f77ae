#include "hypergan/networks.hpp"

#include <sstream>

#include "hypergan/errors.hpp"
#include "hypergan/hashing.hpp"

namespace hypergan {

namespace {

namespace nn = torch::nn;

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(1).bias(bias));
}

nn::ConvTranspose2d up(int64_t in, int64_t out, bool bias) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
}

nn::InstanceNorm2d instance_norm(int64_t channels, bool affine) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(affine).track_running_stats(false));
}

template <size_t N>
std::string join(const std::array<int64_t, N>& values) {
  std::string out;
  for (size_t i = 0; i < N; ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

}  // namespace

std::string GeneratorConfig::canonical() const {
  std::ostringstream out;
  out << "generator/v1;in=" << in_channels << ";out=" << out_channels << ";enc=" << join(encoder_channels)
      << ";res=" << bottleneck_blocks << ";dec=" << join(decoder_channels) << ";affine=" << affine_norm;
  return out.str();
}

uint64_t GeneratorConfig::hash() const { return fnv1a(canonical()); }

std::string DiscriminatorConfig::canonical() const {
  std::ostringstream out;
  out << "discriminator/v1;in=" << in_channels << ";ch=" << join(channels) << ";slope=" << leaky_slope
      << ";affine=" << affine_norm;
  return out.str();
}

uint64_t DiscriminatorConfig::hash() const { return fnv1a(canonical()); }

// Convolutions feeding an instance norm carry no bias: the norm subtracts the
// per-channel mean, so such a bias would receive no gradient.

ResidualBlockImpl::ResidualBlockImpl(int64_t channels, bool affine_norm)
    : conv1(register_module("conv1", conv(channels, channels, 3, 1, false))),
      conv2(register_module("conv2", conv(channels, channels, 3, 1, false))),
      norm1(register_module("norm1", instance_norm(channels, affine_norm))),
      norm2(register_module("norm2", instance_norm(channels, affine_norm))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& z) {
  return z + norm2(conv2(torch::relu(norm1(conv1(z)))));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
  const auto [c1, c2, c3] = config_.encoder_channels;
  const auto [u3, u2] = config_.decoder_channels;
  const bool affine = config_.affine_norm;
  enc1 = register_module("enc1", conv(config_.in_channels, c1, 4, 2, true));
  enc2 = register_module("enc2", conv(c1, c2, 4, 2, false));
  enc2_norm = register_module("enc2_norm", instance_norm(c2, affine));
  enc3 = register_module("enc3", conv(c2, c3, 4, 2, false));
  enc3_norm = register_module("enc3_norm", instance_norm(c3, affine));
  for (int i = 0; i < config_.bottleneck_blocks; ++i) bottleneck->push_back(ResidualBlock(c3, affine));
  register_module("bottleneck", bottleneck);
  dec3 = register_module("dec3", up(c3, u3, false));
  dec3_norm = register_module("dec3_norm", instance_norm(u3, affine));
  dec2 = register_module("dec2", up(u3 + c2, u2, false));
  dec2_norm = register_module("dec2_norm", instance_norm(u2, affine));
  head = register_module("head", up(u2 + c1, config_.out_channels, true));
}

void check_generator_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ShapeError("generator expects an Nx3xHxW tensor, got " + std::to_string(x.dim()) + "-d input");
  }
  if (x.size(2) % 8 != 0 || x.size(3) % 8 != 0 || x.size(2) == 0 || x.size(3) == 0) {
    throw ShapeError("generator input " + std::to_string(x.size(3)) + "x" + std::to_string(x.size(2)) +
                     " is not divisible by 8");
  }
}

GeneratorTrace GeneratorImpl::trace(const torch::Tensor& x, SkipAblation ablation) {
  check_generator_input(x);
  GeneratorTrace t;
  t.e1 = torch::relu(enc1(x));
  t.e2 = torch::relu(enc2_norm(enc2(t.e1)));
  t.e3 = torch::relu(enc3_norm(enc3(t.e2)));
  t.m = t.e3;
  for (auto& block : *bottleneck) t.m = block->as<ResidualBlock>()->forward(t.m);
  t.d3 = torch::relu(dec3_norm(dec3(t.m)));
  auto skip2 = ablation.drop_e2 ? torch::zeros_like(t.e2) : t.e2;
  t.d2 = torch::relu(dec2_norm(dec2(torch::cat({t.d3, skip2}, 1))));
  auto skip1 = ablation.drop_e1 ? torch::zeros_like(t.e1) : t.e1;
  t.output = torch::tanh(head(torch::cat({t.d2, skip1}, 1)));
  return t;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) { return trace(x).output; }

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  const auto [c1, c2, c3] = config_.channels;
  conv1 = register_module("conv1", conv(config_.in_channels, c1, 4, 2, true));
  conv2 = register_module("conv2", conv(c1, c2, 4, 2, false));
  norm2 = register_module("norm2", instance_norm(c2, config_.affine_norm));
  conv3 = register_module("conv3", conv(c2, c3, 4, 2, false));
  norm3 = register_module("norm3", instance_norm(c3, config_.affine_norm));
  head = register_module("head", conv(c3, 1, 4, 1, true));
}

int64_t DiscriminatorImpl::output_size(int64_t input_size) {
  int64_t n = input_size;
  for (int i = 0; i < 3; ++i) n = (n + 2 - 4) / 2 + 1;
  return n + 2 - 4 + 1;
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("discriminator expects an Nx3xhxw tensor");
  }
  if (x.size(2) < 16 || x.size(3) < 16) {
    throw ShapeError("discriminator input " + std::to_string(x.size(3)) + "x" + std::to_string(x.size(2)) +
                     " is smaller than 16x16");
  }
  const double slope = config_.leaky_slope;
  auto h = torch::leaky_relu(conv1(x), slope);
  h = torch::leaky_relu(norm2(conv2(h)), slope);
  h = torch::leaky_relu(norm3(conv3(h)), slope);
  return head(h);
}

ImageTensor generator_forward(Generator& generator, const ImageTensor& x) {
  if (x.data.dim() != 3) throw ShapeError("generator_forward expects a 3xHxW image");
  auto out = generator->forward(x.data.unsqueeze(0)).squeeze(0);
  return ImageTensor{out, x.source_id};
}

void init_weights(torch::nn::Module& net, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  auto init_conv = [&](torch::Tensor& weight, torch::Tensor& bias) {
    auto fresh = torch::empty(weight.sizes(), torch::kFloat32).normal_(0.0, 0.02, gen);
    weight.copy_(fresh);
    if (bias.defined()) bias.zero_();
  };
  for (auto& module : net.modules(/*include_self=*/true)) {
    if (auto* c = module->as<torch::nn::Conv2dImpl>()) {
      init_conv(c->weight, c->bias);
    } else if (auto* t = module->as<torch::nn::ConvTranspose2dImpl>()) {
      init_conv(t->weight, t->bias);
    } else if (auto* n = module->as<torch::nn::InstanceNorm2dImpl>()) {
      if (n->weight.defined()) n->weight.fill_(1.0);
      if (n->bias.defined()) n->bias.zero_();
    }
  }
}

int64_t parameter_count(const torch::nn::Module& net) {
  int64_t total = 0;
  for (const auto& p : net.parameters()) total += p.numel();
  return total;
}

uint64_t parameter_hash(const torch::nn::Module& net) {
  uint64_t state = kFnvOffset;
  for (const auto& p : net.parameters()) {
    auto cpu = p.detach().to(torch::kCPU).contiguous();
    state = fnv1a(cpu.data_ptr(), cpu.numel() * cpu.element_size(), state);
  }
  return state;
}

}  // namespace hypergan
