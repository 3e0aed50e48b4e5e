#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "irmae/ops.hpp"
#include "irmae/rng.hpp"
#include "irmae/tensor.hpp"

namespace irmae {

enum class Variant { ae, irmae, vae, ae_l1, ae_l2 };
enum class StackMode { trainable, fixed, shared, nonlinear };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);
StackMode stack_mode_from_name(const std::string& name);
std::string stack_mode_name(StackMode m);

enum class LayerKind { fc, conv, convt, act_relu, act_tanh, act_sigmoid, view };

// One entry of an architecture blueprint. `out` is the output feature or
// channel count for parametrized layers; `view` holds per-sample target dims
// for reshape entries. All conv layers are 4x4, stride 2, pad 1.
struct LayerSpec {
  LayerKind kind;
  std::size_t out = 0;
  Shape view;
};

struct ArchSpec {
  std::string name;       // shapes_conv | mnist_conv | mlp | toy_linear
  Shape input;            // per-sample dims, e.g. [3,32,32] or [D]
  std::size_t latent_dim = 0;
  std::vector<LayerSpec> enc, dec;
};

// 32x32x3 conv autoencoder, code dim d (d=32 matches the reference setup)
ArchSpec arch_shapes_conv(std::size_t d);
// 32x32x1 conv encoder with an FC head, code dim d (d=128 reference)
ArchSpec arch_mnist_conv(std::size_t d);
// flatten -> FC(hidden) -> ReLU -> FC(d); decoder mirrored. Image data wants
// the Tanh output; unbounded vector data wants a linear one.
ArchSpec arch_mlp(Shape input, std::size_t hidden, std::size_t d, bool tanh_output = true);
// single affine encoder/decoder pair on flat vectors, no activations
ArchSpec arch_toy_linear(std::size_t input_dim, std::size_t d);

struct LinearStack {
  std::size_t l = 0;
  StackMode mode = StackMode::trainable;
  double init_variance_scale = 1.0;
};

struct Layer {
  LayerKind kind;
  Tensor w, b;
  Shape view;
};

struct Model {
  ArchSpec arch;
  Variant variant = Variant::ae;
  LinearStack stack_spec;
  std::vector<Layer> enc, dec;
  std::vector<Tensor> stack;  // l entries; shared mode aliases one tensor
  double penalty_weight = 0.0;
  double kl_weight = 1.0;

  struct Forward {
    Tensor recon;
    Tensor code;   // post-stack code (the z that the decoder consumed)
    Tensor mu;     // vae only
    Tensor logvar;  // vae only
  };

  // rng drives vae reparameterization sampling; pass nullptr for the
  // deterministic mean path (and always for non-vae variants).
  Forward forward(const Tensor& y, Rng* rng = nullptr) const;
  Tensor loss(const Tensor& y, Rng* rng = nullptr) const;
  // deterministic code: stack included; vae returns the mean
  Tensor encode(const Tensor& y) const;
  Tensor decode(const Tensor& z) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> trainable_parameters() const;
  std::size_t parameter_count() const;
};

// Initializes parameters with per-layer fan-in uniform draws from labeled rng
// streams, so architectures sharing a layer prefix share its exact values.
Model build_model(const ArchSpec& spec, const LinearStack& stack, Variant variant,
                  const Rng& rng);

// Folds the stack product into the encoder's final affine layer and returns
// an l=0 model; rejects nonlinear stacks.
Model collapse(const Model& model);

}  // namespace irmae
