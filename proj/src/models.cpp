#include "irmae/models.hpp"

#include <algorithm>
#include <cmath>

namespace irmae {

namespace {

constexpr std::size_t kKernel = 4;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPad = 1;

bool is_affine(LayerKind k) {
  return k == LayerKind::fc || k == LayerKind::conv || k == LayerKind::convt;
}

struct ParamDims {
  Shape w, b;
  std::size_t fan_in;
};

// Walks one blueprint entry: returns parameter dims (affine kinds) and
// advances the per-sample shape.
ParamDims advance(const LayerSpec& spec, Shape& cur, const std::string& where) {
  switch (spec.kind) {
    case LayerKind::fc: {
      if (cur.size() != 1)
        throw ShapeError(where + ": fc layer needs a flat input, have " + shape_str(cur));
      const std::size_t in = cur[0];
      cur = {spec.out};
      return {{spec.out, in}, {spec.out}, in};
    }
    case LayerKind::conv: {
      if (cur.size() != 3)
        throw ShapeError(where + ": conv layer needs [C,H,W] input, have " + shape_str(cur));
      const std::size_t c = cur[0], h = cur[1], w = cur[2];
      if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2)
        throw ShapeError(where + ": conv layer needs even spatial dims, have " + shape_str(cur));
      cur = {spec.out, h / 2, w / 2};
      return {{spec.out, c, kKernel, kKernel}, {spec.out}, c * kKernel * kKernel};
    }
    case LayerKind::convt: {
      if (cur.size() != 3)
        throw ShapeError(where + ": convt layer needs [C,H,W] input, have " + shape_str(cur));
      const std::size_t c = cur[0], h = cur[1], w = cur[2];
      cur = {spec.out, 2 * h, 2 * w};
      return {{c, spec.out, kKernel, kKernel}, {spec.out}, c * kKernel * kKernel};
    }
    case LayerKind::view: {
      if (shape_numel(spec.view) != shape_numel(cur))
        throw ShapeError(where + ": view " + shape_str(spec.view) + " does not match " +
                         shape_str(cur));
      cur = spec.view;
      return {};
    }
    default:
      return {};
  }
}

Tensor init_uniform(const Shape& shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(shape, DType::f32, true);
  auto d = t.data<float>();
  for (auto& v : d) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

std::vector<Layer> build_layers(const std::vector<LayerSpec>& specs, const Shape& input,
                                const Rng& rng, const std::string& side, Shape* out_shape) {
  Shape cur = input;
  std::vector<Layer> layers;
  layers.reserve(specs.size());
  std::size_t affine_ordinal = 0;
  for (const auto& spec : specs) {
    Layer layer;
    layer.kind = spec.kind;
    layer.view = spec.view;
    const ParamDims dims = advance(spec, cur, side);
    if (is_affine(spec.kind)) {
      Rng stream = rng.split(side, affine_ordinal++);
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims.fan_in));
      layer.w = init_uniform(dims.w, bound, stream);
      layer.b = init_uniform(dims.b, bound, stream);
    }
    layers.push_back(std::move(layer));
  }
  *out_shape = cur;
  return layers;
}

Tensor run_layers(const std::vector<Layer>& layers, Tensor x) {
  for (const auto& layer : layers) {
    switch (layer.kind) {
      case LayerKind::fc: x = ops::linear(x, layer.w, layer.b); break;
      case LayerKind::conv: x = ops::conv2d(x, layer.w, layer.b, kStride, kPad); break;
      case LayerKind::convt: x = ops::conv_transpose2d(x, layer.w, layer.b, kStride, kPad); break;
      case LayerKind::act_relu: x = ops::relu(x); break;
      case LayerKind::act_tanh: x = ops::tanh(x); break;
      case LayerKind::act_sigmoid: x = ops::sigmoid(x); break;
      case LayerKind::view: {
        Shape full{x.shape()[0]};
        full.insert(full.end(), layer.view.begin(), layer.view.end());
        x = ops::reshape(x, full);
        break;
      }
    }
  }
  return x;
}

}  // namespace

Variant variant_from_name(const std::string& name) {
  if (name == "ae") return Variant::ae;
  if (name == "irmae") return Variant::irmae;
  if (name == "vae") return Variant::vae;
  if (name == "ae_l1") return Variant::ae_l1;
  if (name == "ae_l2") return Variant::ae_l2;
  throw ValueError("unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ae: return "ae";
    case Variant::irmae: return "irmae";
    case Variant::vae: return "vae";
    case Variant::ae_l1: return "ae_l1";
    case Variant::ae_l2: return "ae_l2";
  }
  return "ae";
}

StackMode stack_mode_from_name(const std::string& name) {
  if (name == "trainable") return StackMode::trainable;
  if (name == "fixed") return StackMode::fixed;
  if (name == "shared") return StackMode::shared;
  if (name == "nonlinear") return StackMode::nonlinear;
  throw ValueError("unknown stack mode '" + name + "'");
}

std::string stack_mode_name(StackMode m) {
  switch (m) {
    case StackMode::trainable: return "trainable";
    case StackMode::fixed: return "fixed";
    case StackMode::shared: return "shared";
    case StackMode::nonlinear: return "nonlinear";
  }
  return "trainable";
}

namespace {

LayerSpec conv_of(std::size_t o) { return {LayerKind::conv, o, {}}; }
LayerSpec convt_of(std::size_t o) { return {LayerKind::convt, o, {}}; }
LayerSpec fc_of(std::size_t o) { return {LayerKind::fc, o, {}}; }
LayerSpec relu_spec() { return {LayerKind::act_relu, 0, {}}; }
LayerSpec tanh_spec() { return {LayerKind::act_tanh, 0, {}}; }
LayerSpec view_of(Shape s) { return {LayerKind::view, 0, std::move(s)}; }

}  // namespace

ArchSpec arch_shapes_conv(std::size_t d) {
  ArchSpec spec;
  spec.name = "shapes_conv";
  spec.input = {3, 32, 32};
  spec.latent_dim = d;
  spec.enc = {conv_of(32),  relu_spec(), conv_of(64),  relu_spec(), conv_of(128),
              relu_spec(),  conv_of(256), relu_spec(), conv_of(d),  view_of({d})};
  spec.dec = {view_of({d, 1, 1}), convt_of(256), relu_spec(), convt_of(128), relu_spec(),
              convt_of(64),       relu_spec(),   convt_of(32), relu_spec(),  convt_of(3),
              tanh_spec()};
  return spec;
}

ArchSpec arch_mnist_conv(std::size_t d) {
  ArchSpec spec;
  spec.name = "mnist_conv";
  spec.input = {1, 32, 32};
  spec.latent_dim = d;
  spec.enc = {conv_of(32),  relu_spec(), conv_of(64),      relu_spec(), conv_of(128),
              relu_spec(),  conv_of(256), relu_spec(),     view_of({1024}), fc_of(d)};
  spec.dec = {fc_of(8192), view_of({128, 8, 8}), convt_of(64), relu_spec(), convt_of(1),
              tanh_spec()};
  return spec;
}

ArchSpec arch_mlp(Shape input, std::size_t hidden, std::size_t d, bool tanh_output) {
  ArchSpec spec;
  spec.name = "mlp";
  spec.input = std::move(input);
  spec.latent_dim = d;
  const std::size_t flat = shape_numel(spec.input);
  if (spec.input.size() > 1) spec.enc.push_back(view_of({flat}));
  spec.enc.push_back(fc_of(hidden));
  spec.enc.push_back(relu_spec());
  spec.enc.push_back(fc_of(d));
  spec.dec.push_back(fc_of(hidden));
  spec.dec.push_back(relu_spec());
  spec.dec.push_back(fc_of(flat));
  if (tanh_output) spec.dec.push_back(tanh_spec());
  if (spec.input.size() > 1) spec.dec.push_back(view_of(spec.input));
  return spec;
}

ArchSpec arch_toy_linear(std::size_t input_dim, std::size_t d) {
  ArchSpec spec;
  spec.name = "toy_linear";
  spec.input = {input_dim};
  spec.latent_dim = d;
  spec.enc = {fc_of(d)};
  spec.dec = {fc_of(input_dim)};
  return spec;
}

Model build_model(const ArchSpec& spec, const LinearStack& stack, Variant variant,
                  const Rng& rng) {
  if (variant == Variant::vae && stack.l > 0)
    throw ValueError("vae does not take a linear stack (l must be 0)");
  if (stack.init_variance_scale <= 0.0)
    throw ValueError("init_variance_scale must be positive");
  const std::size_t d = spec.latent_dim;

  ArchSpec arch = spec;
  if (variant == Variant::vae) {
    // The code doubles to mean‖logvar: widen the encoder's last affine layer
    // and any trailing flatten that names the code width.
    auto last = std::find_if(arch.enc.rbegin(), arch.enc.rend(),
                             [](const LayerSpec& s) { return is_affine(s.kind); });
    if (last == arch.enc.rend()) throw ValueError("encoder has no affine layer");
    last->out = 2 * d;
    for (auto& entry : arch.enc)
      if (entry.kind == LayerKind::view && entry.view == Shape{d}) entry.view = {2 * d};
    for (auto& entry : arch.dec)
      if (entry.kind == LayerKind::act_tanh) entry.kind = LayerKind::act_sigmoid;
  }

  Model model;
  model.arch = arch;
  model.variant = variant;
  model.stack_spec = stack;

  Shape enc_out, dec_out;
  model.enc = build_layers(arch.enc, arch.input, rng, "enc", &enc_out);
  const Shape code_shape{variant == Variant::vae ? 2 * d : d};
  if (enc_out != code_shape)
    throw ShapeError("encoder produces " + shape_str(enc_out) + ", expected " +
                     shape_str(code_shape));
  model.dec = build_layers(arch.dec, {d}, rng, "dec", &dec_out);
  if (dec_out != arch.input)
    throw ShapeError("decoder produces " + shape_str(dec_out) + ", expected " +
                     shape_str(arch.input));

  const double bound = std::sqrt(stack.init_variance_scale) / std::sqrt(static_cast<double>(d));
  if (stack.mode == StackMode::shared) {
    Rng stream = rng.split("stack", 0);
    Tensor shared = init_uniform({d, d}, bound, stream);
    model.stack.assign(stack.l, shared);
  } else {
    for (std::size_t i = 0; i < stack.l; ++i) {
      Rng stream = rng.split("stack", i);
      Tensor w = init_uniform({d, d}, bound, stream);
      if (stack.mode == StackMode::fixed) w.set_requires_grad(false);
      model.stack.push_back(std::move(w));
    }
  }
  return model;
}

Model::Forward Model::forward(const Tensor& y, Rng* rng) const {
  Shape expect{y.shape()[0]};
  expect.insert(expect.end(), arch.input.begin(), arch.input.end());
  if (y.shape() != expect)
    throw ShapeError("forward: input " + shape_str(y.shape()) + " does not match " +
                     shape_str(expect));

  Forward out;
  Tensor h = run_layers(enc, y);
  Tensor z;
  if (variant == Variant::vae) {
    const std::size_t d = arch.latent_dim;
    out.mu = ops::slice_cols(h, 0, d);
    out.logvar = ops::slice_cols(h, d, 2 * d);
    if (rng) {
      Tensor eps = Tensor::zeros(out.mu.shape(), y.dtype());
      dispatch_dtype(y.dtype(), [&](auto tag) {
        using T = decltype(tag);
        for (auto& v : eps.data<T>()) v = static_cast<T>(rng->normal());
      });
      Tensor sigma = ops::exp(ops::scale(out.logvar, 0.5));
      z = ops::add(out.mu, ops::mul(sigma, eps));
    } else {
      z = out.mu;
    }
  } else {
    z = h;
    const std::size_t l = stack.size();
    for (std::size_t i = 0; i < l; ++i) {
      z = ops::linear(z, stack[i], Tensor());
      if (stack_spec.mode == StackMode::nonlinear && i + 1 < l) z = ops::relu(z);
    }
  }
  out.code = z;
  out.recon = run_layers(dec, z);
  return out;
}

Tensor Model::loss(const Tensor& y, Rng* rng) const {
  Forward fwd = forward(y, rng);
  Tensor total = ops::mse_loss(fwd.recon, y);
  switch (variant) {
    case Variant::ae_l1:
      total = ops::add(total, ops::penalty(fwd.code, ops::Penalty::l1, penalty_weight));
      break;
    case Variant::ae_l2:
      total = ops::add(total, ops::penalty(fwd.code, ops::Penalty::l2, penalty_weight));
      break;
    case Variant::vae:
      total = ops::add(total, ops::scale(ops::gaussian_kl(fwd.mu, fwd.logvar), kl_weight));
      break;
    default:
      break;
  }
  return total;
}

Tensor Model::encode(const Tensor& y) const { return forward(y, nullptr).code; }

Tensor Model::decode(const Tensor& z) const { return run_layers(dec, z); }

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_side = [&out](const char* side, const std::vector<Layer>& layers) {
    std::size_t ordinal = 0;
    for (const auto& layer : layers) {
      if (!is_affine(layer.kind)) continue;
      const std::string base = std::string(side) + "." + std::to_string(ordinal++);
      out.emplace_back(base + ".w", layer.w);
      out.emplace_back(base + ".b", layer.b);
    }
  };
  add_side("enc", enc);
  add_side("dec", dec);
  const std::size_t n_stack = stack_spec.mode == StackMode::shared ? (stack.empty() ? 0 : 1)
                                                                   : stack.size();
  for (std::size_t i = 0; i < n_stack; ++i)
    out.emplace_back("stack." + std::to_string(i), stack[i]);
  return out;
}

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

Model collapse(const Model& model) {
  if (model.stack_spec.mode == StackMode::nonlinear)
    throw ValueError("collapse: nonlinear stack cannot be folded");

  Model out;
  out.arch = model.arch;
  out.variant = model.variant;
  out.stack_spec = model.stack_spec;
  out.stack_spec.l = 0;
  out.penalty_weight = model.penalty_weight;
  out.kl_weight = model.kl_weight;
  auto clone_side = [](const std::vector<Layer>& layers) {
    std::vector<Layer> copies;
    copies.reserve(layers.size());
    for (const auto& layer : layers) {
      Layer c;
      c.kind = layer.kind;
      c.view = layer.view;
      if (layer.w.defined()) c.w = layer.w.clone().set_requires_grad(true);
      if (layer.b.defined()) c.b = layer.b.clone().set_requires_grad(true);
      copies.push_back(std::move(c));
    }
    return copies;
  };
  out.enc = clone_side(model.enc);
  out.dec = clone_side(model.dec);
  if (model.stack.empty()) return out;

  const std::size_t d = model.arch.latent_dim;
  // P = W_l ... W_1 accumulated in double precision
  Tensor p = model.stack[0].to(DType::f64);
  for (std::size_t i = 1; i < model.stack.size(); ++i)
    p = ops::matmul(model.stack[i].to(DType::f64), p);

  auto last = std::find_if(out.enc.rbegin(), out.enc.rend(),
                           [](const Layer& l) { return is_affine(l.kind); });
  if (last == out.enc.rend()) throw ValueError("collapse: encoder has no affine layer");
  Layer& fin = *last;
  if (fin.w.shape()[0] != d)
    throw ShapeError("collapse: encoder output dim " + std::to_string(fin.w.shape()[0]) +
                     " does not match stack dim " + std::to_string(d));

  const std::size_t cols = fin.w.numel() / d;
  Tensor w_flat = ops::reshape(fin.w.to(DType::f64), {d, cols});
  Tensor new_w = ops::matmul(p, w_flat);
  fin.w = ops::reshape(new_w, fin.w.shape()).to(DType::f32).set_requires_grad(true);
  Tensor b_col = ops::reshape(fin.b.to(DType::f64), {d, 1});
  Tensor new_b = ops::matmul(p, b_col);
  fin.b = ops::reshape(new_b, {d}).to(DType::f32).set_requires_grad(true);
  return out;
}

}  // namespace irmae
