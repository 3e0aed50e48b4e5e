#include "irmae/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "irmae/rng.hpp"

namespace irmae {

namespace {

constexpr char kMagic[4] = {'I', 'R', 'M', 'A'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, 4); }
void put_u64(std::string& out, std::uint64_t v) { put_bytes(out, &v, 8); }

struct Reader {
  const std::vector<char>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (n > buf.size() - pos)
      throw FormatError(FormatError::Kind::truncated,
                        "checkpoint: file ends " + std::to_string(n - (buf.size() - pos)) +
                            " bytes early");
  }
  void read(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    read(&v, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

std::uint8_t dtype_code(DType t) { return t == DType::f32 ? 0 : 1; }

}  // namespace

Model build_from_config(const RunConfig& config) {
  validate_config(config);
  ArchSpec arch;
  if (config.encoder == "conv") {
    arch = config.dataset == "mnist" ? arch_mnist_conv(config.latent_dim)
                                     : arch_shapes_conv(config.latent_dim);
  } else {
    Shape input;
    if (config.dataset == "shapes")
      input = {3, 32, 32};
    else if (config.dataset == "mnist")
      input = {1, 32, 32};
    else
      input = {config.toy_dim};
    arch = arch_mlp(std::move(input), config.mlp_hidden, config.latent_dim,
                    config.dataset != "toy");
  }
  LinearStack stack{config.l, stack_mode_from_name(config.stack_mode),
                    config.init_variance_scale};
  Model model = build_model(arch, stack, variant_from_name(config.variant),
                            Rng(config.seed).split("init"));
  model.penalty_weight = config.penalty_weight;
  model.kl_weight = config.kl_weight;
  return model;
}

void save_checkpoint(const Model& model, const RunConfig& config, const std::string& path) {
  const std::string cfg = serialize_config(config);
  const auto params = model.named_parameters();

  std::string out;
  put_bytes(out, kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, cfg.size());
  out += cfg;
  put_u64(out, params.size());
  for (const auto& [name, t] : params) {
    put_u64(out, name.size());
    out += name;
    const std::uint8_t code = dtype_code(t.dtype());
    put_bytes(out, &code, 1);
    put_u64(out, t.ndim());
    for (std::size_t d : t.shape()) put_u64(out, d);
    const std::size_t elem = t.dtype() == DType::f32 ? 4 : 8;
    put_u64(out, t.numel() * elem);
    if (t.dtype() == DType::f32)
      put_bytes(out, t.data<float>().data(), t.numel() * 4);
    else
      put_bytes(out, t.data<double>().data(), t.numel() * 8);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError(FormatError::Kind::io, "checkpoint: failed writing " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "checkpoint: cannot read " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};

  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError(FormatError::Kind::bad_version,
                      "checkpoint: unsupported version " + std::to_string(version));

  const std::uint64_t cfg_len = r.u64();
  const std::string cfg_text = r.str(cfg_len);
  RunConfig config = parse_config(cfg_text);
  Model model = build_from_config(config);

  auto params = model.named_parameters();
  const std::uint64_t count = r.u64();
  if (count != params.size())
    throw FormatError(FormatError::Kind::count_mismatch,
                      "checkpoint: holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));

  for (auto& [name, t] : params) {
    const std::string stored = r.str(r.u64());
    if (stored != name)
      throw FormatError(FormatError::Kind::count_mismatch,
                        "checkpoint: expected tensor '" + name + "', found '" + stored + "'");
    std::uint8_t code;
    r.read(&code, 1);
    if (code > 1)
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "checkpoint: '" + name + "' has unknown dtype code " +
                            std::to_string(code));
    if (code != dtype_code(t.dtype()))
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "checkpoint: '" + name + "' dtype differs from model");
    const std::uint64_t ndim = r.u64();
    if (ndim > 8)
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "checkpoint: '" + name + "' claims " + std::to_string(ndim) +
                            " dimensions");
    Shape dims(ndim);
    for (auto& d : dims) d = r.u64();
    if (dims != t.shape())
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "checkpoint: '" + name + "' is " + shape_str(dims) + ", model wants " +
                            shape_str(t.shape()));
    const std::uint64_t bytes = r.u64();
    const std::size_t elem = t.dtype() == DType::f32 ? 4 : 8;
    if (bytes != t.numel() * elem)
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "checkpoint: '" + name + "' payload is " + std::to_string(bytes) +
                            " bytes, expected " + std::to_string(t.numel() * elem));
    if (t.dtype() == DType::f32)
      r.read(t.data<float>().data(), bytes);
    else
      r.read(t.data<double>().data(), bytes);
  }
  if (r.pos != buf.size())
    throw FormatError(FormatError::Kind::count_mismatch,
                      "checkpoint: " + std::to_string(buf.size() - r.pos) +
                          " trailing bytes after tensor table");
  return {std::move(model), std::move(config)};
}

}  // namespace irmae
