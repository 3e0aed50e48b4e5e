#include "irmae/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irmae/checkpoint.hpp"
#include "irmae/datasets.hpp"
#include "irmae/generative.hpp"
#include "irmae/spectral.hpp"
#include "irmae/train.hpp"

namespace irmae {

namespace {

std::string beside(const std::string& checkpoint_path, const std::string& out,
                   const std::string& file) {
  namespace fs = std::filesystem;
  fs::path dir = out.empty() ? fs::path(checkpoint_path).parent_path() : fs::path(out);
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return (dir / file).string();
}

std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> values;
  std::size_t at = 0;
  while (at <= text.size()) {
    const std::size_t comma = std::min(text.find(',', at), text.size());
    const std::string part = text.substr(at, comma - at);
    if (part.empty()) throw ValueError("empty entry in value list '" + text + "'");
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValueError("bad number '" + part + "' in value list");
    }
    at = comma + 1;
  }
  return values;
}

void parse_grid(const std::string& text, std::size_t* w, std::size_t* h) {
  const std::size_t x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    *w = std::stoul(text.substr(0, x));
    *h = std::stoul(text.substr(x + 1));
  } catch (const std::exception&) {
    throw ValueError("grid must look like 10x10, got '" + text + "'");
  }
  if (*w == 0 || *h == 0) throw ValueError("grid dimensions must be positive");
}

Tensor decode_all(const Model& model, const Tensor& codes, std::size_t batch_size = 64) {
  const std::size_t n = codes.shape()[0];
  Shape out_shape = model.arch.input;
  out_shape.insert(out_shape.begin(), n);
  Tensor out = Tensor::zeros(out_shape);
  auto dst = out.data<float>();
  const std::size_t per = shape_numel(model.arch.input);
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t take = std::min(batch_size, n - at);
    std::vector<int> rows(take);
    std::iota(rows.begin(), rows.end(), static_cast<int>(at));
    Tensor recon = model.decode(gather(codes, rows));
    const auto src = recon.data<float>();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(at * per));
  }
  return out;
}

void value_range(const Model& model, double* lo, double* hi) {
  *lo = model.variant == Variant::vae ? 0.0 : -1.0;
  *hi = 1.0;
}

void require_image_model(const Model& model, const std::string& command) {
  if (model.arch.input.size() != 3)
    throw ValueError(command + ": needs an image model, this checkpoint reconstructs " +
                     std::to_string(model.arch.input.size()) + "-d vectors");
}

Tensor training_codes(const Model& model, const RunConfig& config) {
  TrainData data = load_data(config);
  const Model frozen = model.stack.empty() ? model : collapse(model);
  return encode_all(frozen, data.train_images);
}

int cmd_train(RunConfig config) {
  RunOutput out = train(config);
  std::printf("train: %s/model.ckpt eval_loss=%.9g\n", config.output_dir.c_str(),
              out.history.back().eval_loss);
  return 0;
}

int cmd_spectrum(const std::string& ckpt, const std::string& out, double tau, bool tau_set) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  TrainData data = load_data(loaded.config);
  LatentSpectrum spec =
      spectrum(loaded.model, data.eval_images, tau_set ? tau : loaded.config.tau);
  const std::string path = beside(ckpt, out, "spectrum.csv");
  export_spectrum_csv(spec, path);
  std::printf("effective_rank=%zu csv=%s\n", spec.effective_rank, path.c_str());
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& out, const std::string& mode,
               std::size_t clusters, std::size_t count, std::uint64_t seed) {
  if (mode != "mvg" && mode != "gmm") throw ValueError("sample: mode must be mvg or gmm");
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  require_image_model(loaded.model, "sample");
  Tensor codes = training_codes(loaded.model, loaded.config);
  Rng rng(seed);
  Tensor drawn;
  if (mode == "mvg") {
    drawn = sample_mvg(fit_mvg(codes), count, rng);
  } else {
    drawn = sample_gmm(fit_gmm(codes, clusters, rng), count, rng);
  }
  Tensor images = decode_all(loaded.model, drawn);
  double lo, hi;
  value_range(loaded.model, &lo, &hi);
  const std::string path = beside(ckpt, out, "samples_" + mode + ".ppm");
  render_grid(images, 8, path, lo, hi);
  std::printf("samples=%s\n", path.c_str());
  return 0;
}

int cmd_interpolate(const std::string& ckpt, const std::string& out, std::size_t steps,
                    std::uint64_t seed) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  require_image_model(loaded.model, "interpolate");
  TrainData data = load_data(loaded.config);
  const std::size_t n = data.eval_images.shape()[0];
  if (n < 2) throw ValueError("interpolate: need at least 2 eval images");
  Rng rng = Rng(seed).split("interpolate");
  const auto a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - 1)));
  std::size_t b = a;
  while (b == a)
    b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - 1)));
  const auto frames =
      interpolate(loaded.model, gather(data.eval_images, {static_cast<int>(a)}),
                  gather(data.eval_images, {static_cast<int>(b)}), steps);

  Shape shape = loaded.model.arch.input;
  shape.insert(shape.begin(), frames.size());
  Tensor strip = Tensor::zeros(shape);
  auto dst = strip.data<float>();
  const std::size_t per = shape_numel(loaded.model.arch.input);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto src = frames[i].data<float>();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  double lo, hi;
  value_range(loaded.model, &lo, &hi);
  const std::string path = beside(ckpt, out, "interpolate.ppm");
  render_grid(strip, steps, path, lo, hi);
  std::printf("frames=%s\n", path.c_str());
  return 0;
}

int cmd_pca(const std::string& ckpt, const std::string& out, const std::string& grid) {
  std::size_t gw = 10, gh = 10;
  parse_grid(grid, &gw, &gh);
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  require_image_model(loaded.model, "pca");
  Tensor codes = training_codes(loaded.model, loaded.config);
  PcaMap map = fit_pca(codes, 2);
  Tensor images = decode_all(loaded.model, pca_grid_codes(map, gw, gh, 2.0));
  double lo, hi;
  value_range(loaded.model, &lo, &hi);
  const std::string path = beside(ckpt, out, "pca.ppm");
  render_grid(images, gw, path, lo, hi);
  std::printf("grid=%s\n", path.c_str());
  return 0;
}

int cmd_sweep(const RunConfig& base, const std::string& kind, const std::string& values_text) {
  const auto values = parse_value_list(values_text);
  const auto rows = sweep(kind, base, values);
  for (const auto& row : rows)
    std::printf("value=%.9g effective_rank=%.9g eval_loss=%.9g%s\n", row.value,
                row.effective_rank, row.eval_loss, row.failed ? " failed" : "");
  return 0;
}

int cmd_ablate(const RunConfig& config, const std::string& mode) {
  AblateResult result = ablate(mode, config);
  for (const AblateRun* run : {&result.variant, &result.matched})
    std::printf("%s effective_rank=%.9g eval_loss=%.9g\n", run->name.c_str(),
                run->effective_rank, run->eval_loss);
  if (mode == "fixed")
    std::printf("stack_unchanged=%s\n", result.stack_unchanged ? "true" : "false");
  return 0;
}

int cmd_classify(const std::string& ckpt, const std::string& out,
                 const std::string& labels_text, std::size_t seeds, std::uint64_t base_seed,
                 bool supervised) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  ClassifierConfig classifier;
  classifier.seeds = seeds;
  classifier.base_seed = base_seed;
  classifier.supervised = supervised;
  classifier.label_sizes.clear();
  for (double v : parse_value_list(labels_text)) {
    if (v < 1 || v != std::floor(v))
      throw ValueError("classify: label sizes must be positive integers");
    classifier.label_sizes.push_back(static_cast<std::size_t>(v));
  }
  const std::string path =
      beside(ckpt, out, supervised ? "classify_supervised.csv" : "classify.csv");
  const auto rows = classify(loaded.model, loaded.config, classifier, path);
  for (const auto& row : rows)
    std::printf("labels=%zu mean_error=%.9g std_error=%.9g\n", row.labels, row.mean_error,
                row.std_error);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"implicit rank-minimizing autoencoder laboratory"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_dir;
  std::uint64_t seed = 0;
  double tau = 1e-2;
  std::string mode = "mvg", kind, values, grid = "10x10";
  std::string labels = "10,100,1000,10000,60000";
  std::size_t clusters = 4, steps = 8, count = 64, seeds = 3;
  bool supervised = false;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  auto* train_config = train_cmd->add_option("--config", config_path, "run config file");
  train_config->required();
  auto* train_seed = train_cmd->add_option("--seed", seed, "override the config seed");
  auto* train_out = train_cmd->add_option("--out", out_dir, "override the output directory");

  auto* spectrum_cmd =
      app.add_subcommand("spectrum", "latent singular-value spectrum of a checkpoint");
  spectrum_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  spectrum_cmd->add_option("--out", out_dir, "output directory");
  auto* spectrum_tau = spectrum_cmd->add_option("--tau", tau, "effective-rank threshold");

  auto* sample_cmd = app.add_subcommand("sample", "decode draws from a fitted latent prior");
  sample_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  sample_cmd->add_option("--out", out_dir, "output directory");
  sample_cmd->add_option("--mode", mode, "latent prior: mvg or gmm");
  sample_cmd->add_option("--clusters", clusters, "gmm component count");
  sample_cmd->add_option("--count", count, "number of samples");
  sample_cmd->add_option("--seed", seed, "sampling seed");

  auto* interp_cmd =
      app.add_subcommand("interpolate", "decode the latent path between two eval images");
  interp_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  interp_cmd->add_option("--out", out_dir, "output directory");
  interp_cmd->add_option("--steps", steps, "interpolation points");
  interp_cmd->add_option("--seed", seed, "endpoint selection seed");

  auto* pca_cmd = app.add_subcommand("pca", "decode a lattice over the leading principal plane");
  pca_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  pca_cmd->add_option("--out", out_dir, "output directory");
  pca_cmd->add_option("--grid", grid, "lattice size as WxH");

  auto* sweep_cmd = app.add_subcommand("sweep", "one training run per hyperparameter value");
  sweep_cmd->add_option("--config", config_path, "base run config")->required();
  sweep_cmd->add_option("--kind", kind, "depth, variance, or latent_dim")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();
  auto* sweep_seed = sweep_cmd->add_option("--seed", seed, "override the config seed");
  auto* sweep_out = sweep_cmd->add_option("--out", out_dir, "override the output directory");

  auto* ablate_cmd =
      app.add_subcommand("ablate", "train a stack ablation and its matched baseline");
  ablate_cmd->add_option("--config", config_path, "irmae run config")->required();
  ablate_cmd->add_option("--mode", mode, "fixed, nonlinear, or shared")->required();
  auto* ablate_seed = ablate_cmd->add_option("--seed", seed, "override the config seed");
  auto* ablate_out = ablate_cmd->add_option("--out", out_dir, "override the output directory");

  auto* classify_cmd =
      app.add_subcommand("classify", "error rates of an MLP head on encoder codes");
  classify_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  classify_cmd->add_option("--out", out_dir, "output directory");
  classify_cmd->add_option("--labels", labels, "comma-separated labeled-subset sizes");
  classify_cmd->add_option("--seeds", seeds, "number of seeds");
  classify_cmd->add_option("--seed", seed, "base seed");
  classify_cmd->add_flag("--supervised", supervised, "fine-tune the encoder jointly");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::printf("%s", app.help().c_str());
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n%s", e.what(), app.help().c_str());
    return 2;
  }

  try {
    if (*train_cmd) {
      RunConfig config = load_config(config_path);
      if (train_seed->count()) config.seed = seed;
      if (train_out->count()) config.output_dir = out_dir;
      return cmd_train(std::move(config));
    }
    if (*spectrum_cmd)
      return cmd_spectrum(checkpoint_path, out_dir, tau, spectrum_tau->count() > 0);
    if (*sample_cmd) return cmd_sample(checkpoint_path, out_dir, mode, clusters, count, seed);
    if (*interp_cmd) return cmd_interpolate(checkpoint_path, out_dir, steps, seed);
    if (*pca_cmd) return cmd_pca(checkpoint_path, out_dir, grid);
    if (*sweep_cmd) {
      RunConfig config = load_config(config_path);
      if (sweep_seed->count()) config.seed = seed;
      if (sweep_out->count()) config.output_dir = out_dir;
      return cmd_sweep(config, kind, values);
    }
    if (*ablate_cmd) {
      RunConfig config = load_config(config_path);
      if (ablate_seed->count()) config.seed = seed;
      if (ablate_out->count()) config.output_dir = out_dir;
      return cmd_ablate(config, mode);
    }
    if (*classify_cmd)
      return cmd_classify(checkpoint_path, out_dir, labels, seeds, seed, supervised);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace irmae
