#include "irmae/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include "irmae/checkpoint.hpp"
#include "irmae/datasets.hpp"
#include "irmae/ops.hpp"
#include "irmae/optim.hpp"

namespace irmae {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<int> index_range(std::size_t begin, std::size_t count) {
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), static_cast<int>(begin));
  return idx;
}

Tensor to_unit_range(const Tensor& images) {
  Tensor out = images.clone();
  for (float& v : out.data<float>()) v = 0.5f * (v + 1.0f);
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw FormatError(FormatError::Kind::io, "failed writing " + path);
}

std::string csv_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Model clone_for_training(const Model& src, const RunConfig& config) {
  Model dst = build_from_config(config);
  auto from = src.named_parameters();
  auto to = dst.named_parameters();
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Tensor& s = from[i].second;
    Tensor& d = to[i].second;
    if (s.dtype() == DType::f32)
      std::copy(s.data<float>().begin(), s.data<float>().end(), d.data<float>().begin());
    else
      std::copy(s.data<double>().begin(), s.data<double>().end(), d.data<double>().begin());
  }
  return dst;
}

}  // namespace

TrainData load_data(const RunConfig& config) {
  validate_config(config);
  const bool unit = config.variant == "vae";
  TrainData data;
  if (config.dataset == "shapes") {
    ShapesSet set = gen_shapes(config.train_size + config.eval_size,
                               Rng(config.seed).split("data"));
    Tensor images = unit ? to_unit_range(set.images) : set.images;
    data.train_images = gather(images, index_range(0, config.train_size));
    data.eval_images = gather(images, index_range(config.train_size, config.eval_size));
  } else if (config.dataset == "mnist") {
    MnistSet train = load_mnist(config.data_dir, "train", unit);
    MnistSet eval = load_mnist(config.data_dir, "t10k", unit);
    const std::size_t n_train = train.images.shape()[0];
    const std::size_t n_eval = eval.images.shape()[0];
    if (config.train_size > n_train)
      throw ValueError("config: train_size " + std::to_string(config.train_size) +
                       " exceeds the " + std::to_string(n_train) + " available images");
    if (config.eval_size > n_eval)
      throw ValueError("config: eval_size " + std::to_string(config.eval_size) +
                       " exceeds the " + std::to_string(n_eval) + " available images");
    const auto train_idx = index_range(0, config.train_size);
    const auto eval_idx = index_range(0, config.eval_size);
    data.train_images = gather(train.images, train_idx);
    data.eval_images = gather(eval.images, eval_idx);
    data.train_labels = gather_labels(train.labels, train_idx);
    data.eval_labels = gather_labels(eval.labels, eval_idx);
  } else {
    ToyManifoldSet set =
        gen_toy_manifold(config.toy_dim, config.toy_rank, config.train_size + config.eval_size,
                         config.toy_noise, Rng(config.seed).split("data"));
    data.train_images = gather(set.samples, index_range(0, config.train_size));
    data.eval_images = gather(set.samples, index_range(config.train_size, config.eval_size));
  }
  return data;
}

double eval_mse(const Model& model, const Tensor& images, std::size_t batch_size) {
  const std::size_t n = images.shape()[0];
  if (n == 0) throw ValueError("eval_mse: empty eval set");
  double total = 0.0;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t take = std::min(batch_size, n - at);
    Tensor x = gather(images, index_range(at, take));
    Tensor recon = model.forward(x).recon;
    total += ops::mse_loss(recon, x).item() * static_cast<double>(take);
  }
  return total / static_cast<double>(n);
}

TrainResult train_model(const RunConfig& config, const TrainData& data) {
  Model model = build_from_config(config);
  const bool is_vae = model.variant == Variant::vae;
  Rng root(config.seed);
  Rng batch_rng = root.split("batches");
  Rng eps_rng = root.split("vae-eps");

  Adam opt(model.trainable_parameters(), config.learning_rate);
  const std::size_t n = data.train_images.shape()[0];

  TrainResult result;
  result.history.reserve(config.epochs);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(n, config.batch_size, true, batch_rng);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Tensor x = gather(data.train_images, batches[bi]);
      GradTape tape;
      Tensor loss = model.loss(x, is_vae ? &eps_rng : nullptr);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(bi));
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
      loss_sum += value * static_cast<double>(batches[bi].size());
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.eval_loss = eval_mse(model, data.eval_images, config.batch_size);
    result.history.push_back(stats);
    std::fprintf(stderr, "[train] %s epoch %zu/%zu train=%.6g eval=%.6g\n",
                 config.variant.c_str(), epoch, config.epochs, stats.train_loss,
                 stats.eval_loss);
  }
  result.model = std::move(model);
  return result;
}

RunOutput train(const RunConfig& config) {
  TrainData data = load_data(config);
  TrainResult trained = train_model(config, data);

  std::filesystem::create_directories(config.output_dir);
  write_text_file(config.output_dir + "/config.cfg", serialize_config(config));
  std::string csv = "epoch,train_loss,eval_loss\n";
  for (const auto& row : trained.history) {
    csv += std::to_string(row.epoch);
    csv += ',';
    csv += csv_num(row.train_loss);
    csv += ',';
    csv += csv_num(row.eval_loss);
    csv += '\n';
  }
  write_text_file(config.output_dir + "/metrics.csv", csv);
  save_checkpoint(trained.model, config, config.output_dir + "/model.ckpt");

  return {std::move(trained.model), std::move(trained.history), std::move(data)};
}

namespace {

std::string value_tag(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::size_t integral_value(const std::string& kind, double v) {
  if (!(v >= 0) || v != std::floor(v))
    throw ValueError("sweep: " + kind + " value " + value_tag(v) +
                     " is not a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<SweepRow> sweep(const std::string& kind, const RunConfig& base,
                            const std::vector<double>& values) {
  if (values.empty()) throw ValueError("sweep: no values given");
  if (kind != "depth" && kind != "variance" && kind != "latent_dim")
    throw ValueError("sweep: unknown kind '" + kind + "'");

  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    RunConfig c = base;
    if (kind == "depth")
      c.l = integral_value(kind, v);
    else if (kind == "variance")
      c.init_variance_scale = v;
    else
      c.latent_dim = integral_value(kind, v);
    c.output_dir = base.output_dir + "/" + kind + "_" + value_tag(v);

    SweepRow row;
    row.value = v;
    try {
      RunOutput out = train(c);
      LatentSpectrum spec = spectrum(out.model, out.data.eval_images, c.tau);
      export_spectrum_csv(spec, c.output_dir + "/spectrum.csv");
      row.effective_rank = static_cast<double>(spec.effective_rank);
      row.eval_loss = out.history.back().eval_loss;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "sweep: %s_%s failed: %s\n", kind.c_str(), value_tag(v).c_str(),
                   e.what());
      row.failed = true;
      row.effective_rank = kNan;
      row.eval_loss = kNan;
    }
    rows.push_back(row);
  }

  std::filesystem::create_directories(base.output_dir);
  std::string csv = "value,effective_rank,eval_loss\n";
  for (const auto& row : rows)
    csv += csv_num(row.value) + "," + csv_num(row.effective_rank) + "," +
           csv_num(row.eval_loss) + "\n";
  write_text_file(base.output_dir + "/sweep_" + kind + ".csv", csv);
  return rows;
}

AblateResult ablate(const std::string& mode, const RunConfig& config) {
  if (mode != "fixed" && mode != "nonlinear" && mode != "shared")
    throw ValueError("ablate: unknown mode '" + mode + "'");
  if (config.variant != "irmae" || config.l < 1)
    throw ValueError("ablate: needs an irmae config with l >= 1");

  RunConfig ablated = config;
  ablated.stack_mode = mode;
  ablated.output_dir = config.output_dir + "/" + mode;
  RunConfig matched = config;
  matched.stack_mode = "trainable";
  matched.output_dir = config.output_dir + "/trainable";

  RunOutput aout = train(ablated);
  RunOutput mout = train(matched);

  AblateResult result;
  LatentSpectrum aspec = spectrum(aout.model, aout.data.eval_images, config.tau);
  LatentSpectrum mspec = spectrum(mout.model, mout.data.eval_images, config.tau);
  export_spectrum_csv(aspec, ablated.output_dir + "/spectrum.csv");
  export_spectrum_csv(mspec, matched.output_dir + "/spectrum.csv");
  result.variant = {mode, static_cast<double>(aspec.effective_rank),
                    aout.history.back().eval_loss};
  result.matched = {"trainable", static_cast<double>(mspec.effective_rank),
                    mout.history.back().eval_loss};

  const Model fresh = build_from_config(ablated);
  result.stack_unchanged = true;
  for (std::size_t i = 0; i < fresh.stack.size(); ++i) {
    const auto a = fresh.stack[i].data<float>();
    const auto b = aout.model.stack[i].data<float>();
    if (!std::equal(a.begin(), a.end(), b.begin())) {
      result.stack_unchanged = false;
      break;
    }
  }

  std::filesystem::create_directories(config.output_dir);
  std::string csv = "name,effective_rank,eval_loss\n";
  for (const AblateRun* run : {&result.variant, &result.matched})
    csv += run->name + "," + csv_num(run->effective_rank) + "," + csv_num(run->eval_loss) + "\n";
  write_text_file(config.output_dir + "/ablate_" + mode + ".csv", csv);
  return result;
}

namespace {

struct MlpHead {
  Tensor w1, b1, w2, b2, w3, b3;

  static Tensor uniform_init(Shape shape, std::size_t fan_in, Rng rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (float& v : t.data<float>()) v = static_cast<float>(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
  }

  static MlpHead build(std::size_t in, std::size_t hidden, std::size_t classes,
                       const Rng& rng) {
    MlpHead h;
    h.w1 = uniform_init({hidden, in}, in, rng.split("head.w", 0));
    h.b1 = uniform_init({hidden}, in, rng.split("head.b", 0));
    h.w2 = uniform_init({hidden, hidden}, hidden, rng.split("head.w", 1));
    h.b2 = uniform_init({hidden}, hidden, rng.split("head.b", 1));
    h.w3 = uniform_init({classes, hidden}, hidden, rng.split("head.w", 2));
    h.b3 = uniform_init({classes}, hidden, rng.split("head.b", 2));
    return h;
  }

  Tensor logits(const Tensor& x) const {
    Tensor h = ops::relu(ops::linear(x, w1, b1));
    h = ops::relu(ops::linear(h, w2, b2));
    return ops::linear(h, w3, b3);
  }

  std::vector<Tensor> params() const { return {w1, b1, w2, b2, w3, b3}; }
};

std::vector<Tensor> snapshot(const std::vector<Tensor>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(p.detach().clone());
  return out;
}

void restore(const std::vector<Tensor>& params, const std::vector<Tensor>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto src = saved[i].data<float>();
    Tensor dst = params[i];
    std::copy(src.begin(), src.end(), dst.data<float>().begin());
  }
}

double accuracy(const std::function<Tensor(const Tensor&)>& embed, const MlpHead& head,
                const Tensor& inputs, const std::vector<int>& labels,
                const std::vector<int>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t at = 0; at < rows.size(); at += kChunk) {
    const std::vector<int> part(rows.begin() + static_cast<std::ptrdiff_t>(at),
                                rows.begin() + static_cast<std::ptrdiff_t>(
                                                   std::min(at + kChunk, rows.size())));
    Tensor logits = head.logits(embed(gather(inputs, part)));
    const std::size_t classes = logits.shape()[1];
    const auto lg = logits.data<float>();
    for (std::size_t r = 0; r < part.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (lg[r * classes + c] > lg[r * classes + best]) best = c;
      if (static_cast<int>(best) == labels[static_cast<std::size_t>(part[r])]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace

std::vector<ClassifyRow> classify(const Model& model, const RunConfig& config,
                                  const ClassifierConfig& classifier,
                                  const std::string& csv_path) {
  if (config.dataset != "mnist")
    throw ValueError("classify: needs an mnist checkpoint, got dataset '" + config.dataset +
                     "'");
  if (classifier.seeds == 0) throw ValueError("classify: seeds must be positive");
  if (classifier.label_sizes.empty()) throw ValueError("classify: no labeled sizes given");

  TrainData data = load_data(config);
  const std::size_t n_train = data.train_images.shape()[0];
  const std::size_t classes = 10;

  Tensor frozen_train, frozen_eval;
  if (!classifier.supervised) {
    const Model frozen = model.stack.empty() ? model : collapse(model);
    frozen_train = encode_all(frozen, data.train_images);
    frozen_eval = encode_all(frozen, data.eval_images);
  }
  const auto eval_rows = index_range(0, data.eval_images.shape()[0]);

  std::vector<ClassifyRow> rows;
  for (std::size_t labeled : classifier.label_sizes) {
    if (labeled > n_train)
      throw ValueError("classify: labeled size " + std::to_string(labeled) + " exceeds the " +
                       std::to_string(n_train) + " training images");
    const std::size_t holdout = std::max<std::size_t>(2, labeled / 5);
    if (holdout >= labeled)
      throw ValueError("classify: labeled size " + std::to_string(labeled) +
                       " leaves no training samples after the holdout");

    std::vector<double> errors;
    for (std::size_t run = 0; run < classifier.seeds; ++run) {
      const std::uint64_t seed = classifier.base_seed + run;
      Rng rng(seed);

      std::vector<int> pool(n_train);
      std::iota(pool.begin(), pool.end(), 0);
      Rng pick = rng.split("labels");
      for (std::size_t i = n_train - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(pool[i], pool[j]);
      }
      const std::vector<int> fit_rows(pool.begin(),
                                      pool.begin() + static_cast<std::ptrdiff_t>(labeled - holdout));
      const std::vector<int> val_rows(pool.begin() + static_cast<std::ptrdiff_t>(labeled - holdout),
                                      pool.begin() + static_cast<std::ptrdiff_t>(labeled));

      Model tuned;
      std::function<Tensor(const Tensor&)> embed;
      Tensor inputs;
      std::size_t code_dim;
      if (classifier.supervised) {
        tuned = clone_for_training(model, config);
        embed = [&tuned](const Tensor& x) { return tuned.encode(x); };
        inputs = data.train_images;
        code_dim = tuned.arch.latent_dim;
      } else {
        embed = [](const Tensor& x) { return x; };
        inputs = frozen_train;
        code_dim = frozen_train.shape()[1];
      }

      MlpHead head = MlpHead::build(code_dim, classifier.hidden, classes, rng.split("head"));
      std::vector<Tensor> trained = head.params();
      if (classifier.supervised)
        for (const Tensor& p : tuned.trainable_parameters()) trained.push_back(p);
      Adam opt(trained, classifier.learning_rate);
      Rng batch_rng = rng.split("head-batches");

      double best_acc = -1.0;
      std::vector<Tensor> best_params = snapshot(trained);
      std::size_t stale = 0;
      for (std::size_t epoch = 0; epoch < classifier.max_epochs; ++epoch) {
        const auto batches =
            epoch_batches(fit_rows.size(), classifier.batch_size, true, batch_rng);
        for (const auto& batch : batches) {
          std::vector<int> abs_rows(batch.size());
          std::vector<int> batch_labels(batch.size());
          for (std::size_t i = 0; i < batch.size(); ++i) {
            abs_rows[i] = fit_rows[static_cast<std::size_t>(batch[i])];
            batch_labels[i] =
                data.train_labels[static_cast<std::size_t>(abs_rows[i])];
          }
          GradTape tape;
          Tensor loss =
              ops::softmax_cross_entropy(head.logits(embed(gather(inputs, abs_rows))),
                                         batch_labels);
          tape.backward(loss);
          opt.step();
          opt.zero_grad();
        }
        const double val_acc = accuracy(embed, head, inputs, data.train_labels, val_rows);
        if (val_acc > best_acc) {
          best_acc = val_acc;
          best_params = snapshot(trained);
          stale = 0;
        } else if (++stale >= classifier.patience) {
          break;
        }
      }
      restore(trained, best_params);

      const Tensor& eval_inputs = classifier.supervised ? data.eval_images : frozen_eval;
      const double acc = accuracy(embed, head, eval_inputs, data.eval_labels, eval_rows);
      const double error = 100.0 * (1.0 - acc);
      errors.push_back(error);
      std::fprintf(stderr, "[classify] labels=%zu seed=%llu error=%.2f%%\n", labeled,
                   static_cast<unsigned long long>(seed), error);
    }

    ClassifyRow row;
    row.labels = labeled;
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    row.mean_error = mean;
    row.std_error = errors.size() > 1
                        ? std::sqrt(var / static_cast<double>(errors.size() - 1))
                        : 0.0;
    rows.push_back(row);
  }

  if (!csv_path.empty()) {
    std::string csv = "labels,mean_error,std_error\n";
    for (const auto& row : rows)
      csv += std::to_string(row.labels) + "," + csv_num(row.mean_error) + "," +
             csv_num(row.std_error) + "\n";
    write_text_file(csv_path, csv);
  }
  return rows;
}

}  // namespace irmae
