#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "irmae/config.hpp"
#include "irmae/models.hpp"
#include "irmae/spectral.hpp"

namespace irmae {

struct TrainData {
  Tensor train_images;  // [N, ...] matching the model input
  Tensor eval_images;
  std::vector<int> train_labels, eval_labels;  // mnist only, otherwise empty
};

// Materializes the configured dataset: shapes and toy are generated from
// Rng(seed)'s "data" stream, mnist reads IDX files from data_dir. The vae
// variant gets [0,1] images to match its sigmoid output.
TrainData load_data(const RunConfig& config);

struct EpochStats {
  std::size_t epoch = 0;   // 1-based
  double train_loss = 0;   // mean objective over training samples
  double eval_loss = 0;    // reconstruction MSE on the eval split
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

// Deterministic Adam loop over shuffled batches; throws on non-finite loss
// naming the epoch and batch.
TrainResult train_model(const RunConfig& config, const TrainData& data);

struct RunOutput {
  Model model;
  std::vector<EpochStats> history;
  TrainData data;
};

// Full run: loads data, trains, and writes config.cfg, metrics.csv
// (epoch,train_loss,eval_loss) and model.ckpt into config.output_dir.
RunOutput train(const RunConfig& config);

// Mean reconstruction MSE over the deterministic forward path.
double eval_mse(const Model& model, const Tensor& images, std::size_t batch_size);

struct SweepRow {
  double value = 0;
  double effective_rank = 0;  // nan when the run failed
  double eval_loss = 0;       // nan when the run failed
  bool failed = false;
};

// kind: depth | variance | latent_dim. One run per value under
// output_dir/<kind>_<value>/, summarized in output_dir/sweep_<kind>.csv
// (value,effective_rank,eval_loss). Failed runs keep their row, marked nan.
std::vector<SweepRow> sweep(const std::string& kind, const RunConfig& base,
                            const std::vector<double>& values);

struct AblateRun {
  std::string name;
  double effective_rank = 0;
  double eval_loss = 0;
};

struct AblateResult {
  AblateRun variant, matched;      // the ablated stack mode vs trainable
  bool stack_unchanged = false;    // fixed mode: stack bits identical to init
};

// mode: fixed | nonlinear | shared. Trains the ablated model and a matched
// trainable IRMAE on the same data; writes ablate_<mode>.csv
// (name,effective_rank,eval_loss) plus per-run spectrum CSVs.
AblateResult ablate(const std::string& mode, const RunConfig& config);

struct ClassifierConfig {
  std::vector<std::size_t> label_sizes{10, 100, 1000, 10000, 60000};
  std::size_t seeds = 3;
  std::uint64_t base_seed = 0;
  double learning_rate = 1e-3;
  std::size_t hidden = 128;  // two hidden layers of this width
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;  // early stop after this many stale validations
  bool supervised = false;    // fine-tune the encoder jointly
};

struct ClassifyRow {
  std::size_t labels = 0;
  double mean_error = 0;  // percent, averaged over seeds
  double std_error = 0;   // sample standard deviation over seeds
};

// Trains an MLP head (hidden-hidden-10, ReLU) on encoder codes for each
// labeled-subset size; 20% of each subset (min 2) is held out for early
// stopping. Frozen mode uses the collapsed encoder and never touches model
// parameters. Writes labels,mean_error,std_error to csv_path when non-empty.
std::vector<ClassifyRow> classify(const Model& model, const RunConfig& config,
                                  const ClassifierConfig& classifier,
                                  const std::string& csv_path);

}  // namespace irmae
