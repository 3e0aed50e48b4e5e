#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace irmae {

struct RunConfig {
  std::string dataset = "shapes";  // shapes | mnist | toy
  std::string variant = "irmae";   // ae | irmae | vae | ae_l1 | ae_l2
  std::size_t latent_dim = 32;
  std::size_t l = 2;
  std::string stack_mode = "trainable";  // trainable | fixed | shared | nonlinear
  double init_variance_scale = 1.0;
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double penalty_weight = 1e-3;  // code penalty for ae_l1 / ae_l2
  double kl_weight = 1.0;        // KL term weight for vae
  std::size_t train_size = 50000;
  std::size_t eval_size = 10000;
  double tau = 1e-2;
  std::string output_dir = "out";
  std::string data_dir = "data/mnist";  // IDX directory for the mnist dataset
  std::string encoder = "conv";         // conv | mlp
  std::size_t mlp_hidden = 256;
  std::size_t toy_dim = 16;
  std::size_t toy_rank = 3;
  double toy_noise = 0.01;
};

// Dataset-specific defaults; throws ValueError for an unknown dataset name.
RunConfig default_config(const std::string& dataset);

// Flat key=value text. '#' starts a comment; keys default per the `dataset`
// entry; unknown or repeated keys and malformed values are hard errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Every key in a fixed order, one per line, floats at full precision.
std::string serialize_config(const RunConfig& config);

void validate_config(const RunConfig& config);

}  // namespace irmae
