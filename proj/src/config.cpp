#include "irmae/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "irmae/common.hpp"

namespace irmae {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ValueError("config: invalid value for '" + key + "': '" + value + "'");
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_one_of(const std::string& key, const std::string& value,
                  std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = "config: '" + key + "' must be one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw ValueError(msg + "}, got '" + value + "'");
}

struct KeyValue {
  std::string key, value;
};

std::vector<KeyValue> split_entries(const std::string& text) {
  std::vector<KeyValue> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValueError("config: line " + std::to_string(line_no) + " is not key = value");
    KeyValue kv{trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1))};
    if (kv.key.empty())
      throw ValueError("config: line " + std::to_string(line_no) + " has an empty key");
    entries.push_back(std::move(kv));
  }
  return entries;
}

void apply_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "dataset")
    c.dataset = value;
  else if (key == "variant")
    c.variant = value;
  else if (key == "latent_dim")
    c.latent_dim = parse_size(key, value);
  else if (key == "l")
    c.l = parse_size(key, value);
  else if (key == "stack_mode")
    c.stack_mode = value;
  else if (key == "init_variance_scale")
    c.init_variance_scale = parse_double(key, value);
  else if (key == "learning_rate")
    c.learning_rate = parse_double(key, value);
  else if (key == "epochs")
    c.epochs = parse_size(key, value);
  else if (key == "batch_size")
    c.batch_size = parse_size(key, value);
  else if (key == "seed")
    c.seed = parse_u64(key, value);
  else if (key == "penalty_weight")
    c.penalty_weight = parse_double(key, value);
  else if (key == "kl_weight")
    c.kl_weight = parse_double(key, value);
  else if (key == "train_size")
    c.train_size = parse_size(key, value);
  else if (key == "eval_size")
    c.eval_size = parse_size(key, value);
  else if (key == "tau")
    c.tau = parse_double(key, value);
  else if (key == "output_dir")
    c.output_dir = value;
  else if (key == "data_dir")
    c.data_dir = value;
  else if (key == "encoder")
    c.encoder = value;
  else if (key == "mlp_hidden")
    c.mlp_hidden = parse_size(key, value);
  else if (key == "toy_dim")
    c.toy_dim = parse_size(key, value);
  else if (key == "toy_rank")
    c.toy_rank = parse_size(key, value);
  else if (key == "toy_noise")
    c.toy_noise = parse_double(key, value);
  else
    throw ValueError("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig default_config(const std::string& dataset) {
  RunConfig c;
  c.dataset = dataset;
  if (dataset == "shapes") {
    // the struct initializers are the shapes profile
  } else if (dataset == "mnist") {
    c.latent_dim = 128;
    c.l = 8;
    c.epochs = 50;
    c.train_size = 60000;
    c.eval_size = 10000;
  } else if (dataset == "toy") {
    c.latent_dim = 16;
    c.l = 2;
    c.learning_rate = 1e-3;
    c.epochs = 50;
    c.train_size = 2048;
    c.eval_size = 512;
    c.encoder = "mlp";
    c.mlp_hidden = 64;
  } else {
    throw ValueError("config: unknown dataset '" + dataset + "'");
  }
  return c;
}

RunConfig parse_config(const std::string& text) {
  const auto entries = split_entries(text);
  std::string dataset = "shapes";
  for (const auto& e : entries)
    if (e.key == "dataset") dataset = e.value;
  RunConfig c = default_config(dataset);
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.key).second)
      throw ValueError("config: duplicate key '" + e.key + "'");
    apply_entry(c, e.key, e.value);
  }
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "dataset = " << c.dataset << '\n'
      << "variant = " << c.variant << '\n'
      << "latent_dim = " << c.latent_dim << '\n'
      << "l = " << c.l << '\n'
      << "stack_mode = " << c.stack_mode << '\n'
      << "init_variance_scale = " << fmt_double(c.init_variance_scale) << '\n'
      << "learning_rate = " << fmt_double(c.learning_rate) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "seed = " << c.seed << '\n'
      << "penalty_weight = " << fmt_double(c.penalty_weight) << '\n'
      << "kl_weight = " << fmt_double(c.kl_weight) << '\n'
      << "train_size = " << c.train_size << '\n'
      << "eval_size = " << c.eval_size << '\n'
      << "tau = " << fmt_double(c.tau) << '\n'
      << "output_dir = " << c.output_dir << '\n'
      << "data_dir = " << c.data_dir << '\n'
      << "encoder = " << c.encoder << '\n'
      << "mlp_hidden = " << c.mlp_hidden << '\n'
      << "toy_dim = " << c.toy_dim << '\n'
      << "toy_rank = " << c.toy_rank << '\n'
      << "toy_noise = " << fmt_double(c.toy_noise) << '\n';
  return out.str();
}

void validate_config(const RunConfig& c) {
  check_one_of("dataset", c.dataset, {"shapes", "mnist", "toy"});
  check_one_of("variant", c.variant, {"ae", "irmae", "vae", "ae_l1", "ae_l2"});
  check_one_of("stack_mode", c.stack_mode, {"trainable", "fixed", "shared", "nonlinear"});
  check_one_of("encoder", c.encoder, {"conv", "mlp"});
  if (c.latent_dim == 0) throw ValueError("config: latent_dim must be positive");
  if (c.epochs == 0) throw ValueError("config: epochs must be positive");
  if (c.batch_size == 0) throw ValueError("config: batch_size must be positive");
  if (!(c.learning_rate > 0)) throw ValueError("config: learning_rate must be positive");
  if (!(c.init_variance_scale > 0))
    throw ValueError("config: init_variance_scale must be positive");
  if (c.penalty_weight < 0) throw ValueError("config: penalty_weight must be non-negative");
  if (c.kl_weight < 0) throw ValueError("config: kl_weight must be non-negative");
  if (c.train_size == 0) throw ValueError("config: train_size must be positive");
  if (c.eval_size < 2) throw ValueError("config: eval_size must be at least 2");
  if (!(c.tau > 0)) throw ValueError("config: tau must be positive");
  if (c.variant != "irmae" && c.l != 0)
    throw ValueError("config: variant '" + c.variant + "' requires l = 0");
  if (c.variant != "irmae" && c.stack_mode != "trainable")
    throw ValueError("config: stack_mode applies to the irmae variant only");
  if (c.dataset == "toy") {
    if (c.encoder == "conv") throw ValueError("config: toy dataset needs encoder = mlp");
    if (c.variant == "vae")
      throw ValueError("config: vae expects image data in [0,1], not the toy dataset");
    if (c.toy_rank == 0 || c.toy_rank > c.toy_dim)
      throw ValueError("config: toy_rank must be in [1, toy_dim]");
    if (c.toy_noise < 0) throw ValueError("config: toy_noise must be non-negative");
  }
  if (c.mlp_hidden == 0) throw ValueError("config: mlp_hidden must be positive");
  if (c.output_dir.empty()) throw ValueError("config: output_dir must not be empty");
}

}  // namespace irmae
