#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lqg/errors.hpp"

// Run configuration. JSON parsing is strict: unknown fields are rejected at
// every level so a run directory's config.json is always a complete, exact
// description of what ran.
namespace lqg::cfg {

using json = nlohmann::json;

struct DatasetConfig {
  std::string path;         // LQGD file; empty in latent-target mode
  std::int64_t subselect = 0;  // 0 = use all images
  double val_fraction = 0.1;
};

struct AeConfigJson {
  std::array<int, 2> conv_channels{64, 128};
  int fc_width = 1024;
  double dropout = 0.0;
  bool batchnorm = true;
  int epochs = 100;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  int batch = 12;
  std::string precision = "f64";  // "f32" trains the AE in single precision
};

struct GanConfigJson {
  std::string generator = "quantum";  // "quantum" | "classical"
  int qubits = 12;
  int layers = 2;
  std::array<int, 2> gen_hidden{400, 200};  // classical generator widths
  int noise_dim = 10;                       // classical generator input dim
  std::array<int, 2> critic_hidden{125, 62};
  double critic_leak = 0.2;
  int n_critic = 5;
  int n_gen = 1;
  double lambda_gp = 1.0;
  std::int64_t epochs = 10000;
  std::int64_t steps = 0;  // >0: total generator cycles (overrides epochs)
  int batch = 256;
  double lr_g = 0.0005;
  double lr_d = 0.0008;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double clip = 5.0;
  std::int64_t eval_interval = 100;
  std::int64_t eval_cohort = 2000;
};

struct MetricsConfigJson {
  std::string extractor = "random-projection";  // pixel-flatten | random-projection | ae-encoder
  int extractor_dim = 64;
  std::uint64_t extractor_seed = 17;
  int jsd_bins = 64;
};

struct OptimalityConfigJson {
  int window = 20;
  double tau_sigma = 0.05;
  double tau_min = 0.10;
  double burn_in_frac = 0.5;
};

struct LatentTargetConfigJson {
  bool enabled = false;
  int components = 4;
  double center_range = 0.4;
  double sigma = 0.15;
  std::uint64_t target_seed = 9001;
};

struct RunConfig {
  std::uint64_t seed = 42;
  int latent_dim = 24;
  int threads = 0;  // 0 = hardware concurrency
  DatasetConfig dataset;
  AeConfigJson ae;
  GanConfigJson gan;
  MetricsConfigJson metrics;
  OptimalityConfigJson optimality;
  LatentTargetConfigJson latent_target;
};

RunConfig parse_run_config(const json& j);
json to_json(const RunConfig& c);

// Reads a config file, applies the LQG_SEED env override if present.
RunConfig load_run_config(const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace lqg::cfg
