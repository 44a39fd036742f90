// lqg: latent quantum-GAN pipeline driver.
//
// Subcommands: gen-data, convert, train-ae, train-gan, sample, metrics,
// sweep, fit-scaling, verdict. Errors exit nonzero with a machine-readable
// JSON object on stderr (2 config, 3 data, 4 numerical abort, 5 no optimum).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lqg/config.hpp"
#include "lqg/data.hpp"
#include "lqg/errors.hpp"
#include "lqg/experiments.hpp"
#include "lqg/gan.hpp"
#include "lqg/metrics.hpp"
#include "lqg/nets.hpp"
#include "lqg/parallel.hpp"
#include "lqg/png.hpp"
#include "lqg/quantum.hpp"

namespace fs = std::filesystem;
using lqg::cfg::json;

namespace {

struct GenDataArgs {
  std::string kind = "gaussian-blobs";
  std::int64_t n = 500;
  std::uint64_t seed = 42;
  std::string out;
  int height = 28, width = 28;
};

struct ConvertArgs {
  std::string input, out, dtype = "f32";
  std::int64_t n = 0;
  int height = 28, width = 28, channels = 3;
};

void cmd_gen_data(const GenDataArgs& a) {
  auto ds = lqg::data::synth_dataset(static_cast<std::size_t>(a.n), a.seed, a.kind,
                                     static_cast<std::uint32_t>(a.height),
                                     static_cast<std::uint32_t>(a.width));
  lqg::data::save_dataset(a.out, ds);
  std::cout << json{{"written", a.out}, {"n", ds.n}, {"height", ds.height},
                    {"width", ds.width}, {"channels", ds.channels}}
            << "\n";
}

// Raw dense tensor (f32 or f64, n*H*W*C values, range [0,1]) -> LQGD.
void cmd_convert(const ConvertArgs& a) {
  std::ifstream is(a.input, std::ios::binary);
  if (!is) throw lqg::DataError("cannot open " + a.input);
  const std::size_t count = static_cast<std::size_t>(a.n) * a.height * a.width * a.channels;
  lqg::data::ImageDataset ds;
  ds.n = static_cast<std::uint32_t>(a.n);
  ds.height = static_cast<std::uint32_t>(a.height);
  ds.width = static_cast<std::uint32_t>(a.width);
  ds.channels = static_cast<std::uint32_t>(a.channels);
  ds.pixels.resize(count);
  if (a.dtype == "f32") {
    if (!is.read(reinterpret_cast<char*>(ds.pixels.data()),
                 static_cast<std::streamsize>(count * 4)))
      throw lqg::DataError("input shorter than n*H*W*C f32 values");
  } else if (a.dtype == "f64") {
    std::vector<double> tmp(count);
    if (!is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 8)))
      throw lqg::DataError("input shorter than n*H*W*C f64 values");
    for (std::size_t i = 0; i < count; ++i) ds.pixels[i] = static_cast<float>(tmp[i]);
  } else {
    throw lqg::ConfigError("convert: dtype must be f32 or f64");
  }
  char extra;
  if (is.read(&extra, 1)) throw lqg::DataError("input longer than n*H*W*C values");
  for (std::size_t i = 0; i < count; ++i)
    if (!(ds.pixels[i] >= -1e-6f && ds.pixels[i] <= 1.0f + 1e-6f))
      throw lqg::DataError("value " + std::to_string(ds.pixels[i]) + " at index " +
                           std::to_string(i) + " outside [0,1]");
  lqg::data::save_dataset(a.out, ds);
  std::cout << json{{"written", a.out}, {"n", ds.n}} << "\n";
}

void cmd_train_ae(const std::string& config, const std::string& data_override,
                  const std::string& out) {
  auto rc = lqg::cfg::load_run_config(config);
  if (!data_override.empty()) rc.dataset.path = data_override;
  if (rc.dataset.path.empty()) throw lqg::ConfigError("train-ae needs dataset.path or --data");
  fs::create_directories(out);
  lqg::cfg::write_json_file(fs::path(out) / "config.json", lqg::cfg::to_json(rc));
  const double rfid = lqg::exp::prepare_ae(rc, out);
  std::cout << json{{"out", out}, {"final_rfid", rfid}} << "\n";
}

struct TrainGanArgs {
  std::string config, out, ae;
  std::string gen;       // optional override: quantum | classical
  int qubits = 0, layers = 0;
  std::string critic;    // "N1,N2"
  std::int64_t steps = -1;
  std::int64_t seed = -1;
};

std::array<int, 2> parse_pair(const std::string& s, const char* what) {
  std::array<int, 2> out{0, 0};
  if (std::sscanf(s.c_str(), "%d,%d", &out[0], &out[1]) != 2 || out[0] <= 0 || out[1] <= 0)
    throw lqg::ConfigError(std::string(what) + ": expected 'N1,N2', got '" + s + "'");
  return out;
}

void cmd_train_gan(const TrainGanArgs& a) {
  auto rc = lqg::cfg::load_run_config(a.config);
  if (!a.gen.empty()) rc.gan.generator = a.gen;
  if (a.qubits > 0) {
    rc.gan.qubits = a.qubits;
    if (rc.gan.generator == "quantum") rc.latent_dim = 2 * a.qubits;
  }
  if (a.layers > 0) rc.gan.layers = a.layers;
  if (!a.critic.empty()) rc.gan.critic_hidden = parse_pair(a.critic, "--critic");
  if (a.steps >= 0) rc.gan.steps = a.steps;
  if (a.seed >= 0) rc.seed = static_cast<std::uint64_t>(a.seed);
  auto out = lqg::exp::execute_run(rc, a.out, a.ae);
  std::cout << json{{"out", a.out},
                    {"steps_done", out.steps_done},
                    {"verdict", lqg::exp::to_string(out.verdict.verdict)},
                    {"final_fid", out.verdict.final_mean}}
            << "\n";
}

struct SampleArgs {
  std::string run, ae, out;
  std::int64_t n = 64;
  int grid_cols = 8;
  std::int64_t seed = -1;
};

void cmd_sample(const SampleArgs& a) {
  auto rc = lqg::cfg::parse_run_config(lqg::cfg::read_json_file(fs::path(a.run) / "config.json"));
  if (a.seed >= 0) rc.seed = static_cast<std::uint64_t>(a.seed);
  const int threads = rc.threads > 0 ? rc.threads : lqg::default_threads();

  std::unique_ptr<lqg::gan::Generator> gen;
  if (rc.gan.generator == "quantum") {
    gen = std::make_unique<lqg::gan::QuantumGenerator>(rc.gan.qubits, rc.gan.layers, rc.seed,
                                                       threads);
  } else {
    gen = std::make_unique<lqg::gan::ClassicalGenerator>(
        lqg::nets::generator_config(rc.gan.noise_dim, rc.gan.gen_hidden[0], rc.gan.gen_hidden[1],
                                    rc.latent_dim),
        rc.seed);
  }
  gen->load_blocks(lqg::read_checkpoint(fs::path(a.run) / "params.lqgc"));

  lqg::RngStream noise(rc.seed, "sample.noise");
  const Eigen::MatrixXd z = gen->sample_detached(a.n, noise);

  // Decode through the frozen AE.
  lqg::nets::AeConfig acfg;
  acfg.conv_channels = rc.ae.conv_channels;
  acfg.fc_width = rc.ae.fc_width;
  acfg.latent_dim = rc.latent_dim;
  acfg.dropout = rc.ae.dropout;
  acfg.batchnorm = rc.ae.batchnorm;
  auto blocks = lqg::read_checkpoint(fs::path(a.ae) / "ae.lqgc");
  auto ae = lqg::nets::Autoencoder<double>::init(acfg, 0);
  for (auto p : ae.params())
    lqg::load_tensor_from_block(lqg::require_block(blocks, p.name()), p);

  lqg::ad::NoGradGuard ng;
  auto imgs = ae.decode(lqg::gan::T::from_matrix(z));

  fs::create_directories(a.out);
  // Raw LQGD dump.
  lqg::data::ImageDataset ds;
  ds.n = static_cast<std::uint32_t>(a.n);
  ds.height = static_cast<std::uint32_t>(acfg.height);
  ds.width = static_cast<std::uint32_t>(acfg.width);
  ds.channels = static_cast<std::uint32_t>(acfg.channels);
  ds.pixels.resize(ds.n * ds.image_size());
  const Eigen::MatrixXd rows = lqg::nets::nchw_to_rows(imgs);
  for (std::uint32_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.image_size(); ++j)
      ds.pixels[i * ds.image_size() + j] =
          static_cast<float>(std::clamp(rows(i, static_cast<Eigen::Index>(j)), 0.0, 1.0));
  lqg::data::save_dataset(fs::path(a.out) / "samples.lqgd", ds);

  // PNG grid.
  const int cols = std::max(1, a.grid_cols);
  const int rows_n = static_cast<int>((a.n + cols - 1) / cols);
  const std::uint32_t gw = static_cast<std::uint32_t>(cols) * ds.width;
  const std::uint32_t gh = static_cast<std::uint32_t>(rows_n) * ds.height;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(gw) * gh * 3, 0);
  for (std::int64_t i = 0; i < a.n; ++i) {
    const int gy = static_cast<int>(i) / cols, gx = static_cast<int>(i) % cols;
    for (std::uint32_t y = 0; y < ds.height; ++y)
      for (std::uint32_t x = 0; x < ds.width; ++x)
        for (std::uint32_t c = 0; c < 3; ++c) {
          const float v = ds.pixels[(static_cast<std::size_t>(i) * ds.height * ds.width +
                                     static_cast<std::size_t>(y) * ds.width + x) * 3 + c];
          rgb[((static_cast<std::size_t>(gy) * ds.height + y) * gw +
               static_cast<std::size_t>(gx) * ds.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
  }
  lqg::write_png_rgb(fs::path(a.out) / "grid.png", gw, gh, rgb);
  std::cout << json{{"out", a.out}, {"n", a.n}} << "\n";
}

struct MetricsArgs {
  std::string real, fake, ae;
  std::string extractor = "pixel-flatten";
  int dim = 64;
  std::uint64_t extractor_seed = 17;
  int bins = 64;
};

void cmd_metrics(const MetricsArgs& a) {
  auto real = lqg::data::load_dataset(a.real);
  auto fake = lqg::data::load_dataset(a.fake);
  const Eigen::MatrixXd real_rows = real.as_rows();
  const Eigen::MatrixXd fake_rows = fake.as_rows();

  json out;
  if (!a.ae.empty() || a.extractor == "ae-encoder") {
    if (a.ae.empty()) throw lqg::ConfigError("extractor ae-encoder needs --ae");
    auto blocks = lqg::read_checkpoint(fs::path(a.ae) / "ae.lqgc");
    const auto meta = lqg::require_block(blocks, "ae.meta").as_f64();
    lqg::nets::AeConfig acfg;
    acfg.conv_channels = {static_cast<int>(meta[1]), static_cast<int>(meta[2])};
    acfg.fc_width = static_cast<int>(meta[3]);
    acfg.latent_dim = static_cast<int>(meta[4]);
    acfg.batchnorm = meta[5] != 0.0;
    auto ae = lqg::nets::Autoencoder<double>::init(acfg, 0);
    for (auto p : ae.params())
      lqg::load_tensor_from_block(lqg::require_block(blocks, p.name()), p);
    lqg::ad::NoGradGuard ng;
    std::vector<std::size_t> ridx(real.n), fidx(fake.n);
    for (std::size_t i = 0; i < real.n; ++i) ridx[i] = i;
    for (std::size_t i = 0; i < fake.n; ++i) fidx[i] = i;
    const Eigen::MatrixXd zr = ae.encode(lqg::nets::to_nchw<double>(real, ridx)).matrix();
    const Eigen::MatrixXd zf = ae.encode(lqg::nets::to_nchw<double>(fake, fidx)).matrix();
    const auto f = a.extractor == "ae-encoder"
                       ? lqg::metrics::fid(zr, zf)
                       : lqg::metrics::fid(
                             lqg::metrics::FeatureExtractor{a.extractor, a.dim,
                                                            a.extractor_seed}(real_rows),
                             lqg::metrics::FeatureExtractor{a.extractor, a.dim,
                                                            a.extractor_seed}(fake_rows));
    out["fid"] = f.value;
    out["under_sampled"] = f.under_sampled;
    out["jsd_feat"] = lqg::metrics::jsd(zr, zf, lqg::metrics::JsdSpace::feature, a.bins);
  } else {
    lqg::metrics::FeatureExtractor ex{a.extractor, a.dim, a.extractor_seed};
    const auto f = lqg::metrics::fid(ex(real_rows), ex(fake_rows));
    out["fid"] = f.value;
    out["under_sampled"] = f.under_sampled;
    out["jsd_feat"] = nullptr;  // feature-space JSD is defined on AE latents
  }
  out["jsd_raw"] = lqg::metrics::jsd(real_rows, fake_rows, lqg::metrics::JsdSpace::raw, a.bins);
  out["n_real"] = real.n;
  out["n_fake"] = fake.n;
  std::cout << out << "\n";
}

void cmd_sweep(const std::string& plan_path, const std::string& out, int workers, int budget) {
  const auto pj = lqg::cfg::read_json_file(plan_path);
  auto plan = lqg::exp::parse_sweep_plan(pj);
  fs::create_directories(out);
  lqg::cfg::write_json_file(fs::path(out) / "plan.json", pj);
  auto result = lqg::exp::run_sweep(plan, out, budget, workers);
  json j{{"runs", result.runs.size()}, {"failures", result.failures},
         {"points", result.points.size()}};
  if (result.fit) {
    j["a"] = result.fit->a;
    j["b"] = result.fit->b;
  }
  std::cout << j << "\n";
}

void cmd_fit_scaling(const std::string& sweep_dir) {
  const fs::path dir(sweep_dir);
  auto plan = lqg::exp::parse_sweep_plan(lqg::cfg::read_json_file(dir / "plan.json"));
  auto result = lqg::exp::run_sweep(plan, dir, /*budget=*/-1, /*workers=*/1);
  if (!result.fit)
    throw lqg::ConfigError("not enough completed runs for a fit (need >= 3 capacities)");
  std::cout << lqg::exp::fit_to_json(*result.fit) << "\n";
}

void cmd_verdict(const std::string& run_dir) {
  const auto v = lqg::exp::verdict_for_run(run_dir);
  std::cout << json{{"verdict", lqg::exp::to_string(v.verdict)},
                    {"transition_step", v.transition_step},
                    {"final_mean", v.final_mean},
                    {"final_std", v.final_std},
                    {"global_min", v.global_min}}
            << "\n";
}

int error_exit(int code, const char* kind, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}} << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent style-based quantum GAN pipeline"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic LQGD dataset");
  gen_data->add_option("--kind", gd.kind)->check(CLI::IsMember({"gaussian-blobs", "striped-fields"}));
  gen_data->add_option("--n", gd.n)->required();
  gen_data->add_option("--seed", gd.seed);
  gen_data->add_option("--out", gd.out)->required();
  gen_data->add_option("--height", gd.height);
  gen_data->add_option("--width", gd.width);

  ConvertArgs cv;
  auto* convert = app.add_subcommand("convert", "convert a raw dense tensor file to LQGD");
  convert->add_option("--input", cv.input)->required();
  convert->add_option("--out", cv.out)->required();
  convert->add_option("--n", cv.n)->required();
  convert->add_option("--height", cv.height);
  convert->add_option("--width", cv.width);
  convert->add_option("--channels", cv.channels);
  convert->add_option("--dtype", cv.dtype)->check(CLI::IsMember({"f32", "f64"}));

  std::string ta_config, ta_data, ta_out;
  auto* train_ae = app.add_subcommand("train-ae", "train the convolutional autoencoder");
  train_ae->add_option("--config", ta_config)->required();
  train_ae->add_option("--data", ta_data);
  train_ae->add_option("--out", ta_out)->required();

  TrainGanArgs tg;
  auto* train_gan = app.add_subcommand("train-gan", "run WGAN-GP training in latent space");
  train_gan->add_option("--config", tg.config)->required();
  train_gan->add_option("--out", tg.out)->required();
  train_gan->add_option("--ae", tg.ae);
  train_gan->add_option("--gen", tg.gen)->check(CLI::IsMember({"quantum", "classical"}));
  train_gan->add_option("--qubits", tg.qubits);
  train_gan->add_option("--layers", tg.layers);
  train_gan->add_option("--critic", tg.critic);
  train_gan->add_option("--steps", tg.steps);
  train_gan->add_option("--seed", tg.seed);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "decode generator samples to images");
  sample->add_option("--run", sa.run)->required();
  sample->add_option("--ae", sa.ae)->required();
  sample->add_option("--out", sa.out)->required();
  sample->add_option("--n", sa.n);
  sample->add_option("--grid-cols", sa.grid_cols);
  sample->add_option("--seed", sa.seed);

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "FID/JSD between two LQGD datasets");
  met->add_option("--real", ma.real)->required();
  met->add_option("--fake", ma.fake)->required();
  met->add_option("--ae", ma.ae);
  met->add_option("--extractor", ma.extractor)
      ->check(CLI::IsMember({"pixel-flatten", "random-projection", "ae-encoder"}));
  met->add_option("--dim", ma.dim);
  met->add_option("--extractor-seed", ma.extractor_seed);
  met->add_option("--bins", ma.bins);

  std::string sw_plan, sw_out;
  int sw_workers = 1, sw_budget = 0;
  auto* sweep = app.add_subcommand("sweep", "run a capacity sweep plan");
  sweep->add_option("--plan", sw_plan)->required();
  sweep->add_option("--out", sw_out)->required();
  sweep->add_option("--workers", sw_workers);
  sweep->add_option("--budget", sw_budget);

  std::string fit_dir;
  auto* fit = app.add_subcommand("fit-scaling", "fit the exponential capacity law");
  fit->add_option("--sweep", fit_dir)->required();

  std::string verdict_dir;
  auto* verd = app.add_subcommand("verdict", "re-derive the optimality verdict of a run");
  verd->add_option("--run", verdict_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_data) cmd_gen_data(gd);
    else if (*convert) cmd_convert(cv);
    else if (*train_ae) cmd_train_ae(ta_config, ta_data, ta_out);
    else if (*train_gan) cmd_train_gan(tg);
    else if (*sample) cmd_sample(sa);
    else if (*met) cmd_metrics(ma);
    else if (*sweep) cmd_sweep(sw_plan, sw_out, sw_workers, sw_budget);
    else if (*fit) cmd_fit_scaling(fit_dir);
    else if (*verd) cmd_verdict(verdict_dir);
  } catch (const lqg::NumericError& e) {
    return error_exit(lqg::kExitNumeric, "numeric", e.what());
  } catch (const lqg::NoOptimumError& e) {
    return error_exit(lqg::kExitNoOptimum, "no-optimum", e.what());
  } catch (const lqg::DataError& e) {
    return error_exit(lqg::kExitData, "data", e.what());
  } catch (const lqg::ConfigError& e) {
    return error_exit(lqg::kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return error_exit(lqg::kExitConfig, "config", e.what());
  }
  return lqg::kExitOk;
}
