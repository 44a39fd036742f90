#include "lqg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "lqg/metrics.hpp"
#include "lqg/parallel.hpp"

namespace lqg::exp {

namespace fs = std::filesystem;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::chaotic: return "chaotic";
    case Verdict::transitional: return "transitional";
    case Verdict::stable: return "stable";
  }
  return "chaotic";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "chaotic") return Verdict::chaotic;
  if (s == "transitional") return Verdict::transitional;
  if (s == "stable") return Verdict::stable;
  throw ConfigError("unknown verdict '" + s + "'");
}

namespace {

double window_mean(std::span<const double> v, std::size_t s, std::size_t w) {
  double m = 0;
  for (std::size_t i = s; i < s + w; ++i) m += v[i];
  return m / static_cast<double>(w);
}

double window_std(std::span<const double> v, std::size_t s, std::size_t w, double mean) {
  if (w < 2) return 0;
  double acc = 0;
  for (std::size_t i = s; i < s + w; ++i) acc += (v[i] - mean) * (v[i] - mean);
  return std::sqrt(acc / static_cast<double>(w - 1));
}

}  // namespace

VerdictResult detect_optimality(std::span<const double> fid, std::span<const std::int64_t> steps,
                                const OptimalityConfig& cfg) {
  const std::size_t n = fid.size();
  const auto w = static_cast<std::size_t>(cfg.window);
  if (steps.size() != n) throw ConfigError("detect_optimality: fid/steps length mismatch");
  if (n < 2 * w)
    throw ConfigError("detect_optimality: series of " + std::to_string(n) +
                      " evals is shorter than 2*window = " + std::to_string(2 * w));

  VerdictResult r;
  r.global_min = *std::min_element(fid.begin(), fid.end());
  const std::size_t last = n - w;
  r.final_mean = window_mean(fid, last, w);
  r.final_std = window_std(fid, last, w, r.final_mean);

  auto window_ok = [&](std::size_t s) {
    const double m = window_mean(fid, s, w);
    const double sd = window_std(fid, s, w, m);
    return sd <= cfg.tau_sigma * m && m <= (1.0 + cfg.tau_min) * r.global_min;
  };

  if (!window_ok(last)) {
    r.verdict = Verdict::chaotic;
    r.transition_step = -1;
    return r;
  }
  // Earliest window start from which every later window is also stable.
  std::size_t stable_from = last;
  for (std::size_t s = last; s-- > 0;) {
    if (window_ok(s))
      stable_from = s;
    else
      break;
  }
  const auto burn_in_idx =
      static_cast<std::size_t>(cfg.burn_in_frac * static_cast<double>(n));
  r.transition_step = stable_from == 0 ? 0 : steps[stable_from];
  r.verdict = stable_from <= burn_in_idx ? Verdict::stable : Verdict::transitional;
  return r;
}

std::int64_t select_optimal_capacity(std::span<const CapacityOutcome> outcomes, double tau_min) {
  if (outcomes.size() < 2)
    throw ConfigError("select_optimal_capacity: need at least 2 evaluated capacities");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : outcomes)
    if (o.verdict.verdict != Verdict::chaotic) best = std::min(best, o.verdict.final_mean);
  if (!std::isfinite(best))
    throw NoOptimumError("no optimum in grid: every capacity trained chaotically");
  std::int64_t chosen = -1;
  for (const auto& o : outcomes) {
    if (o.verdict.verdict == Verdict::chaotic) continue;
    if (o.verdict.final_mean > (1.0 + tau_min) * best) continue;
    if (chosen < 0 || o.capacity < chosen) chosen = o.capacity;
  }
  return chosen;
}

ScalingFit fit_exponential(std::span<const ScalingPoint> points) {
  std::vector<double> xs;
  for (const auto& p : points) {
    if (p.opt_capacity <= 0)
      throw ConfigError("fit_exponential: non-positive capacity " +
                        std::to_string(p.opt_capacity));
    if (std::find(xs.begin(), xs.end(), p.gen_capacity) == xs.end())
      xs.push_back(p.gen_capacity);
  }
  if (xs.size() < 3)
    throw ConfigError("fit_exponential: need at least 3 distinct generator capacities, got " +
                      std::to_string(xs.size()));

  const auto n = static_cast<double>(points.size());
  double xm = 0, zm = 0;
  for (const auto& p : points) {
    xm += p.gen_capacity;
    zm += std::log(p.opt_capacity);
  }
  xm /= n;
  zm /= n;
  double sxx = 0, sxz = 0;
  for (const auto& p : points) {
    const double dx = p.gen_capacity - xm;
    sxx += dx * dx;
    sxz += dx * (std::log(p.opt_capacity) - zm);
  }
  ScalingFit f;
  f.b = sxz / sxx;
  const double intercept = zm - f.b * xm;
  f.a = std::exp(intercept);
  for (const auto& p : points)
    f.residuals.push_back(std::log(p.opt_capacity) - (intercept + f.b * p.gen_capacity));

  std::sort(xs.begin(), xs.end());
  for (double x : xs) {
    BandPoint bp;
    bp.gen_capacity = x;
    std::vector<double> ys;
    for (const auto& p : points)
      if (p.gen_capacity == x) ys.push_back(p.opt_capacity);
    for (double y : ys) bp.mean += y;
    bp.mean /= static_cast<double>(ys.size());
    if (ys.size() > 1) {
      double acc = 0;
      for (double y : ys) acc += (y - bp.mean) * (y - bp.mean);
      bp.sigma = std::sqrt(acc / static_cast<double>(ys.size() - 1));
    }
    f.band.push_back(bp);
  }
  return f;
}

cfg::json fit_to_json(const ScalingFit& f) {
  cfg::json j;
  j["a"] = f.a;
  j["b"] = f.b;
  j["residuals"] = f.residuals;
  j["band"] = cfg::json::array();
  for (const auto& bp : f.band)
    j["band"].push_back({{"gen_capacity", bp.gen_capacity}, {"mean", bp.mean},
                         {"sigma", bp.sigma}});
  return j;
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_line(const fs::path& p, const std::string& line) {
  std::ofstream os(p, std::ios::app);
  if (!os) throw DataError("cannot append to " + p.string());
  os << line << "\n";
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

// Keeps header plus rows whose leading integer field is <= max_step.
void truncate_csv(const fs::path& p, std::int64_t max_step) {
  if (!fs::exists(p)) return;
  std::ifstream is(p);
  std::string line, out;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {
      out += line + "\n";
      first = false;
      continue;
    }
    if (line.empty()) continue;
    const std::int64_t step = std::strtoll(line.c_str(), nullptr, 10);
    if (step <= max_step) out += line + "\n";
  }
  is.close();
  write_text(p, out);
}

std::vector<gan::EvalRecord> read_evals_csv(const fs::path& p) {
  std::vector<gan::EvalRecord> out;
  std::ifstream is(p);
  if (!is) throw DataError("cannot open " + p.string());
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    gan::EvalRecord r;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    if (!(ss >> r.step >> r.fid >> r.jsd_raw >> r.jsd_feat))
      throw DataError("malformed row in " + p.string() + ": " + line);
    out.push_back(r);
  }
  return out;
}

cfg::json verdict_to_json(const VerdictResult& v) {
  return {{"verdict", to_string(v.verdict)},
          {"transition_step", v.transition_step},
          {"final_mean", v.final_mean},
          {"final_std", v.final_std},
          {"global_min", v.global_min}};
}

VerdictResult verdict_from_json(const cfg::json& j) {
  VerdictResult v;
  v.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  v.transition_step = j.at("transition_step").get<std::int64_t>();
  v.final_mean = j.at("final_mean").get<double>();
  v.final_std = j.at("final_std").get<double>();
  v.global_min = j.at("global_min").get<double>();
  return v;
}

// Deterministic 90/10-style split of a sub-selection.
std::pair<data::ImageDataset, data::ImageDataset> split_dataset(const data::ImageDataset& ds,
                                                                double val_fraction,
                                                                std::uint64_t seed) {
  RngStream rng(seed, "valsplit");
  auto perm = random_permutation(ds.n, rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * ds.n));
  if (val_fraction > 0 && n_val == 0 && ds.n >= 2) n_val = 1;
  const std::size_t n_train = ds.n - n_val;

  auto take = [&](std::size_t offset, std::size_t count) {
    data::ImageDataset out;
    out.n = static_cast<std::uint32_t>(count);
    out.height = ds.height;
    out.width = ds.width;
    out.channels = ds.channels;
    out.source_tag = ds.source_tag;
    out.subselect_seed = ds.subselect_seed;
    out.pixels.resize(count * ds.image_size());
    for (std::size_t i = 0; i < count; ++i)
      std::memcpy(out.pixels.data() + i * ds.image_size(), ds.image(perm[offset + i]),
                  ds.image_size() * sizeof(float));
    return out;
  };
  return {take(0, n_train), take(n_train, n_val)};
}

nets::AeConfig ae_config_from(const cfg::RunConfig& rc) {
  nets::AeConfig a;
  a.conv_channels = rc.ae.conv_channels;
  a.fc_width = rc.ae.fc_width;
  a.latent_dim = rc.latent_dim;
  a.dropout = rc.ae.dropout;
  a.batchnorm = rc.ae.batchnorm;
  return a;
}

template <class S>
void save_autoencoder(const fs::path& path, const nets::Autoencoder<S>& ae) {
  std::vector<CheckpointBlock> blocks;
  const double meta[6] = {
      static_cast<double>(ae.cfg.height),       static_cast<double>(ae.cfg.conv_channels[0]),
      static_cast<double>(ae.cfg.conv_channels[1]), static_cast<double>(ae.cfg.fc_width),
      static_cast<double>(ae.cfg.latent_dim),   ae.cfg.batchnorm ? 1.0 : 0.0};
  blocks.push_back(CheckpointBlock::from_f64("ae.meta", {6}, meta));
  for (auto p : ae.params()) blocks.push_back(block_from_tensor(p.name(), p));
  write_checkpoint(path, blocks);
}

nets::Autoencoder<double> load_autoencoder(const fs::path& dir, const nets::AeConfig& cfg) {
  const fs::path path = dir / "ae.lqgc";
  auto blocks = read_checkpoint(path);
  const auto meta = require_block(blocks, "ae.meta").as_f64();
  if (meta.size() != 6 || static_cast<int>(meta[1]) != cfg.conv_channels[0] ||
      static_cast<int>(meta[2]) != cfg.conv_channels[1] ||
      static_cast<int>(meta[3]) != cfg.fc_width ||
      static_cast<int>(meta[4]) != cfg.latent_dim ||
      (meta[5] != 0.0) != cfg.batchnorm)
    throw DataError("AE checkpoint " + path.string() + " does not match the run config");
  auto ae = nets::Autoencoder<double>::init(cfg, 0);
  for (auto p : ae.params()) load_tensor_from_block(require_block(blocks, p.name()), p);
  return ae;
}

// Decodes latents in chunks; returns flattened HWC pixel rows.
Eigen::MatrixXd decode_rows(const nets::Autoencoder<double>& ae, const Eigen::MatrixXd& z) {
  ad::NoGradGuard ng;
  const Eigen::Index chunk = 256;
  Eigen::MatrixXd rows(z.rows(), static_cast<Eigen::Index>(ae.cfg.height) * ae.cfg.width *
                                     ae.cfg.channels);
  for (Eigen::Index at = 0; at < z.rows(); at += chunk) {
    const Eigen::Index b = std::min(chunk, z.rows() - at);
    auto zt = gan::T::from_matrix(z.middleRows(at, b));
    rows.middleRows(at, b) = nets::nchw_to_rows(ae.decode(zt));
  }
  return rows;
}

}  // namespace

double prepare_ae(const cfg::RunConfig& rc, const fs::path& ae_dir) {
  fs::create_directories(ae_dir);
  if (fs::exists(ae_dir / "ae.lqgc")) return -1.0;  // already prepared
  if (rc.dataset.path.empty()) throw ConfigError("prepare_ae: config has no dataset.path");
  auto full = data::load_dataset(rc.dataset.path);
  const std::size_t keep = rc.dataset.subselect > 0
                               ? static_cast<std::size_t>(rc.dataset.subselect)
                               : static_cast<std::size_t>(full.n);
  auto sub = data::subselect(full, keep, rc.seed);
  auto [train, val] = split_dataset(sub, rc.dataset.val_fraction, rc.seed);

  metrics::FeatureExtractor extractor{rc.metrics.extractor == "ae-encoder"
                                          ? "pixel-flatten"
                                          : rc.metrics.extractor,
                                      rc.metrics.extractor_dim, rc.metrics.extractor_seed};

  const fs::path hist = ae_dir / "ae_history.csv";
  write_text(hist, "epoch,train_mse,val_mse,rfid\n");
  double last_rfid = -1;

  nets::AeHyper hyper{rc.ae.epochs, rc.ae.lr, rc.ae.beta1, rc.ae.beta2, rc.ae.weight_decay,
                      rc.ae.batch};

  auto run_training = [&](auto& ae) {
    using S = std::remove_reference_t<decltype(ae)>;
    nets::train_ae<typename S::value_type>(
        ae.net, train, val, hyper, rc.seed, [&](const nets::AeEpochStats& st) {
          double rfid = -1;
          if (val.n > 0) {
            ad::NoGradGuard ng;
            std::vector<std::size_t> all(val.n);
            for (std::size_t i = 0; i < val.n; ++i) all[i] = i;
            auto xv = nets::to_nchw<typename S::value_type>(val, all);
            auto rec = ae.net.reconstruct(xv);
            Eigen::MatrixXd val_rows = val.as_rows();
            Eigen::MatrixXd rec_rows = nets::nchw_to_rows(rec);
            rfid = metrics::fid(extractor(val_rows), extractor(rec_rows)).value;
          }
          last_rfid = rfid;
          append_line(hist, std::to_string(st.epoch) + "," + fmt_double(st.train_mse) + "," +
                                fmt_double(st.val_mse) + "," + fmt_double(rfid));
        });
  };

  if (rc.ae.precision == "f32") {
    struct Holder {
      using value_type = float;
      nets::Autoencoder<float> net;
    } h{nets::Autoencoder<float>::init(ae_config_from(rc), rc.seed)};
    run_training(h);
    save_autoencoder(ae_dir / "ae.lqgc", h.net);
  } else {
    struct Holder {
      using value_type = double;
      nets::Autoencoder<double> net;
    } h{nets::Autoencoder<double>::init(ae_config_from(rc), rc.seed)};
    run_training(h);
    save_autoencoder(ae_dir / "ae.lqgc", h.net);
  }
  return last_rfid;
}

// ---------------------------------------------------------------------------
// execute_run
// ---------------------------------------------------------------------------

RunOutcome execute_run(const cfg::RunConfig& rc, const fs::path& dir, const fs::path& ae_dir) {
  fs::create_directories(dir);
  cfg::write_json_file(dir / "config.json", cfg::to_json(rc));

  const int threads = rc.threads > 0 ? rc.threads : default_threads();
  const bool latent_mode = rc.latent_target.enabled;
  if (!latent_mode && rc.dataset.path.empty())
    throw ConfigError("run needs dataset.path or latent_target.enabled");

  // Real-latent source.
  std::unique_ptr<gan::LatentSource> source;
  std::unique_ptr<nets::Autoencoder<double>> ae;
  data::ImageDataset train_ds;
  if (latent_mode) {
    auto target = gan::LatentTarget::make(rc.latent_dim, rc.latent_target.components,
                                          rc.latent_target.center_range, rc.latent_target.sigma,
                                          rc.latent_target.target_seed);
    source = std::make_unique<gan::MixtureSource>(target, rc.seed, rc.gan.eval_cohort);
  } else {
    if (ae_dir.empty()) throw ConfigError("dataset mode needs a trained AE directory");
    auto full = data::load_dataset(rc.dataset.path);
    const std::size_t keep = rc.dataset.subselect > 0
                                 ? static_cast<std::size_t>(rc.dataset.subselect)
                                 : static_cast<std::size_t>(full.n);
    auto sub = data::subselect(full, keep, rc.seed);
    auto [train, val] = split_dataset(sub, rc.dataset.val_fraction, rc.seed);
    train_ds = std::move(train);
    ae = std::make_unique<nets::Autoencoder<double>>(
        load_autoencoder(ae_dir, ae_config_from(rc)));
    source = std::make_unique<gan::EncoderSource>(train_ds, *ae, rc.gan.batch, rc.seed,
                                                  rc.gan.eval_cohort);
  }

  // Generator.
  std::unique_ptr<gan::Generator> gen;
  if (rc.gan.generator == "quantum") {
    if (rc.latent_dim != 2 * rc.gan.qubits)
      throw ConfigError("quantum generator needs latent_dim == 2*qubits (dual-basis readout)");
    gen = std::make_unique<gan::QuantumGenerator>(rc.gan.qubits, rc.gan.layers, rc.seed, threads);
  } else {
    gen = std::make_unique<gan::ClassicalGenerator>(
        nets::generator_config(rc.gan.noise_dim, rc.gan.gen_hidden[0], rc.gan.gen_hidden[1],
                               rc.latent_dim),
        rc.seed);
  }

  auto critic_cfg = nets::critic_config(rc.latent_dim, rc.gan.critic_hidden[0],
                                        rc.gan.critic_hidden[1]);
  critic_cfg.leak = rc.gan.critic_leak;
  auto critic = nets::Mlp<double>::init(critic_cfg, rc.seed, "critic");

  gan::GanTrainConfig tc;
  tc.n_critic = rc.gan.n_critic;
  tc.n_gen = rc.gan.n_gen;
  tc.lambda_gp = rc.gan.lambda_gp;
  tc.epochs = rc.gan.epochs;
  tc.steps = rc.gan.steps;
  tc.batch = rc.gan.batch;
  tc.lr_g = rc.gan.lr_g;
  tc.lr_d = rc.gan.lr_d;
  tc.beta1 = rc.gan.beta1;
  tc.beta2 = rc.gan.beta2;
  tc.weight_decay = rc.gan.weight_decay;
  tc.clip = rc.gan.clip;
  tc.eval_interval = rc.gan.eval_interval;
  tc.eval_cohort = rc.gan.eval_cohort;
  tc.threads = threads;
  tc.validate();

  std::int64_t total_steps = tc.steps;
  if (total_steps <= 0) {
    if (latent_mode) throw ConfigError("latent-target mode needs gan.steps > 0");
    const auto bpe = static_cast<gan::EncoderSource*>(source.get())->batches_per_epoch();
    total_steps = tc.epochs * bpe;
  }

  gan::GanTrainer trainer(tc, *source, *gen, critic, rc.seed);

  const fs::path steps_csv = dir / "steps.csv";
  const fs::path evals_csv = dir / "evals.csv";
  const fs::path params_ck = dir / "params.lqgc";
  const fs::path optim_ck = dir / "optim.lqgc";
  const fs::path state_js = dir / "state.json";

  std::vector<gan::EvalRecord> evals;

  auto save_state = [&](std::int64_t step) {
    std::vector<CheckpointBlock> pblocks;
    for (auto p : critic.params()) pblocks.push_back(block_from_tensor(p.name(), p));
    gen->append_blocks(pblocks);
    write_checkpoint(params_ck, pblocks);
    std::vector<CheckpointBlock> oblocks;
    trainer.append_adam_blocks(oblocks);
    write_checkpoint(optim_ck, oblocks);
    const auto ss = trainer.stream_state();
    cfg::json j{{"step", step},        {"total", total_steps},    {"noise", ss.noise},
                {"gp", ss.gp},         {"eval_noise", ss.eval_noise},
                {"data", ss.data},     {"evals", evals.size()}};
    cfg::write_json_file(state_js, j);
  };

  // Resume or fresh start.
  if (fs::exists(state_js) && fs::exists(params_ck)) {
    const auto j = cfg::read_json_file(state_js);
    gan::GanTrainer::StreamState ss;
    ss.step = j.at("step").get<std::int64_t>();
    ss.noise = j.at("noise").get<std::uint64_t>();
    ss.gp = j.at("gp").get<std::uint64_t>();
    ss.eval_noise = j.at("eval_noise").get<std::uint64_t>();
    ss.data = j.at("data").get<std::uint64_t>();
    auto pblocks = read_checkpoint(params_ck);
    for (auto p : critic.params()) load_tensor_from_block(require_block(pblocks, p.name()), p);
    gen->load_blocks(pblocks);
    trainer.load_adam_blocks(read_checkpoint(optim_ck));
    trainer.restore_stream_state(ss);
    truncate_csv(steps_csv, ss.step);
    truncate_csv(evals_csv, ss.step);
    evals = read_evals_csv(evals_csv);
  } else {
    write_text(steps_csv, "step,loss_d,loss_g,wasserstein,gp\n");
    write_text(evals_csv, "step,fid,jsd_raw,jsd_feat\n");
  }

  metrics::FeatureExtractor extractor{rc.metrics.extractor, rc.metrics.extractor_dim,
                                      rc.metrics.extractor_seed};

  gan::TrainHooks hooks;
  hooks.on_step = [&](const gan::StepRecord& r) {
    append_line(steps_csv, std::to_string(r.step) + "," + fmt_double(r.loss_d) + "," +
                               fmt_double(r.loss_g) + "," + fmt_double(r.wasserstein) + "," +
                               fmt_double(r.gp));
  };
  hooks.evaluate = [&](std::int64_t step, const Eigen::MatrixXd& fake_z) {
    gan::EvalRecord r;
    r.step = step;
    const Eigen::MatrixXd& real_z = source->cohort();
    if (latent_mode) {
      // Latent space doubles as both metric spaces here: FID directly on
      // latent vectors, JSD over the [-1,1] feature range.
      r.fid = metrics::fid(real_z, fake_z).value;
      r.jsd_feat = metrics::jsd(real_z, fake_z, metrics::JsdSpace::feature, rc.metrics.jsd_bins);
      r.jsd_raw = r.jsd_feat;
    } else {
      auto& esrc = *static_cast<gan::EncoderSource*>(source.get());
      Eigen::MatrixXd real_rows = train_ds.rows_subset(esrc.cohort_indices());
      Eigen::MatrixXd fake_rows = decode_rows(*ae, fake_z);
      if (rc.metrics.extractor == "ae-encoder") {
        r.fid = metrics::fid(real_z, fake_z).value;
      } else {
        r.fid = metrics::fid(extractor(real_rows), extractor(fake_rows)).value;
      }
      r.jsd_raw = metrics::jsd(real_rows, fake_rows, metrics::JsdSpace::raw, rc.metrics.jsd_bins);
      r.jsd_feat = metrics::jsd(real_z, fake_z, metrics::JsdSpace::feature, rc.metrics.jsd_bins);
    }
    evals.push_back(r);
    append_line(evals_csv, std::to_string(r.step) + "," + fmt_double(r.fid) + "," +
                               fmt_double(r.jsd_raw) + "," + fmt_double(r.jsd_feat));
    return r;
  };
  hooks.checkpoint = save_state;

  trainer.run(total_steps, hooks);
  save_state(trainer.step());

  RunOutcome out;
  out.dir = dir;
  out.seed = rc.seed;
  out.steps_done = trainer.step();
  out.gen_capacity = gen->param_count();
  out.critic_capacity = nets::mlp_param_count(critic_cfg);
  out.evals = evals;

  std::vector<double> fids;
  std::vector<std::int64_t> steps;
  for (const auto& e : evals) {
    fids.push_back(e.fid);
    steps.push_back(e.step);
  }
  OptimalityConfig oc{rc.optimality.window, rc.optimality.tau_sigma, rc.optimality.tau_min,
                      rc.optimality.burn_in_frac};
  bool too_short = false;
  if (fids.size() >= 2 * static_cast<std::size_t>(oc.window)) {
    out.verdict = detect_optimality(fids, steps, oc);
  } else {
    // Not enough evals for the rolling-window rule (short or partial run):
    // record it as chaotic-with-note rather than failing after training.
    too_short = true;
    out.verdict.verdict = Verdict::chaotic;
    out.verdict.transition_step = -1;
    if (!fids.empty()) {
      out.verdict.global_min = *std::min_element(fids.begin(), fids.end());
      out.verdict.final_mean = window_mean(fids, 0, fids.size());
      out.verdict.final_std = window_std(fids, 0, fids.size(), out.verdict.final_mean);
    }
  }

  cfg::json vj = verdict_to_json(out.verdict);
  if (too_short) vj["series_too_short"] = true;
  vj["seed"] = rc.seed;
  vj["generator"] = rc.gan.generator;
  vj["gen_capacity"] = out.gen_capacity;
  vj["critic_capacity"] = out.critic_capacity;
  vj["cgen_capacity"] =
      rc.gan.generator == "classical" ? cfg::json(out.gen_capacity) : cfg::json(nullptr);
  vj["steps_done"] = out.steps_done;
  vj["evals"] = evals.size();
  cfg::write_json_file(dir / "verdict.json", vj);
  return out;
}

VerdictResult verdict_for_run(const fs::path& dir) {
  auto evals = read_evals_csv(dir / "evals.csv");
  if (evals.empty()) throw DataError("no evals recorded in " + dir.string());
  const auto j = cfg::read_json_file(dir / "config.json");
  const auto rc = cfg::parse_run_config(j);
  std::vector<double> fids;
  std::vector<std::int64_t> steps;
  for (const auto& e : evals) {
    fids.push_back(e.fid);
    steps.push_back(e.step);
  }
  OptimalityConfig oc{rc.optimality.window, rc.optimality.tau_sigma, rc.optimality.tau_min,
                      rc.optimality.burn_in_frac};
  return detect_optimality(fids, steps, oc);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SweepPlan parse_sweep_plan(const cfg::json& j) {
  SweepPlan p;
  if (!j.is_object()) throw ConfigError("sweep plan must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "axis" && key != "entries" && key != "seeds" && key != "base")
      throw ConfigError("sweep plan: unknown field '" + key + "'");
  }
  if (j.contains("axis")) p.axis = j.at("axis").get<std::string>();
  if (p.axis != "critic-for-quantum-gen" && p.axis != "classical-gen-for-fixed-critic")
    throw ConfigError("sweep plan: unknown axis '" + p.axis + "'");
  if (!j.contains("entries") || !j.at("entries").is_array() || j.at("entries").empty())
    throw ConfigError("sweep plan: 'entries' must be a non-empty array");
  for (const auto& e : j.at("entries")) {
    SweepEntry se;
    for (const auto& [key, value] : e.items()) {
      if (key != "qubits" && key != "layers" && key != "grid" && key != "critic")
        throw ConfigError("sweep entry: unknown field '" + key + "'");
    }
    se.qubits = e.at("qubits").get<int>();
    se.layers = e.at("layers").get<int>();
    for (const auto& g : e.at("grid")) se.grid.push_back(g.get<std::array<int, 2>>());
    if (se.grid.empty()) throw ConfigError("sweep entry: empty grid");
    if (e.contains("critic")) se.critic = e.at("critic").get<std::array<int, 2>>();
    if (p.axis == "classical-gen-for-fixed-critic" && se.critic[0] <= 0)
      throw ConfigError("classical axis entries need a fixed 'critic'");
    p.entries.push_back(se);
  }
  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
    throw ConfigError("sweep plan: 'seeds' must be a non-empty array");
  for (const auto& s : j.at("seeds")) p.seeds.push_back(s.get<std::uint64_t>());
  p.base = j.contains("base") ? cfg::parse_run_config(j.at("base")) : cfg::RunConfig{};
  return p;
}

namespace {

cfg::RunConfig run_config_for(const SweepPlan& plan, const SweepEntry& entry,
                              const std::array<int, 2>& cap, std::uint64_t seed) {
  cfg::RunConfig rc = plan.base;
  rc.seed = seed;
  rc.gan.qubits = entry.qubits;
  rc.gan.layers = entry.layers;
  if (plan.axis == "critic-for-quantum-gen") {
    rc.gan.generator = "quantum";
    rc.latent_dim = 2 * entry.qubits;
    rc.gan.critic_hidden = cap;
  } else {
    rc.gan.generator = "classical";
    rc.gan.gen_hidden = cap;
    rc.gan.critic_hidden = entry.critic;
    // The classical axis retrains with the reduced learning rates.
    rc.gan.lr_d = 0.0005;
    rc.gan.lr_g = 0.0001;
  }
  return rc;
}

std::string entry_tag(const SweepEntry& e) {
  return "L" + std::to_string(e.layers) + "Q" + std::to_string(e.qubits);
}

std::string cap_tag(const std::array<int, 2>& c) {
  return "cap" + std::to_string(c[0]) + "x" + std::to_string(c[1]);
}

RunOutcome outcome_from_dir(const fs::path& dir) {
  RunOutcome o;
  o.dir = dir;
  const auto j = cfg::read_json_file(dir / "verdict.json");
  o.verdict = verdict_from_json(j);
  o.seed = j.at("seed").get<std::uint64_t>();
  o.gen_capacity = j.at("gen_capacity").get<std::int64_t>();
  o.critic_capacity = j.at("critic_capacity").get<std::int64_t>();
  o.steps_done = j.at("steps_done").get<std::int64_t>();
  o.evals = read_evals_csv(dir / "evals.csv");
  return o;
}

}  // namespace

SweepResult run_sweep(const SweepPlan& plan, const fs::path& out_dir, int budget, int workers) {
  fs::create_directories(out_dir);
  const bool latent_mode = plan.base.latent_target.enabled;

  // Dataset mode: one AE per seed, trained before any run and then frozen.
  if (!latent_mode) {
    for (auto seed : plan.seeds) {
      cfg::RunConfig rc = plan.base;
      rc.seed = seed;
      prepare_ae(rc, out_dir / ("ae-seed" + std::to_string(seed)));
    }
  }

  struct Pending {
    cfg::RunConfig rc;
    fs::path dir;
  };
  std::vector<Pending> pending;
  SweepResult result;

  for (const auto& entry : plan.entries) {
    for (const auto& cap : entry.grid) {
      for (auto seed : plan.seeds) {
        const fs::path dir =
            out_dir / entry_tag(entry) / cap_tag(cap) / ("seed" + std::to_string(seed));
        if (fs::exists(dir / "verdict.json")) {
          result.runs.push_back(outcome_from_dir(dir));
        } else {
          pending.push_back({run_config_for(plan, entry, cap, seed), dir});
        }
      }
    }
  }
  if (budget < 0) pending.clear();  // collect-only (fit-scaling)
  if (budget > 0 && static_cast<int>(pending.size()) > budget)
    pending.resize(static_cast<std::size_t>(budget));

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      auto& p = pending[i];
      try {
        cfg::RunConfig rc = p.rc;
        if (workers > 1) rc.threads = 1;  // runs are the parallel unit
        auto out = execute_run(rc, p.dir,
                               latent_mode ? fs::path{}
                                           : out_dir / ("ae-seed" + std::to_string(rc.seed)));
        std::lock_guard<std::mutex> lock(mu);
        result.runs.push_back(std::move(out));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        result.failures.push_back(p.dir.string() + ": " + e.what());
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Selection per (entry, seed), then the scaling fit over all points.
  for (const auto& entry : plan.entries) {
    // The x axis is the quantum generator capacity on both sweep axes.
    const auto gen_cap = q::count_params(entry.qubits, entry.layers);
    for (auto seed : plan.seeds) {
      std::vector<CapacityOutcome> outcomes;
      for (const auto& run : result.runs) {
        if (run.seed != seed) continue;
        const fs::path want = out_dir / entry_tag(entry);
        if (run.dir.string().rfind(want.string(), 0) != 0) continue;
        CapacityOutcome co;
        co.capacity = plan.axis == "critic-for-quantum-gen" ? run.critic_capacity
                                                            : run.gen_capacity;
        co.verdict = run.verdict;
        outcomes.push_back(co);
      }
      if (outcomes.size() < 2) continue;
      try {
        const auto chosen = select_optimal_capacity(outcomes, plan.base.optimality.tau_min);
        result.points.push_back({static_cast<double>(gen_cap), static_cast<double>(chosen),
                                 seed});
      } catch (const NoOptimumError& e) {
        result.failures.push_back(entry_tag(entry) + "/seed" + std::to_string(seed) + ": " +
                                  e.what());
      }
    }
  }

  if (!result.points.empty()) {
    std::vector<double> xs;
    for (const auto& p : result.points)
      if (std::find(xs.begin(), xs.end(), p.gen_capacity) == xs.end())
        xs.push_back(p.gen_capacity);
    if (xs.size() >= 3) {
      result.fit = fit_exponential(result.points);
      cfg::json fj = fit_to_json(*result.fit);
      fj["points"] = cfg::json::array();
      for (const auto& p : result.points)
        fj["points"].push_back({{"gen_capacity", p.gen_capacity},
                                {"opt_capacity", p.opt_capacity},
                                {"seed", p.seed}});
      cfg::write_json_file(out_dir / "scaling_fit.json", fj);
    }
  }
  if (result.points.empty() && !result.runs.empty() && pending.empty())
    throw NoOptimumError("sweep produced no selectable optimum in any grid");
  return result;
}

}  // namespace lqg::exp
