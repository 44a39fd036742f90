#include "lqg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace lqg::cfg {

namespace {

// Strict object reader: every key must be consumed exactly once.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  ~Obj() = default;

  template <class T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key))
        throw ConfigError(where_ + ": unknown field '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Obj root(j, "config");
  root.opt("seed", c.seed);
  root.opt("latent_dim", c.latent_dim);
  root.opt("threads", c.threads);

  if (const json* d = root.child("dataset")) {
    Obj o(*d, "dataset");
    o.opt("path", c.dataset.path);
    o.opt("subselect", c.dataset.subselect);
    o.opt("val_fraction", c.dataset.val_fraction);
    o.finish();
  }
  if (const json* d = root.child("ae")) {
    Obj o(*d, "ae");
    o.opt("conv_channels", c.ae.conv_channels);
    o.opt("fc_width", c.ae.fc_width);
    o.opt("dropout", c.ae.dropout);
    o.opt("batchnorm", c.ae.batchnorm);
    o.opt("epochs", c.ae.epochs);
    o.opt("lr", c.ae.lr);
    o.opt("beta1", c.ae.beta1);
    o.opt("beta2", c.ae.beta2);
    o.opt("weight_decay", c.ae.weight_decay);
    o.opt("batch", c.ae.batch);
    o.opt("precision", c.ae.precision);
    o.finish();
    if (c.ae.precision != "f64" && c.ae.precision != "f32")
      throw ConfigError("ae.precision must be 'f64' or 'f32'");
  }
  if (const json* d = root.child("gan")) {
    Obj o(*d, "gan");
    o.opt("generator", c.gan.generator);
    o.opt("qubits", c.gan.qubits);
    o.opt("layers", c.gan.layers);
    o.opt("gen_hidden", c.gan.gen_hidden);
    o.opt("noise_dim", c.gan.noise_dim);
    o.opt("critic_hidden", c.gan.critic_hidden);
    o.opt("critic_leak", c.gan.critic_leak);
    o.opt("n_critic", c.gan.n_critic);
    o.opt("n_gen", c.gan.n_gen);
    o.opt("lambda_gp", c.gan.lambda_gp);
    o.opt("epochs", c.gan.epochs);
    o.opt("steps", c.gan.steps);
    o.opt("batch", c.gan.batch);
    o.opt("lr_g", c.gan.lr_g);
    o.opt("lr_d", c.gan.lr_d);
    o.opt("beta1", c.gan.beta1);
    o.opt("beta2", c.gan.beta2);
    o.opt("weight_decay", c.gan.weight_decay);
    o.opt("clip", c.gan.clip);
    o.opt("eval_interval", c.gan.eval_interval);
    o.opt("eval_cohort", c.gan.eval_cohort);
    o.finish();
    if (c.gan.generator != "quantum" && c.gan.generator != "classical")
      throw ConfigError("gan.generator must be 'quantum' or 'classical'");
  }
  if (const json* d = root.child("metrics")) {
    Obj o(*d, "metrics");
    o.opt("extractor", c.metrics.extractor);
    o.opt("extractor_dim", c.metrics.extractor_dim);
    o.opt("extractor_seed", c.metrics.extractor_seed);
    o.opt("jsd_bins", c.metrics.jsd_bins);
    o.finish();
  }
  if (const json* d = root.child("optimality")) {
    Obj o(*d, "optimality");
    o.opt("window", c.optimality.window);
    o.opt("tau_sigma", c.optimality.tau_sigma);
    o.opt("tau_min", c.optimality.tau_min);
    o.opt("burn_in_frac", c.optimality.burn_in_frac);
    o.finish();
  }
  if (const json* d = root.child("latent_target")) {
    Obj o(*d, "latent_target");
    o.opt("enabled", c.latent_target.enabled);
    o.opt("components", c.latent_target.components);
    o.opt("center_range", c.latent_target.center_range);
    o.opt("sigma", c.latent_target.sigma);
    o.opt("target_seed", c.latent_target.target_seed);
    o.finish();
  }
  root.finish();
  if (!c.latent_target.enabled && c.dataset.path.empty()) {
    // Permitted: some subcommands only need net/metric settings. Run entry
    // points check for a data source themselves.
  }
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["latent_dim"] = c.latent_dim;
  j["threads"] = c.threads;
  j["dataset"] = {{"path", c.dataset.path},
                  {"subselect", c.dataset.subselect},
                  {"val_fraction", c.dataset.val_fraction}};
  j["ae"] = {{"conv_channels", c.ae.conv_channels},
             {"fc_width", c.ae.fc_width},
             {"dropout", c.ae.dropout},
             {"batchnorm", c.ae.batchnorm},
             {"epochs", c.ae.epochs},
             {"lr", c.ae.lr},
             {"beta1", c.ae.beta1},
             {"beta2", c.ae.beta2},
             {"weight_decay", c.ae.weight_decay},
             {"batch", c.ae.batch},
             {"precision", c.ae.precision}};
  j["gan"] = {{"generator", c.gan.generator},
              {"qubits", c.gan.qubits},
              {"layers", c.gan.layers},
              {"gen_hidden", c.gan.gen_hidden},
              {"noise_dim", c.gan.noise_dim},
              {"critic_hidden", c.gan.critic_hidden},
              {"critic_leak", c.gan.critic_leak},
              {"n_critic", c.gan.n_critic},
              {"n_gen", c.gan.n_gen},
              {"lambda_gp", c.gan.lambda_gp},
              {"epochs", c.gan.epochs},
              {"steps", c.gan.steps},
              {"batch", c.gan.batch},
              {"lr_g", c.gan.lr_g},
              {"lr_d", c.gan.lr_d},
              {"beta1", c.gan.beta1},
              {"beta2", c.gan.beta2},
              {"weight_decay", c.gan.weight_decay},
              {"clip", c.gan.clip},
              {"eval_interval", c.gan.eval_interval},
              {"eval_cohort", c.gan.eval_cohort}};
  j["metrics"] = {{"extractor", c.metrics.extractor},
                  {"extractor_dim", c.metrics.extractor_dim},
                  {"extractor_seed", c.metrics.extractor_seed},
                  {"jsd_bins", c.metrics.jsd_bins}};
  j["optimality"] = {{"window", c.optimality.window},
                     {"tau_sigma", c.optimality.tau_sigma},
                     {"tau_min", c.optimality.tau_min},
                     {"burn_in_frac", c.optimality.burn_in_frac}};
  j["latent_target"] = {{"enabled", c.latent_target.enabled},
                        {"components", c.latent_target.components},
                        {"center_range", c.latent_target.center_range},
                        {"sigma", c.latent_target.sigma},
                        {"target_seed", c.latent_target.target_seed}};
  return j;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = parse_run_config(read_json_file(path));
  if (const char* env = std::getenv("LQG_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("LQG_SEED is not an integer");
    c.seed = v;
  }
  return c;
}

}  // namespace lqg::cfg
