#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lqg/checkpoint.hpp"
#include "lqg/data.hpp"
#include "lqg/nets.hpp"
#include "lqg/optim.hpp"
#include "lqg/quantum.hpp"
#include "lqg/rng.hpp"
#include "lqg/tensor.hpp"

// WGAN-GP training in latent space. One training cycle = n_critic critic
// updates on a fixed real batch (fresh noise per update), then n_gen
// generator updates. Critic loss: E[D(fake)] - E[D(real)] + lambda_gp * GP;
// generator loss: -E[D(fake)]. Gradients of both nets are global-norm
// clipped at c before Adam.
namespace lqg::gan {

using T = ad::Tensor<double>;

constexpr int kGateOrderVersion = 1;

struct GanTrainConfig {
  int n_critic = 5;
  int n_gen = 1;
  double lambda_gp = 1.0;
  std::int64_t epochs = 10000;  // dataset mode: passes over the sub-selection
  std::int64_t steps = 0;       // if > 0, total generator cycles (latent-target mode)
  int batch = 256;
  double lr_g = 0.0005;
  double lr_d = 0.0008;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double clip = 5.0;
  std::int64_t eval_interval = 100;
  std::int64_t eval_cohort = 2000;
  int threads = 1;

  void validate() const {
    if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
    if (n_gen < 1) throw ConfigError("n_gen must be >= 1");
    if (lambda_gp < 0) throw ConfigError("lambda_gp must be >= 0");
    if (batch < 2) throw ConfigError("batch must be >= 2 (interpolation needs pairs)");
    if (clip <= 0) throw ConfigError("clip must be > 0");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  }
};

struct StepRecord {
  std::int64_t step = 0;
  double loss_d = 0;
  double loss_g = 0;
  double wasserstein = 0;
  double gp = 0;
};

struct EvalRecord {
  std::int64_t step = 0;
  double fid = 0;
  double jsd_raw = 0;
  double jsd_feat = 0;
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;
  virtual int latent_dim() const = 0;
  // Graph-producing sample: gradients flow into the generator parameters.
  virtual T sample(Eigen::Index batch, RngStream& noise) = 0;
  // Detached sample for critic updates and evaluation cohorts.
  virtual Eigen::MatrixXd sample_detached(Eigen::Index batch, RngStream& noise) = 0;
  virtual std::vector<T> params() = 0;
  virtual std::int64_t param_count() = 0;
  virtual void append_blocks(std::vector<CheckpointBlock>& blocks) = 0;
  virtual void load_blocks(const std::vector<CheckpointBlock>& blocks) = 0;
};

// The style-conditioned PQC generator. W and b live as graph leaves; the
// statevector simulation enters the graph through a custom op whose VJP is
// the adjoint-differentiation batch.
class QuantumGenerator : public Generator {
 public:
  QuantumGenerator(int qubits, int layers, std::uint64_t seed, int threads)
      : circ_(q::CircuitSpec::make(qubits, layers)), threads_(threads) {
    auto init = q::StyleParams::lecun_init(qubits, layers, seed);
    weight_ = T::from_matrix(init.weight, true, "qgen.W");
    bias_ = T::from_matrix(init.bias, true, "qgen.b");
  }

  int latent_dim() const override { return 2 * circ_.qubits; }

  Eigen::MatrixXd draw_noise(Eigen::Index batch, RngStream& noise) const {
    Eigen::MatrixXd xi(batch, circ_.qubits);
    for (Eigen::Index i = 0; i < batch; ++i)
      for (int qb = 0; qb < circ_.qubits; ++qb) xi(i, qb) = noise.normal();
    return xi;
  }

  T sample(Eigen::Index batch, RngStream& noise) override {
    const Eigen::MatrixXd xi = draw_noise(batch, noise);
    const auto p = style_params();
    const Eigen::MatrixXd out = q::generate_latent_batch(circ_, p, xi, threads_);
    T::Array flat(out.size());
    Eigen::Map<T::Matrix>(flat.data(), out.rows(), out.cols()) = out;
    const auto circ = circ_;
    const int threads = threads_;
    return ad::detail::make_op<double>(
        "quantum_generate", ad::Shape{batch, 2 * circ_.qubits}, std::move(flat),
        {weight_, bias_},
        [circ, xi, threads](const T& g, const T& self) {
          const auto& wt = self.node()->parents[0];
          const auto& bt = self.node()->parents[1];
          q::StyleParams p2;
          p2.qubits = circ.qubits;
          p2.layers = circ.layers;
          p2.weight = wt.matrix();
          p2.bias = bt.matrix();
          Eigen::MatrixXd cot = g.matrix();
          auto grads = q::latent_vjp_batch(circ, p2, xi, cot, threads);
          return std::vector<T>{T::from_matrix(grads.weight), T::from_matrix(grads.bias)};
        });
  }

  Eigen::MatrixXd sample_detached(Eigen::Index batch, RngStream& noise) override {
    return q::generate_latent_batch(circ_, style_params(), draw_noise(batch, noise), threads_);
  }

  std::vector<T> params() override { return {weight_, bias_}; }

  std::int64_t param_count() override { return q::count_params(circ_.qubits, circ_.layers); }

  void append_blocks(std::vector<CheckpointBlock>& blocks) override {
    blocks.push_back(block_from_tensor("qgen.W", weight_));
    blocks.push_back(block_from_tensor("qgen.b", bias_));
    const double meta[3] = {static_cast<double>(circ_.qubits), static_cast<double>(circ_.layers),
                            static_cast<double>(kGateOrderVersion)};
    blocks.push_back(CheckpointBlock::from_f64("qgen.meta", {3}, meta));
  }

  void load_blocks(const std::vector<CheckpointBlock>& blocks) override {
    const auto meta = require_block(blocks, "qgen.meta").as_f64();
    if (meta.size() != 3 || static_cast<int>(meta[0]) != circ_.qubits ||
        static_cast<int>(meta[1]) != circ_.layers)
      throw DataError("qgen.meta does not match Q=" + std::to_string(circ_.qubits) +
                      ", L=" + std::to_string(circ_.layers));
    if (static_cast<int>(meta[2]) != kGateOrderVersion)
      throw DataError("checkpoint uses gate-ordering version " +
                      std::to_string(static_cast<int>(meta[2])) + ", this build expects " +
                      std::to_string(kGateOrderVersion));
    load_tensor_from_block(require_block(blocks, "qgen.W"), weight_);
    load_tensor_from_block(require_block(blocks, "qgen.b"), bias_);
  }

  const q::CircuitSpec& circuit() const { return circ_; }

  q::StyleParams style_params() const {
    q::StyleParams p;
    p.qubits = circ_.qubits;
    p.layers = circ_.layers;
    p.weight = weight_.matrix();
    p.bias = bias_.matrix();
    return p;
  }

 private:
  q::CircuitSpec circ_;
  int threads_;
  T weight_, bias_;
};

// Plain two-hidden-layer MLP generator; noise enters only the first layer.
class ClassicalGenerator : public Generator {
 public:
  ClassicalGenerator(const nets::MlpConfig& cfg, std::uint64_t seed)
      : mlp_(nets::Mlp<double>::init(cfg, seed, "cgen")) {}

  int latent_dim() const override { return mlp_.cfg.d_out; }

  T draw_noise_tensor(Eigen::Index batch, RngStream& noise) const {
    auto xi = T::leaf(ad::Shape{batch, mlp_.cfg.d_in}, false, "xi");
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi.values()(i) = noise.normal();
    return xi;
  }

  T sample(Eigen::Index batch, RngStream& noise) override {
    return mlp_.forward(draw_noise_tensor(batch, noise));
  }

  Eigen::MatrixXd sample_detached(Eigen::Index batch, RngStream& noise) override {
    ad::NoGradGuard ng;
    return mlp_.forward(draw_noise_tensor(batch, noise)).matrix();
  }

  std::vector<T> params() override { return mlp_.params(); }
  std::int64_t param_count() override { return mlp_.param_count(); }

  void append_blocks(std::vector<CheckpointBlock>& blocks) override {
    for (auto& p : mlp_.params()) blocks.push_back(block_from_tensor(p.name(), p));
  }
  void load_blocks(const std::vector<CheckpointBlock>& blocks) override {
    for (auto& p : mlp_.params()) load_tensor_from_block(require_block(blocks, p.name()), p);
  }

  nets::Mlp<double>& mlp() { return mlp_; }

 private:
  nets::Mlp<double> mlp_;
};

// ---------------------------------------------------------------------------
// Real-latent sources
// ---------------------------------------------------------------------------

class LatentSource {
 public:
  virtual ~LatentSource() = default;
  virtual int dim() const = 0;
  // Real latents for training cycle `cycle`.
  virtual Eigen::MatrixXd next_batch(Eigen::Index batch, std::int64_t cycle) = 0;
  // Fixed evaluation cohort (constant across evals of one run).
  virtual const Eigen::MatrixXd& cohort() = 0;
  virtual std::uint64_t stream_counter() const { return 0; }
  virtual void restore_stream(std::uint64_t) {}
};

// Fixed synthetic Gaussian mixture over [-1,1]^dim. The mixture itself is a
// pure function of target_seed (shared across runs); the run seed only
// drives which samples are drawn.
struct LatentTarget {
  int dim = 24;
  int components = 4;
  double center_range = 0.4;
  double sigma = 0.15;
  std::uint64_t target_seed = 9001;
  Eigen::MatrixXd centers;  // [components, dim]

  static LatentTarget make(int dim, int components, double center_range, double sigma,
                           std::uint64_t target_seed) {
    LatentTarget t;
    t.dim = dim;
    t.components = components;
    t.center_range = center_range;
    t.sigma = sigma;
    t.target_seed = target_seed;
    RngStream rng(target_seed, "latent-target");
    t.centers.resize(components, dim);
    for (int k = 0; k < components; ++k)
      for (int d = 0; d < dim; ++d)
        t.centers(k, d) = center_range * (2.0 * rng.uniform() - 1.0);
    return t;
  }

  Eigen::VectorXd sample(RngStream& rng) const {
    const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(components)));
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d)
      x(d) = std::clamp(centers(k, d) + sigma * rng.normal(), -1.0, 1.0);
    return x;
  }
};

class MixtureSource : public LatentSource {
 public:
  MixtureSource(LatentTarget target, std::uint64_t run_seed, Eigen::Index cohort_size)
      : target_(std::move(target)), data_(run_seed, "data") {
    RngStream eval(run_seed, "eval.real");
    cohort_.resize(cohort_size, target_.dim);
    for (Eigen::Index i = 0; i < cohort_size; ++i)
      cohort_.row(i) = target_.sample(eval).transpose();
  }

  int dim() const override { return target_.dim; }

  Eigen::MatrixXd next_batch(Eigen::Index batch, std::int64_t) override {
    Eigen::MatrixXd z(batch, target_.dim);
    for (Eigen::Index i = 0; i < batch; ++i) z.row(i) = target_.sample(data_).transpose();
    return z;
  }

  const Eigen::MatrixXd& cohort() override { return cohort_; }
  std::uint64_t stream_counter() const override { return data_.counter(); }
  void restore_stream(std::uint64_t c) override { data_.seek(c); }

  const LatentTarget& target() const { return target_; }

 private:
  LatentTarget target_;
  RngStream data_;
  Eigen::MatrixXd cohort_;
};

// Frozen-encoder source over a seeded dataset sub-selection. Batch order is
// a pure function of (seed, epoch-cycle); encoding runs with no graph.
class EncoderSource : public LatentSource {
 public:
  EncoderSource(const data::ImageDataset& ds, const nets::Autoencoder<double>& ae,
                Eigen::Index batch, std::uint64_t seed, Eigen::Index cohort_size)
      : ds_(ds), ae_(ae), batcher_(ds.n, static_cast<std::size_t>(batch), seed) {
    RngStream eval(seed, "eval.real");
    auto perm = random_permutation(ds.n, eval);
    perm.resize(std::min<std::size_t>(ds.n, static_cast<std::size_t>(cohort_size)));
    cohort_indices_ = perm;
    ad::NoGradGuard ng;
    cohort_ = ae_.encode(nets::to_nchw<double>(ds_, perm)).matrix();
  }

  int dim() const override { return ae_.cfg.latent_dim; }

  Eigen::MatrixXd next_batch(Eigen::Index batch, std::int64_t cycle) override {
    const auto bpe = static_cast<std::int64_t>(batcher_.batches_per_epoch());
    const auto epoch = static_cast<std::uint64_t>(cycle / bpe);
    const auto b = static_cast<std::size_t>(cycle % bpe);
    ad::NoGradGuard ng;
    auto x = nets::to_nchw<double>(ds_, batcher_.batch_indices(epoch, b));
    (void)batch;
    return ae_.encode(x).matrix();
  }

  const Eigen::MatrixXd& cohort() override { return cohort_; }
  const std::vector<std::size_t>& cohort_indices() const { return cohort_indices_; }
  std::int64_t batches_per_epoch() const {
    return static_cast<std::int64_t>(batcher_.batches_per_epoch());
  }

 private:
  const data::ImageDataset& ds_;
  const nets::Autoencoder<double>& ae_;
  data::Batcher batcher_;
  std::vector<std::size_t> cohort_indices_;
  Eigen::MatrixXd cohort_;
};

// ---------------------------------------------------------------------------
// WGAN-GP pieces
// ---------------------------------------------------------------------------

// Mean over pairs of (||grad_zhat D(zhat)||_2 - 1)^2 with one epsilon per
// pair. Returned as a graph scalar differentiable w.r.t. the critic
// parameters (double backward through the input gradient).
inline T gradient_penalty(const nets::Mlp<double>& critic, const Eigen::MatrixXd& z_real,
                          const Eigen::MatrixXd& z_fake, RngStream& eps_rng) {
  if (z_real.rows() != z_fake.rows() || z_real.cols() != z_fake.cols())
    throw ConfigError("gradient_penalty: real/fake batch shapes differ");
  const Eigen::Index b = z_real.rows(), d = z_real.cols();
  Eigen::MatrixXd zhat_v(b, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double eps = eps_rng.uniform();
    zhat_v.row(i) = eps * z_real.row(i) + (1.0 - eps) * z_fake.row(i);
  }
  auto zhat = T::from_matrix(zhat_v, /*requires_grad=*/true, "zhat");
  auto scores = critic.forward(zhat);
  // Each score depends on its own row only, so the input gradient of the
  // summed scores stacks the per-sample gradients.
  auto total = ad::sum(scores);
  auto ones = T::constant(ad::Shape{}, T::Array::Constant(1, 1.0), "seed");
  const T wrt[] = {zhat};
  auto grads = ad::grad_of(total, ones, std::span<const T>(wrt), /*create_graph=*/true);
  auto norms = ad::rownorm(grads[0]);
  return ad::mean(ad::square(ad::add_scalar(norms, -1.0)));
}

struct CriticStepOut {
  double loss_d = 0, wasserstein = 0, gp = 0;
};

inline CriticStepOut critic_step(nets::Mlp<double>& critic, Adam<double>& opt_d,
                                 const Eigen::MatrixXd& z_real, const Eigen::MatrixXd& z_fake,
                                 const GanTrainConfig& cfg, RngStream& eps_rng,
                                 std::int64_t step_index) {
  auto zr = T::from_matrix(z_real);
  auto zf = T::from_matrix(z_fake);
  auto wass = ad::sub(ad::mean(critic.forward(zf)), ad::mean(critic.forward(zr)));
  T loss = wass;
  T gp;
  if (cfg.lambda_gp != 0.0) {
    gp = gradient_penalty(critic, z_real, z_fake, eps_rng);
    loss = ad::add(wass, ad::mul_scalar(gp, cfg.lambda_gp));
  }
  CriticStepOut out;
  out.wasserstein = wass.item();
  out.gp = gp ? gp.item() : 0.0;
  out.loss_d = loss.item();
  if (!std::isfinite(out.loss_d))
    throw NumericError("critic loss is not finite at step " + std::to_string(step_index) +
                       " (wasserstein=" + std::to_string(out.wasserstein) +
                       ", gp=" + std::to_string(out.gp) + ")");
  opt_d.zero_grad();
  auto params = opt_d.params();
  ad::backward(loss, std::span<T>(params));
  clip_global_norm(std::span<T>(params), cfg.clip);
  opt_d.step();
  return out;
}

inline double generator_step(nets::Mlp<double>& critic, Generator& gen, Adam<double>& opt_g,
                             const GanTrainConfig& cfg, RngStream& noise,
                             std::int64_t step_index) {
  auto zf = gen.sample(cfg.batch, noise);
  auto loss = ad::neg(ad::mean(critic.forward(zf)));
  const double loss_g = loss.item();
  if (!std::isfinite(loss_g))
    throw NumericError("generator loss is not finite at step " + std::to_string(step_index));
  opt_g.zero_grad();
  auto params = opt_g.params();
  ad::backward(loss, std::span<T>(params));
  clip_global_norm(std::span<T>(params), cfg.clip);
  opt_g.step();
  return loss_g;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  // fake_latents: fresh detached cohort. Return value is recorded.
  std::function<EvalRecord(std::int64_t step, const Eigen::MatrixXd& fake_latents)> evaluate;
  std::function<void(std::int64_t step)> checkpoint;
};

class GanTrainer {
 public:
  GanTrainer(GanTrainConfig cfg, LatentSource& real, Generator& gen, nets::Mlp<double>& critic,
             std::uint64_t seed)
      : cfg_(cfg),
        real_(real),
        gen_(gen),
        critic_(critic),
        opt_d_(critic.params(), AdamConfig<double>{cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8,
                                                   cfg.weight_decay}),
        opt_g_(gen.params(), AdamConfig<double>{cfg.lr_g, cfg.beta1, cfg.beta2, 1e-8,
                                                cfg.weight_decay}),
        noise_(seed, "noise"),
        gp_eps_(seed, "gp"),
        eval_noise_(seed, "eval.noise") {
    cfg.validate();
    if (real.dim() != gen.latent_dim())
      throw ConfigError("latent dim mismatch: source " + std::to_string(real.dim()) +
                        " vs generator " + std::to_string(gen.latent_dim()));
  }

  // Runs cycles step_+1 .. total_steps. Each cycle: encode/draw one real
  // batch, n_critic critic updates (fresh fake noise each), n_gen generator
  // updates, then optional evaluation + checkpoint.
  void run(std::int64_t total_steps, const TrainHooks& hooks) {
    while (step_ < total_steps) {
      const std::int64_t cycle = step_;
      const Eigen::MatrixXd z_real = real_.next_batch(cfg_.batch, cycle);
      StepRecord rec;
      for (int i = 0; i < cfg_.n_critic; ++i) {
        const Eigen::MatrixXd z_fake = gen_.sample_detached(cfg_.batch, noise_);
        const auto out = critic_step(critic_, opt_d_, z_real, z_fake, cfg_, gp_eps_, step_);
        rec.loss_d = out.loss_d;
        rec.wasserstein = out.wasserstein;
        rec.gp = out.gp;
      }
      for (int i = 0; i < cfg_.n_gen; ++i)
        rec.loss_g = generator_step(critic_, gen_, opt_g_, cfg_, noise_, step_);
      step_ += 1;
      rec.step = step_;
      if (hooks.on_step) hooks.on_step(rec);
      if (step_ % cfg_.eval_interval == 0) {
        if (hooks.evaluate) {
          const Eigen::MatrixXd fake = gen_.sample_detached(cfg_.eval_cohort, eval_noise_);
          hooks.evaluate(step_, fake);
        }
        if (hooks.checkpoint) hooks.checkpoint(step_);
      }
    }
  }

  std::int64_t step() const { return step_; }
  Adam<double>& opt_d() { return opt_d_; }
  Adam<double>& opt_g() { return opt_g_; }

  // Serializable trainer state (parameters live in their own blocks).
  struct StreamState {
    std::int64_t step = 0;
    std::uint64_t noise = 0, gp = 0, eval_noise = 0, data = 0;
  };

  StreamState stream_state() const {
    return {step_, noise_.counter(), gp_eps_.counter(), eval_noise_.counter(),
            real_.stream_counter()};
  }

  void restore_stream_state(const StreamState& s) {
    step_ = s.step;
    noise_.seek(s.noise);
    gp_eps_.seek(s.gp);
    eval_noise_.seek(s.eval_noise);
    real_.restore_stream(s.data);
  }

  void append_adam_blocks(std::vector<CheckpointBlock>& blocks) {
    auto dump = [&blocks](const char* tag, Adam<double>& opt) {
      auto& params = opt.params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& st = opt.states()[i];
        const auto n = static_cast<std::uint32_t>(st.m.size());
        blocks.push_back(CheckpointBlock::from_f64(std::string(tag) + "." + params[i].name() +
                                                       ".m", {n}, st.m.data()));
        blocks.push_back(CheckpointBlock::from_f64(std::string(tag) + "." + params[i].name() +
                                                       ".v", {n}, st.v.data()));
        const double stepv = static_cast<double>(st.step);
        blocks.push_back(CheckpointBlock::from_f64(std::string(tag) + "." + params[i].name() +
                                                       ".t", {1}, &stepv));
      }
    };
    dump("adam.d", opt_d_);
    dump("adam.g", opt_g_);
  }

  void load_adam_blocks(const std::vector<CheckpointBlock>& blocks) {
    auto load = [&blocks](const char* tag, Adam<double>& opt) {
      auto& params = opt.params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& st = opt.states()[i];
        const auto m = require_block(blocks, std::string(tag) + "." + params[i].name() + ".m").as_f64();
        const auto v = require_block(blocks, std::string(tag) + "." + params[i].name() + ".v").as_f64();
        const auto t = require_block(blocks, std::string(tag) + "." + params[i].name() + ".t").as_f64();
        if (m.size() != static_cast<std::size_t>(st.m.size()) ||
            v.size() != static_cast<std::size_t>(st.v.size()))
          throw DataError("Adam state size mismatch for " + params[i].name());
        for (Eigen::Index j = 0; j < st.m.size(); ++j) {
          st.m(j) = m[static_cast<std::size_t>(j)];
          st.v(j) = v[static_cast<std::size_t>(j)];
        }
        st.step = static_cast<std::int64_t>(t.at(0));
      }
    };
    load("adam.d", opt_d_);
    load("adam.g", opt_g_);
  }

 private:
  GanTrainConfig cfg_;
  LatentSource& real_;
  Generator& gen_;
  nets::Mlp<double>& critic_;
  Adam<double> opt_d_, opt_g_;
  RngStream noise_, gp_eps_, eval_noise_;
  std::int64_t step_ = 0;
};

}  // namespace lqg::gan
