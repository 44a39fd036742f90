// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria. Run directories live under ./acceptance_runs
// and are rebuilt from scratch on every invocation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lqg/experiments.hpp"
#include "lqg/gan.hpp"
#include "lqg/metrics.hpp"
#include "lqg/nets.hpp"
#include "lqg/optim.hpp"
#include "lqg/quantum.hpp"
#include "lqg/rng.hpp"
#include "support/dense_oracle.hpp"

using namespace lqg;
namespace fs = std::filesystem;
namespace qq = lqg::q;

namespace {

struct Criterion {
  int failures = 0;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      ++failures;
      notes.push_back("FAILED: " + what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

int g_failed = 0;

void run_criterion(int number, const std::string& title,
                   const std::function<void(Criterion&)>& body) {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] criterion %d: %s (%.1fs)\n", c.failures == 0 ? "PASS" : "FAIL", number,
              title.c_str(), secs);
  for (const auto& n : c.notes) std::printf("       %s\n", n.c_str());
  std::fflush(stdout);
  if (c.failures > 0) ++g_failed;
}

Eigen::MatrixXd random_angles(Eigen::Index boxes, RngStream& rng) {
  Eigen::MatrixXd a(boxes, qq::kAnglesPerBox);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      a(i, k) = std::numbers::pi * (2 * rng.uniform() - 1);
  return a;
}

std::vector<qq::Box> boxes_for(int qubits, int layers) {
  if (qubits % 2 == 0) return qq::CircuitSpec::make(qubits, layers).boxes;
  std::vector<qq::Box> boxes;  // odd registers: ring pairing exercises the kernels
  for (int l = 0; l < layers; ++l)
    for (int i = 0; i < qubits; ++i) boxes.push_back({i, (i + 1) % qubits});
  return boxes;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// The canonical desk-scale end-to-end run of criterion 6.
cfg::RunConfig criterion6_config(std::uint64_t seed) {
  cfg::RunConfig rc;
  rc.seed = seed;
  rc.latent_dim = 24;
  rc.threads = 0;  // hardware concurrency; results are thread-count independent
  rc.latent_target.enabled = true;
  rc.latent_target.components = 4;
  rc.latent_target.center_range = 0.4;
  rc.latent_target.sigma = 0.15;
  rc.latent_target.target_seed = 9001;
  rc.gan.generator = "quantum";
  rc.gan.qubits = 12;
  rc.gan.layers = 2;
  rc.gan.critic_hidden = {125, 62};
  rc.gan.n_critic = 5;
  rc.gan.n_gen = 1;
  rc.gan.lambda_gp = 1.0;
  rc.gan.steps = 1500;  // within the 3000-generator-step budget
  rc.gan.batch = 64;
  rc.gan.lr_g = 0.0005;
  rc.gan.lr_d = 0.0008;
  rc.gan.beta1 = 0.5;
  rc.gan.beta2 = 0.999;
  rc.gan.clip = 5.0;
  rc.gan.eval_interval = 25;
  rc.gan.eval_cohort = 2000;
  rc.optimality.window = 20;
  rc.optimality.tau_sigma = 0.05;
  rc.optimality.tau_min = 0.10;
  rc.optimality.burn_in_frac = 0.5;
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_runs";
  fs::remove_all(work);
  fs::create_directories(work);

  // -------------------------------------------------------------------- 1
  run_criterion(1, "parameter-count reproduction", [](Criterion& c) {
    c.require(qq::count_params(12, 2) == 720, "count_params(12,2) == 720");
    c.require(qq::count_params(12, 4) == 1440, "count_params(12,4) == 1440");
    c.require(qq::count_params(12, 6) == 2160, "count_params(12,6) == 2160");
    c.require(qq::count_params(12, 8) == 2880, "count_params(12,8) == 2880");

    const std::vector<std::tuple<int, int, std::int64_t>> critic_rows = {
        {125, 62, 11000},   {350, 175, 70351},   {800, 400, 340801}, {900, 450, 428401},
        {1000, 500, 526001}, {1400, 700, 1016401}};
    for (const auto& [n1, n2, want] : critic_rows)
      c.require(nets::mlp_param_count(nets::critic_config(24, n1, n2)) == want,
                "critic [" + std::to_string(n1) + "," + std::to_string(n2) + "] == " +
                    std::to_string(want));

    const std::vector<std::tuple<int, int, std::int64_t>> gen_rows = {
        {50, 25, 2449}, {100, 50, 7374}, {300, 150, 52074}, {400, 200, 89424},
        {700, 350, 261474}};
    for (const auto& [n1, n2, want] : gen_rows)
      c.require(nets::mlp_param_count(nets::generator_config(10, n1, n2, 24)) == want,
                "generator [" + std::to_string(n1) + "," + std::to_string(n2) + "] == " +
                    std::to_string(want));

    // Anomalous published rows, excluded from exact matching and reported:
    // each is inconsistent with the parameter-count rule that all rows above
    // satisfy. The formula's values are asserted instead.
    c.require(nets::mlp_param_count(nets::critic_config(24, 75, 36)) == 4648,
              "critic [75,36] formula value 4648");
    c.note("reported: critic [75,36] published as 4638, formula gives 4648 (excluded)");
    c.require(nets::mlp_param_count(nets::critic_config(24, 1500, 750)) == 1164001,
              "critic [1500,750] formula value 1164001");
    c.note("reported: critic [1500,750] published as 1321601 (table) / 1160274 (text), "
           "formula gives 1164001 (excluded)");
    c.require(nets::mlp_param_count(nets::generator_config(10, 1400, 700, 24)) == 1012924,
              "generator [1400,700] formula value 1012924");
    c.note("reported: generator [1400,700] published as 1016401 (equals the critic count), "
           "formula gives 1012924 (excluded)");
  });

  // -------------------------------------------------------------------- 2
  run_criterion(2, "simulator oracle equivalence (Q in {2,3,4}, L in {1,2}, 100 draws)",
                [](Criterion& c) {
    RngStream rng(2024, "acceptance.oracle");
    for (int qubits : {2, 3, 4}) {
      for (int layers : {1, 2}) {
        const auto boxes = boxes_for(qubits, layers);
        double worst_amp = 0, worst_norm = 0;
        for (int draw = 0; draw < 100; ++draw) {
          const auto angles = random_angles(static_cast<Eigen::Index>(boxes.size()), rng);
          const auto s = qq::run_boxes(qubits, boxes, angles);
          const auto psi = test::oracle_run(qubits, boxes, angles);
          worst_amp = std::max(worst_amp, (s.amps - psi).cwiseAbs().maxCoeff());
          worst_norm = std::max(worst_norm, std::abs(s.squared_norm() - 1.0));
        }
        c.require(worst_amp < 1e-12, "amplitudes vs dense oracle at Q=" +
                                         std::to_string(qubits) + ", L=" + std::to_string(layers) +
                                         " (worst " + std::to_string(worst_amp) + ")");
        c.require(worst_norm < 1e-12, "norm preservation at Q=" + std::to_string(qubits) +
                                          ", L=" + std::to_string(layers));
      }
    }
  });

  // -------------------------------------------------------------------- 3
  run_criterion(3, "gradient triple-check (adjoint vs parameter-shift vs FD, Q=4, L=2)",
                [](Criterion& c) {
    const int qubits = 4;
    const auto circ = qq::CircuitSpec::make(qubits, 2);
    RngStream rng(2025, "acceptance.grad");
    const auto angles = random_angles(circ.num_boxes(), rng);

    // cotangents probing <X> only, <Z> only, and a mixed observable
    std::vector<Eigen::VectorXd> cots;
    Eigen::VectorXd cx = Eigen::VectorXd::Zero(2 * qubits), cz = cx, cm = cx;
    for (int i = 0; i < qubits; ++i) {
      cx(i) = 1.0;
      cz(qubits + i) = 1.0;
    }
    for (Eigen::Index i = 0; i < cm.size(); ++i) cm(i) = rng.normal();
    cots = {cx, cz, cm};

    auto expval = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& cot) {
      return cot.dot(qq::measure_xz(qq::run_boxes(qubits, circ.boxes, a)));
    };

    for (std::size_t ci = 0; ci < cots.size(); ++ci) {
      const auto& cot = cots[ci];
      const auto adj = qq::angle_grad_adjoint(qubits, circ.boxes, angles, cot);
      double worst_ps = 0;
      for (Eigen::Index j = 0; j < angles.rows(); ++j)
        for (Eigen::Index k = 0; k < angles.cols(); ++k) {
          Eigen::MatrixXd up = angles, down = angles;
          up(j, k) += std::numbers::pi / 2;
          down(j, k) -= std::numbers::pi / 2;
          const double ps = 0.5 * (expval(up, cot) - expval(down, cot));
          worst_ps = std::max(worst_ps, std::abs(adj(j, k) - ps));
        }
      c.require(worst_ps < 1e-10, "adjoint vs parameter-shift, cotangent " +
                                      std::to_string(ci) + " (worst " + std::to_string(worst_ps) +
                                      ")");
    }

    // Through the tanh noise-to-angle map: adjoint VJP vs central FD.
    auto params = qq::StyleParams::lecun_init(qubits, 2, 4242);
    Eigen::VectorXd xi(qubits);
    for (int i = 0; i < qubits; ++i) xi(i) = rng.normal();
    const auto& cot = cots[2];
    const auto vjp = qq::latent_vjp(circ, params, xi, cot);
    const double h = 1e-5;
    double worst_fd = 0;
    for (Eigen::Index bx = 0; bx < params.weight.rows(); ++bx) {
      for (Eigen::Index k = 0; k < params.weight.cols(); ++k) {
        auto probe = [&](double dw, double db) {
          auto p2 = params;
          p2.weight(bx, k) += dw;
          p2.bias(bx, k) += db;
          return cot.dot(qq::generate_latent(circ, p2, xi));
        };
        const double fdw = (probe(h, 0) - probe(-h, 0)) / (2 * h);
        const double fdb = (probe(0, h) - probe(0, -h)) / (2 * h);
        worst_fd = std::max({worst_fd, rel_err(vjp.weight(bx, k), fdw),
                             rel_err(vjp.bias(bx, k), fdb)});
      }
    }
    c.require(worst_fd < 1e-6,
              "adjoint VJP vs finite differences through tanh map (worst rel " +
                  std::to_string(worst_fd) + ")");
  });

  // -------------------------------------------------------------------- 4
  run_criterion(4, "metric closed forms", [](Criterion& c) {
    RngStream rng(2026, "acceptance.metrics");

    Eigen::MatrixXd x(400, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i / 6, i % 6) = rng.normal();
    const auto s = metrics::GaussianStats::from_samples(x);
    c.require(std::abs(metrics::frechet_distance(s, s)) < 1e-8, "FID of identical stats == 0");

    metrics::GaussianStats a, b;
    a.mean = Eigen::VectorXd::Zero(1);
    a.cov = Eigen::MatrixXd::Identity(1, 1);
    a.n = 1000;
    b.mean = Eigen::VectorXd::Constant(1, 1.0);
    b.cov = Eigen::MatrixXd::Constant(1, 1, 4.0);
    b.n = 1000;
    c.require(std::abs(metrics::frechet_distance(a, b) - 2.0) < 1e-9,
              "1-D Gaussians (0,1) vs (1,2) -> 2.0");

    const Eigen::Index n = 50000;
    Eigen::MatrixXd real(n, 8), fake(n, 8);
    for (Eigen::Index i = 0; i < real.size(); ++i) real(i / 8, i % 8) = rng.normal();
    for (Eigen::Index i = 0; i < fake.size(); ++i) fake(i / 8, i % 8) = 1.0 + rng.normal();
    const auto f = metrics::fid(real, fake);
    c.require(std::abs(f.value - 8.0) < 0.1,
              "shifted 8-dim isotropic Gaussians -> 8 +- 0.1 (got " + std::to_string(f.value) +
                  ")");

    Eigen::MatrixXd p(500, 4), q(500, 4);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i / 4, i % 4) = rng.uniform();
    c.require(metrics::jsd(p, p, metrics::JsdSpace::raw) == 0.0, "JSD(P,P) == 0 exactly");
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < 4; ++j) {
        p(i, j) = 0.45 * rng.uniform();
        q(i, j) = 0.55 + 0.45 * rng.uniform();
      }
    c.require(std::abs(metrics::jsd(p, q, metrics::JsdSpace::raw) - std::numbers::ln2) < 1e-12,
              "disjoint supports -> ln 2 per dimension");
  });

  // -------------------------------------------------------------------- 5
  run_criterion(5, "WGAN-GP mechanics", [](Criterion& c) {
    // Linear critics via identity-weight leak-1 hidden layers.
    auto linear_critic = [](const Eigen::VectorXd& w) {
      const int d = static_cast<int>(w.size());
      nets::MlpConfig cfg{d, {d, d}, 1, nets::Activation::leaky_relu, 1.0,
                          nets::Activation::none};
      auto critic = nets::Mlp<double>::init(cfg, 0, "critic");
      for (auto p : critic.params()) p.values().setZero();
      critic.w1.matrix() = Eigen::MatrixXd::Identity(d, d);
      critic.w2.matrix() = Eigen::MatrixXd::Identity(d, d);
      critic.w3.matrix() = w;
      return critic;
    };
    RngStream rng(2027, "acceptance.gan");
    auto rows = [&](Eigen::Index nr, Eigen::Index d) {
      Eigen::MatrixXd m(nr, d);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i / d, i % d) = rng.normal();
      return m;
    };

    Eigen::VectorXd w1v(3);
    w1v << 1.0, 0.0, 0.0;
    auto c1 = linear_critic(w1v);
    RngStream eps1(1, "gp");
    c.require(gan::gradient_penalty(c1, rows(8, 3), rows(8, 3), eps1).item() == 0.0,
              "unit-norm linear critic -> penalty 0 exactly");

    Eigen::VectorXd w3v(3);
    w3v << 3.0, 0.0, 0.0;
    auto c3 = linear_critic(w3v);
    RngStream eps2(2, "gp");
    c.require(gan::gradient_penalty(c3, rows(8, 3), rows(8, 3), eps2).item() == 4.0,
              "norm-3 linear critic -> penalty (3-1)^2 == 4 exactly");

    using Arr = Eigen::ArrayXd;
    std::vector<Arr> g1{(Arr(2) << 6.0, 0.0).finished(), (Arr(1) << 8.0).finished()};
    clip_global_norm<double>(std::span<Arr>(g1), 5.0);
    c.require(g1[0](0) == 3.0 && g1[1](0) == 4.0, "clip halves a norm-10 set at c=5");
    std::vector<Arr> g2{(Arr(3) << 1.0, 2.0, 2.0).finished()};
    const Arr keep = g2[0];
    clip_global_norm<double>(std::span<Arr>(g2), 5.0);
    c.require((g2[0] == keep).all(), "norm-3 set passes c=5 unchanged");
    std::vector<Arr> g3{(Arr(2) << 3.0, 4.0).finished()};
    clip_global_norm<double>(std::span<Arr>(g3), 1.0);
    c.require(std::abs(g3[0](0) - 0.6) < 1e-15 && std::abs(g3[0](1) - 0.8) < 1e-15,
              "[3,4] at c=1 -> [0.6, 0.8]");

    // Update cadence over 100 cycles.
    gan::GanTrainConfig tc;
    tc.n_critic = 5;
    tc.n_gen = 1;
    tc.batch = 8;
    tc.eval_interval = 1000000;
    auto target = gan::LatentTarget::make(4, 2, 0.3, 0.2, 100);
    gan::MixtureSource source(target, 55, 16);
    gan::ClassicalGenerator gen(nets::generator_config(3, 6, 3, 4), 55);
    auto critic = nets::Mlp<double>::init(nets::critic_config(4, 6, 3), 55, "critic");
    gan::GanTrainer trainer(tc, source, gen, critic, 55);
    trainer.run(100, {});
    c.require(trainer.opt_d().states()[0].step == 500,
              "exactly n_critic=5 critic updates per generator update over 100 steps");
    c.require(trainer.opt_g().states()[0].step == 100, "exactly n_gen=1 generator updates");
  });

  // -------------------------------------------------------------------- 6
  std::vector<fs::path> run_dirs;
  run_criterion(6, "desk-scale end-to-end convergence (3 paper seeds)", [&](Criterion& c) {
    for (std::uint64_t seed : {42ULL, 693094ULL, 13671417ULL}) {
      const auto rc = criterion6_config(seed);
      const fs::path dir = work / ("c6-seed" + std::to_string(seed));
      const auto out = exp::execute_run(rc, dir);
      run_dirs.push_back(dir);
      const double final_jsd = out.evals.back().jsd_feat;
      c.require(out.steps_done <= 3000, "within the 3000-generator-step budget");
      c.require(final_jsd < 0.1, "seed " + std::to_string(seed) +
                                     ": feature-space JSD < 0.1 (got " +
                                     std::to_string(final_jsd) + ")");
      c.require(out.verdict.verdict == exp::Verdict::stable,
                "seed " + std::to_string(seed) + ": verdict stable (got " +
                    exp::to_string(out.verdict.verdict) + ", transition step " +
                    std::to_string(out.verdict.transition_step) + ")");
      c.note("seed " + std::to_string(seed) + ": final FID " +
             std::to_string(out.verdict.final_mean) + ", final JSD " + std::to_string(final_jsd) +
             ", transition step " + std::to_string(out.verdict.transition_step));
    }
  });

  // -------------------------------------------------------------------- 7
  run_criterion(7, "scaling-fit machinery", [](Criterion& c) {
    std::vector<exp::ScalingPoint> pts;
    for (double x : {720.0, 1440.0, 2160.0, 2880.0})
      pts.push_back({x, 2.0 * std::exp(0.001 * x), 1});
    const auto f = exp::fit_exponential(pts);
    c.require(std::abs(f.a - 2.0) < 1e-9, "a == 2 within 1e-9 (got " + std::to_string(f.a) + ")");
    c.require(std::abs(f.b - 0.001) < 1e-9, "b == 0.001 within 1e-9");

    // Constructed FID series in the three regimes, classified by the
    // verdict machinery, then selected and fitted.
    RngStream rng(2028, "acceptance.series");
    auto steps = [](std::size_t n) {
      std::vector<std::int64_t> s(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<std::int64_t>(100 * (i + 1));
      return s;
    };
    auto chaotic_series = [&] {
      std::vector<double> v(60);
      for (auto& x : v) x = 50.0 * (2.0 + rng.uniform());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += 40.0 * std::sin(1.7 * static_cast<double>(i));
      return v;
    };
    auto transitional_series = [&] {
      std::vector<double> v(60);
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = i < 40 ? 50.0 * (2.5 + 0.5 * std::sin(0.9 * static_cast<double>(i)) +
                                0.1 * rng.normal())
                      : 50.0 * (1.0 + 0.01 * rng.normal());
      return v;
    };
    auto stable_series = [&] {
      std::vector<double> v(60);
      for (auto& x : v) x = 50.0 * (1.0 + 0.01 * rng.normal());
      return v;
    };

    const exp::OptimalityConfig oc;
    const auto st = steps(60);
    std::vector<exp::CapacityOutcome> grid;
    const auto small = chaotic_series();
    const auto mid = transitional_series();
    const auto large = stable_series();
    grid.push_back({4638, exp::detect_optimality(small, st, oc)});
    grid.push_back({11000, exp::detect_optimality(mid, st, oc)});
    grid.push_back({70351, exp::detect_optimality(large, st, oc)});
    c.require(grid[0].verdict.verdict == exp::Verdict::chaotic, "small capacity is chaotic");
    c.require(grid[1].verdict.verdict == exp::Verdict::transitional,
              "mid capacity is transitional");
    c.require(grid[2].verdict.verdict == exp::Verdict::stable, "large capacity is stable");
    const auto chosen = exp::select_optimal_capacity(grid, oc.tau_min);
    c.require(chosen == 11000, "mid (transitional) capacity selected (got " +
                                   std::to_string(chosen) + ")");

    std::vector<exp::ScalingPoint> sel{{720, static_cast<double>(chosen), 42},
                                       {1440, 25201, 42},
                                       {2160, 70351, 42},
                                       {2880, 526001, 42}};
    const auto fit2 = exp::fit_exponential(sel);
    c.require(std::isfinite(fit2.a) && std::isfinite(fit2.b),
              "sweep selection feeds a finite ScalingFit (a=" + std::to_string(fit2.a) +
                  ", b=" + std::to_string(fit2.b) + ")");
  });

  // -------------------------------------------------------------------- 8
  run_criterion(8, "reproducibility: bit-identical steps.csv", [&](Criterion& c) {
    const auto rc = criterion6_config(42);
    const fs::path dir = work / "c6-seed42-repeat";
    exp::execute_run(rc, dir);
    const fs::path first = work / "c6-seed42";
    c.require(fs::exists(first / "steps.csv"), "criterion-6 seed-42 run present");
    c.require(slurp(first / "steps.csv") == slurp(dir / "steps.csv"),
              "two executions with identical config produce bit-identical steps.csv");
    c.require(slurp(first / "evals.csv") == slurp(dir / "evals.csv"),
              "and bit-identical evals.csv");
  });

  if (g_failed == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failed);
  }
  return g_failed;
}
