#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lqg/config.hpp"
#include "lqg/errors.hpp"
#include "lqg/gan.hpp"

// Capacity-scaling study machinery: per-run optimality verdicts from the FID
// time series, optimal-capacity selection per generator capacity, and the
// exponential scaling fit. Plus the on-disk run harness used by both the CLI
// and sweep orchestration.
namespace lqg::exp {

enum class Verdict { chaotic, transitional, stable };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct OptimalityConfig {
  int window = 20;          // evals per rolling window
  double tau_sigma = 0.05;  // rolling std < tau_sigma * window mean
  double tau_min = 0.10;    // window mean <= (1+tau_min) * global min
  double burn_in_frac = 0.5;
};

struct VerdictResult {
  Verdict verdict = Verdict::chaotic;
  std::int64_t transition_step = -1;  // 0 = stable from the start; -1 = never
  double final_mean = 0;
  double final_std = 0;
  double global_min = 0;
};

// Verdict over an FID series (values aligned with their generator steps).
// stable: the series is stable from before the burn-in point through the
// end; transitional: stability is only reached after burn-in (transition
// step reported); chaotic: the final window is not stable or not low.
VerdictResult detect_optimality(std::span<const double> fid, std::span<const std::int64_t> steps,
                                const OptimalityConfig& cfg);

struct CapacityOutcome {
  std::int64_t capacity = 0;
  VerdictResult verdict;
};

// Smallest non-chaotic capacity whose final-window FID mean is within
// tau_min of the best non-chaotic mean; ties break toward smaller capacity.
// Throws NoOptimumError when every outcome is chaotic.
std::int64_t select_optimal_capacity(std::span<const CapacityOutcome> outcomes, double tau_min);

struct ScalingPoint {
  double gen_capacity = 0;  // P_QG (or proxy)
  double opt_capacity = 0;  // selected P_D or P_CG
  std::uint64_t seed = 0;
};

struct BandPoint {
  double gen_capacity = 0;
  double mean = 0;
  double sigma = 0;  // 1 sigma over seeds
};

struct ScalingFit {
  double a = 0, b = 0;               // P = a * exp(b * P_QG)
  std::vector<double> residuals;     // log-space, per point
  std::vector<BandPoint> band;
};

// Linearized least squares of ln(P_opt) against gen capacity over all
// points; the band is the per-capacity mean/std of P_opt across seeds.
ScalingFit fit_exponential(std::span<const ScalingPoint> points);

cfg::json fit_to_json(const ScalingFit& f);

// ---------------------------------------------------------------------------
// Run harness (one training run in one directory)
// ---------------------------------------------------------------------------

struct RunOutcome {
  std::filesystem::path dir;
  std::int64_t gen_capacity = 0;
  std::int64_t critic_capacity = 0;
  std::uint64_t seed = 0;
  VerdictResult verdict;
  std::vector<gan::EvalRecord> evals;
  std::int64_t steps_done = 0;
};

// Executes (or resumes) one GAN run described by `rc` into `dir`, writing
// config.json, steps.csv, evals.csv, checkpoints and verdict.json. In
// dataset mode `ae_dir` must hold a trained AE checkpoint (ae.lqgc).
RunOutcome execute_run(const cfg::RunConfig& rc, const std::filesystem::path& dir,
                       const std::filesystem::path& ae_dir = {});

// Re-derives the verdict for an existing run directory from its evals.csv.
VerdictResult verdict_for_run(const std::filesystem::path& dir);

// Trains (or loads) the AE for `rc` into `ae_dir` (checkpoint ae.lqgc plus
// ae_history.csv); returns the rFID of the final epoch, if computed.
double prepare_ae(const cfg::RunConfig& rc, const std::filesystem::path& ae_dir);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepEntry {
  int qubits = 12;
  int layers = 2;
  std::vector<std::array<int, 2>> grid;   // critic (or classical-gen) widths
  std::array<int, 2> critic{0, 0};        // classical axis: the fixed critic
};

struct SweepPlan {
  std::string axis = "critic-for-quantum-gen";  // or "classical-gen-for-fixed-critic"
  std::vector<SweepEntry> entries;
  std::vector<std::uint64_t> seeds;
  cfg::RunConfig base;
};

SweepPlan parse_sweep_plan(const cfg::json& j);

struct SweepResult {
  std::vector<RunOutcome> runs;
  std::vector<ScalingPoint> points;
  std::optional<ScalingFit> fit;
  std::vector<std::string> failures;  // run ids that errored (sweep continues)
};

// Executes the plan under out_dir, skipping runs that already carry a
// verdict.json. budget > 0 caps the number of new runs this invocation.
SweepResult run_sweep(const SweepPlan& plan, const std::filesystem::path& out_dir,
                      int budget = 0, int workers = 1);

}  // namespace lqg::exp
