#pragma once

#include <string>
#include <vector>

#include "ogd/evaluate.hpp"
#include "ogd/guidance.hpp"
#include "ogd/persistence.hpp"

namespace ogd {

inline constexpr const char* kCodeVersion = "ogdbench 0.1.0";

struct SceneConfig {
    std::string name;
    SceneSpec spec;
    std::uint64_t seed = 0;
    int marginal_L = 6;  // clamped to the mode count

    int effective_L() const { return std::min(marginal_L, spec.modes_per_agent); }
};

/// 20 fixed-seed scenes spanning n in {1,2,3} and coupling in {0, 0.5, 0.9}.
std::vector<SceneConfig> standard_suite();

/// Single mid-size scene used by module-level checks.
SceneConfig reference_scene();

struct HarnessConfig {
    int n_samples = 128;       // guided generation batch
    int sweep_samples = 1000;  // samples per side for sliced-Wasserstein
    int gt_eval_draws = 32;    // held-out draws for displacement metrics
    double beta0 = 1e-4;
    double betaT = 0.05;
    int ddim_stride = 10;
    std::uint64_t run_seed = 1;
    int workers = 0;  // 0 = OGD_WORKERS env or hardware_concurrency
};

int resolve_workers(int requested);

/// Step-size defaults selected by the desk-scale grid search (lowest mean
/// minJFDE over the standard suite).
double default_zeta(GuidanceMethod method);

/// Grids searched for the step size.
std::vector<double> default_zeta_grid(GuidanceMethod method);

struct TSweepEntry {
    PriorKind prior = PriorKind::ogd;
    int sched_T = 100;
    int start_T = 100;
};

struct BenchMethod {
    std::string name;
    GuidanceMethod method = GuidanceMethod::none;
    NoiseMode noise = NoiseMode::deterministic;
    double zeta = -1.0;  // negative = library default
};

struct TaskSpec {
    RouteKind kind = RouteKind::u;
    SpeedSetting speed = SpeedSetting::decel;
};

/// Default Table-4-style method list: no-guidance on the OGD pipeline plus
/// NNM/SF on the 500-step vanilla pipeline and ECM/ECMR on OGD.
std::vector<BenchMethod> default_bench_methods();

struct TimingRow {
    std::string key;  // config hash of the timed run
    std::string label;
    long network_steps = 0;
    double wall_seconds = 0.0;
};

struct BenchOutput {
    std::vector<MetricRow> rows;       // deterministic, sorted by config hash
    std::vector<TimingRow> timings;    // wall-clock sidecar data
};

/// Joint-prediction quality sweep over reverse start times: one row per
/// (scene, prior kind, start_T) with sliced-Wasserstein and displacement
/// metrics against held-out ground-truth draws.
BenchOutput run_t_sweep(const std::vector<SceneConfig>& scenes,
                        const std::vector<TSweepEntry>& entries, const HarnessConfig& cfg);

/// Controllable-generation bench: one row per (scene, task, method).
BenchOutput run_guidance_bench(const std::vector<SceneConfig>& scenes,
                               const std::vector<BenchMethod>& methods,
                               const std::vector<TaskSpec>& tasks, const HarnessConfig& cfg);

struct GridResult {
    double best_zeta = 0.0;
    std::vector<std::pair<double, double>> curve;  // zeta -> mean minJFDE
};

GridResult run_step_size_grid(const std::vector<SceneConfig>& scenes, const BenchMethod& method,
                              const TaskSpec& task, const std::vector<double>& grid,
                              const HarnessConfig& cfg);

/// Mean of a metric over rows matching all (key, value) filters.
double mean_metric(const std::vector<MetricRow>& rows, const std::string& metric,
                   const std::vector<std::pair<std::string, std::string>>& filters);

}  // namespace ogd
