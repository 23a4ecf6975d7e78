#include "ogd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ogd {

std::vector<SceneConfig> standard_suite() {
    std::vector<SceneConfig> scenes;
    const double couplings[3] = {0.0, 0.5, 0.9};
    for (int i = 0; i < 20; ++i) {
        SceneConfig sc;
        sc.spec.n_agents = 1 + i % 3;
        sc.spec.horizon = 12;
        sc.spec.dt = 0.5;
        sc.spec.modes_per_agent = sc.spec.n_agents == 3 ? 3 : 4;
        sc.spec.interaction_coupling = couplings[(i / 3) % 3];
        sc.seed = 1000 + static_cast<std::uint64_t>(i);
        sc.marginal_L = 6;
        sc.name = "scene" + std::to_string(i);
        scenes.push_back(sc);
    }
    return scenes;
}

SceneConfig reference_scene() {
    SceneConfig sc;
    sc.name = "reference";
    sc.spec.n_agents = 2;
    sc.spec.horizon = 12;
    sc.spec.dt = 0.5;
    sc.spec.modes_per_agent = 3;
    sc.spec.interaction_coupling = 0.5;
    sc.seed = 7;
    sc.marginal_L = 6;
    return sc;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("OGD_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

double default_zeta(GuidanceMethod method) {
    switch (method) {
        case GuidanceMethod::nnm: return 30.0;
        case GuidanceMethod::sf: return 1000.0;
        case GuidanceMethod::ecm: return 0.1;
        case GuidanceMethod::ecmr: return 0.1;
        default: return 0.0;
    }
}

std::vector<double> default_zeta_grid(GuidanceMethod method) {
    if (method == GuidanceMethod::sf) return {10, 500, 1000, 2000, 3000, 5000};
    return {1, 5, 7, 10, 15, 30, 60, 100};
}

std::vector<BenchMethod> default_bench_methods() {
    return {
        {"no_guid", GuidanceMethod::none, NoiseMode::deterministic, 0.0},
        {"nnm", GuidanceMethod::nnm, NoiseMode::deterministic, -1.0},
        {"sf", GuidanceMethod::sf, NoiseMode::deterministic, -1.0},
        {"ecm", GuidanceMethod::ecm, NoiseMode::deterministic, -1.0},
        {"ecmr", GuidanceMethod::ecmr, NoiseMode::deterministic, -1.0},
    };
}

namespace {

const char* prior_name(PriorKind kind) {
    return kind == PriorKind::ogd ? "ogd" : "standard";
}

const char* kind_name(RouteKind k) { return k == RouteKind::gt ? "gt" : "u"; }

const char* speed_name(SpeedSetting s) {
    switch (s) {
        case SpeedSetting::normal: return "n";
        case SpeedSetting::accel: return "a";
        default: return "d";
    }
}

/// Runs `body(i)` for i in [0, n) on the resolved worker count. Results must
/// be written to per-index slots; seeds are derived per index so the outcome
/// is independent of the thread assignment.
void parallel_for(int n, int workers, const std::function<void(int)>& body) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct ScenePipelines {
    JointGmm joint;
    std::vector<MarginalSamples> sets;
    DataStats joint_stats;
    std::vector<DataStats> per_agent_stats;
};

ScenePipelines build_scene(const SceneConfig& sc) {
    ScenePipelines p{make_scene(sc.spec, sc.seed), {}, {}, {}};
    p.sets = marginal_sample_sets(p.joint, sc.effective_L());
    p.joint_stats = gmm_moments(p.joint.mixture);
    for (const auto& set : p.sets) p.per_agent_stats.push_back(estimate_marginal_stats(set));
    return p;
}

struct Pipeline {
    DiffusionSchedule sched;
    PerturbationKernel kernel;
    PriorSampler prior;
    OracleDenoiser oracle;
};

Pipeline make_pipeline(const ScenePipelines& scene, PriorKind kind, int sched_T, int start_T,
                       const HarnessConfig& cfg) {
    DiffusionSchedule sched = make_vp_schedule(sched_T, cfg.beta0, cfg.betaT);
    if (kind == PriorKind::ogd) {
        const OptimalPrior prior =
            optimal_prior_blockdiag(scene.per_agent_stats, sched.alpha_bar_at_time(start_T));
        PerturbationKernel kernel(prior.sigma_p_star);
        OracleDenoiser oracle(scene.joint.mixture, sched, kernel);
        return {std::move(sched), kernel, PriorSampler::ogd(prior), std::move(oracle)};
    }
    PerturbationKernel kernel = PerturbationKernel::identity(scene.joint.mixture.dim());
    OracleDenoiser oracle(scene.joint.mixture, sched, kernel);
    return {std::move(sched), kernel, PriorSampler::standard(kernel), std::move(oracle)};
}

struct DisplacementMetrics {
    double avg_min_fde = 0.0;
    double avg_min_ade = 0.0;
};

DisplacementMetrics displacement_against_draws(const Mat& preds, const Mat& gt_draws, int n_agents,
                                               int horizon) {
    DisplacementMetrics out;
    for (Eigen::Index g = 0; g < gt_draws.rows(); ++g) {
        const MetricsReport r = joint_prediction_metrics(preds, Vec(), gt_draws.row(g).transpose(),
                                                         n_agents, horizon);
        out.avg_min_fde += r.avg_min_fde;
        out.avg_min_ade += r.avg_min_ade;
    }
    out.avg_min_fde /= double(gt_draws.rows());
    out.avg_min_ade /= double(gt_draws.rows());
    return out;
}

Json sweep_config_json(const SceneConfig& sc, const TSweepEntry& e, const HarnessConfig& cfg) {
    Json j;
    j["op"] = "t_sweep_row";
    j["scene"] = sc.name;
    j["scene_seed"] = sc.seed;
    j["n_agents"] = sc.spec.n_agents;
    j["coupling"] = sc.spec.interaction_coupling;
    j["prior"] = prior_name(e.prior);
    j["sched_T"] = e.sched_T;
    j["start_T"] = e.start_T;
    j["stride"] = cfg.ddim_stride;
    j["sweep_samples"] = cfg.sweep_samples;
    j["run_seed"] = cfg.run_seed;
    return j;
}

void sort_rows(std::vector<MetricRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
        return a.at("config_hash") < b.at("config_hash");
    });
}

}  // namespace

BenchOutput run_t_sweep(const std::vector<SceneConfig>& scenes,
                        const std::vector<TSweepEntry>& entries, const HarnessConfig& cfg) {
    const int n_tasks = static_cast<int>(scenes.size() * entries.size());
    std::vector<MetricRow> rows(static_cast<std::size_t>(n_tasks));
    std::vector<TimingRow> timings(static_cast<std::size_t>(n_tasks));
    parallel_for(n_tasks, resolve_workers(cfg.workers), [&](int idx) {
        const auto& sc = scenes[static_cast<std::size_t>(idx) / entries.size()];
        const auto& entry = entries[static_cast<std::size_t>(idx) % entries.size()];
        const ScenePipelines scene = build_scene(sc);
        Pipeline pipe = make_pipeline(scene, entry.prior, entry.sched_T, entry.start_T, cfg);

        SamplerConfig scfg;
        scfg.start_T = entry.start_T;
        scfg.ddim_stride = cfg.ddim_stride;
        scfg.method = SamplerMethod::ddim;
        scfg.n_samples = cfg.sweep_samples;
        scfg.seed = derive_seed(cfg.run_seed, 7000 + static_cast<std::uint64_t>(idx));
        const GenerateResult gen =
            generate(pipe.oracle, pipe.prior, pipe.sched, pipe.kernel, scfg);

        const std::uint64_t gt_seed = derive_seed(cfg.run_seed, 9000 + sc.seed);
        const Mat gt = scene.joint.mixture.sample_matrix(cfg.sweep_samples, gt_seed);
        const std::uint64_t proj_seed = derive_seed(cfg.run_seed, 9500 + sc.seed);
        const double sw = sliced_wasserstein(gen.samples, gt, 100, proj_seed);

        const int k = std::min<int>(128, cfg.sweep_samples);
        const Mat gt_eval = scene.joint.mixture.sample_matrix(
            cfg.gt_eval_draws, derive_seed(cfg.run_seed, 9800 + sc.seed));
        const DisplacementMetrics disp = displacement_against_draws(
            gen.samples.topRows(k), gt_eval, sc.spec.n_agents, sc.spec.horizon);

        const Json config = sweep_config_json(sc, entry, cfg);
        MetricRow row;
        row["config_hash"] = config_hash(config);
        row["scene"] = sc.name;
        row["prior"] = prior_name(entry.prior);
        row["sched_T"] = std::to_string(entry.sched_T);
        row["start_T"] = std::to_string(entry.start_T);
        row["seed"] = std::to_string(scfg.seed);
        put_metric(row, "sliced_wasserstein", sw);
        put_metric(row, "avg_min_fde_128", disp.avg_min_fde);
        put_metric(row, "avg_min_ade_128", disp.avg_min_ade);
        row["network_steps"] = std::to_string(gen.network_steps);
        rows[static_cast<std::size_t>(idx)] = std::move(row);
        timings[static_cast<std::size_t>(idx)] = {config_hash(config),
                                                  std::string(prior_name(entry.prior)) + "@" +
                                                      std::to_string(entry.start_T),
                                                  gen.network_steps, gen.wall_seconds};
    });
    sort_rows(rows);
    return {std::move(rows), std::move(timings)};
}

namespace {

struct ResolvedMethod {
    BenchMethod spec;
    PriorKind prior;
    int sched_T;
    int start_T;
};

ResolvedMethod resolve_method(const BenchMethod& m) {
    ResolvedMethod r{m, PriorKind::ogd, 100, 100};
    if (m.method == GuidanceMethod::nnm || m.method == GuidanceMethod::sf) {
        r.prior = PriorKind::standard;
        r.sched_T = 500;
        r.start_T = 500;
    }
    if (r.spec.zeta < 0.0) r.spec.zeta = default_zeta(m.method);
    return r;
}

}  // namespace

BenchOutput run_guidance_bench(const std::vector<SceneConfig>& scenes,
                               const std::vector<BenchMethod>& methods,
                               const std::vector<TaskSpec>& tasks, const HarnessConfig& cfg) {
    const int n_combo = static_cast<int>(scenes.size() * methods.size() * tasks.size());
    std::vector<MetricRow> rows(static_cast<std::size_t>(n_combo));
    std::vector<TimingRow> timings(static_cast<std::size_t>(n_combo));
    if (n_combo == 0) return {};
    parallel_for(n_combo, resolve_workers(cfg.workers), [&](int idx) {
        const std::size_t per_scene = methods.size() * tasks.size();
        const auto& sc = scenes[static_cast<std::size_t>(idx) / per_scene];
        const std::size_t rem = static_cast<std::size_t>(idx) % per_scene;
        const auto& task_spec = tasks[rem / methods.size()];
        const ResolvedMethod method = resolve_method(methods[rem % methods.size()]);

        const ScenePipelines scene = build_scene(sc);
        Pipeline pipe = make_pipeline(scene, method.prior, method.sched_T, method.start_T, cfg);
        const RouteTask task =
            make_route_task(scene.joint, task_spec.kind, task_spec.speed, scene.sets,
                            derive_seed(cfg.run_seed, 100 + sc.seed));

        SamplerConfig scfg;
        scfg.start_T = method.start_T;
        scfg.ddim_stride = cfg.ddim_stride;
        scfg.method = SamplerMethod::ddim;
        scfg.n_samples = cfg.n_samples;
        scfg.seed = derive_seed(cfg.run_seed, 5000 + static_cast<std::uint64_t>(idx));

        GuidanceConfig gcfg;
        gcfg.method = method.spec.method;
        gcfg.zeta = method.spec.zeta;
        gcfg.noise_mode = method.spec.noise;
        if (gcfg.method == GuidanceMethod::ecm || gcfg.method == GuidanceMethod::ecmr) {
            gcfg.t_schedule = default_t_schedule(method.start_T, cfg.ddim_stride);
            gcfg.K = static_cast<int>(gcfg.t_schedule.size());
        }

        const GuidedResult run = guided_generate(pipe.oracle, pipe.prior, pipe.sched, pipe.kernel,
                                                 scfg, gcfg, task, &scene.sets);
        const MetricsReport metrics = controllable_metrics(run.samples, task);

        Json config;
        config["op"] = "guidance_row";
        config["scene"] = sc.name;
        config["scene_seed"] = sc.seed;
        config["method"] = method.spec.name;
        config["zeta"] = method.spec.zeta;
        config["noise"] =
            method.spec.noise == NoiseMode::deterministic ? "deterministic" : "stochastic";
        config["route_kind"] = kind_name(task_spec.kind);
        config["speed"] = speed_name(task_spec.speed);
        config["start_T"] = method.start_T;
        config["sched_T"] = method.sched_T;
        config["n_samples"] = cfg.n_samples;
        config["run_seed"] = cfg.run_seed;

        MetricRow row;
        row["config_hash"] = config_hash(config);
        row["scene"] = sc.name;
        row["method"] = method.spec.name;
        row["route_kind"] = kind_name(task_spec.kind);
        row["speed"] = speed_name(task_spec.speed);
        row["noise"] = config["noise"].get<std::string>();
        put_metric(row, "zeta", method.spec.zeta);
        row["seed"] = std::to_string(scfg.seed);
        row["network_steps"] = std::to_string(run.network_steps);
        row["guidance_steps"] = std::to_string(run.guidance_steps);
        put_metric(row, "min_jfde", metrics.min_jfde);
        put_metric(row, "mean_jfde", metrics.mean_jfde);
        put_metric(row, "min_jrde", metrics.min_jrde);
        put_metric(row, "mean_jrde", metrics.mean_jrde);
        put_metric(row, "min_jfde_horizon", metrics.min_jfde_horizon);
        put_metric(row, "mean_jfde_horizon", metrics.mean_jfde_horizon);
        rows[static_cast<std::size_t>(idx)] = std::move(row);
        timings[static_cast<std::size_t>(idx)] = {config_hash(config), method.spec.name,
                                                  run.network_steps, run.wall_seconds};
    });
    sort_rows(rows);
    return {std::move(rows), std::move(timings)};
}

GridResult run_step_size_grid(const std::vector<SceneConfig>& scenes, const BenchMethod& method,
                              const TaskSpec& task, const std::vector<double>& grid,
                              const HarnessConfig& cfg) {
    if (grid.empty()) throw std::invalid_argument("empty step-size grid");
    GridResult result;
    double best = std::numeric_limits<double>::infinity();
    for (double zeta : grid) {
        BenchMethod m = method;
        m.zeta = zeta;
        const BenchOutput out = run_guidance_bench(scenes, {m}, {task}, cfg);
        const double mean_min_jfde = mean_metric(out.rows, "min_jfde", {});
        result.curve.emplace_back(zeta, mean_min_jfde);
        if (mean_min_jfde < best) {
            best = mean_min_jfde;
            result.best_zeta = zeta;
        }
    }
    return result;
}

double mean_metric(const std::vector<MetricRow>& rows, const std::string& metric,
                   const std::vector<std::pair<std::string, std::string>>& filters) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : rows) {
        bool match = true;
        for (const auto& [k, v] : filters) {
            auto it = row.find(k);
            if (it == row.end() || it->second != v) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        auto it = row.find(metric);
        if (it == row.end()) continue;
        sum += std::stod(it->second);
        ++count;
    }
    if (count == 0) throw std::runtime_error("no rows match metric query: " + metric);
    return sum / count;
}

}  // namespace ogd
