// Benchmark CLI for optimal-Gaussian-prior diffusion and clean-manifold
// guided sampling on synthetic multi-agent scenes.

#include <CLI11.hpp>

#include <iostream>

#include "ogd/harness.hpp"

namespace {

using namespace ogd;

RouteKind parse_kind(const std::string& s) {
    if (s == "gt") return RouteKind::gt;
    if (s == "u") return RouteKind::u;
    throw CLI::ValidationError("route kind must be gt or u");
}

SpeedSetting parse_speed(const std::string& s) {
    if (s == "n") return SpeedSetting::normal;
    if (s == "a") return SpeedSetting::accel;
    if (s == "d") return SpeedSetting::decel;
    throw CLI::ValidationError("speed must be n, a, or d");
}

GuidanceMethod parse_method(const std::string& s) {
    if (s == "none") return GuidanceMethod::none;
    if (s == "nnm") return GuidanceMethod::nnm;
    if (s == "sf") return GuidanceMethod::sf;
    if (s == "ecm") return GuidanceMethod::ecm;
    if (s == "ecmr") return GuidanceMethod::ecmr;
    throw CLI::ValidationError("unknown guidance method " + s);
}

Encoding parse_encoding(const std::string& s) {
    if (s == "text") return Encoding::text;
    if (s == "binary") return Encoding::binary;
    throw CLI::ValidationError("format must be text or binary");
}

std::vector<SceneConfig> scenes_for(const std::string& scene_path) {
    if (scene_path.empty()) return standard_suite();
    SceneConfig sc;
    const JointGmm joint = load_scene(scene_path);
    sc.spec = joint.spec;
    sc.seed = joint.seed;
    sc.name = scene_path;
    return {sc};
}

void write_timings(const std::vector<TimingRow>& timings, const std::string& path) {
    std::vector<MetricRow> rows;
    for (const auto& t : timings) {
        MetricRow row;
        row["config_hash"] = t.key;
        row["label"] = t.label;
        row["network_steps"] = std::to_string(t.network_steps);
        put_metric(row, "wall_seconds", t.wall_seconds);
        put_metric(row, "seconds_per_step",
                   t.network_steps > 0 ? t.wall_seconds / double(t.network_steps) : 0.0);
        rows.push_back(std::move(row));
    }
    save_metric_rows(rows, path);
}

struct SceneRuntime {
    JointGmm joint;
    std::vector<MarginalSamples> sets;
    DiffusionSchedule sched;
    PerturbationKernel kernel;
    PriorSampler prior;
    std::unique_ptr<Denoiser> den;
};

SceneRuntime build_runtime(const std::string& scene_path, const std::string& prior_kind,
                           const std::string& model, int sched_T, int start_T, double beta0,
                           double betaT, int L) {
    JointGmm joint = load_scene(scene_path);
    auto sets = marginal_sample_sets(joint, std::min(L, joint.spec.modes_per_agent));
    DiffusionSchedule sched = make_vp_schedule(sched_T, beta0, betaT);

    PerturbationKernel kernel = PerturbationKernel::identity(joint.mixture.dim());
    PriorSampler prior = PriorSampler::standard(kernel);
    if (prior_kind == "ogd") {
        std::vector<DataStats> stats;
        for (const auto& s : sets) stats.push_back(estimate_marginal_stats(s));
        const OptimalPrior opt = optimal_prior_blockdiag(stats, sched.alpha_bar_at_time(start_T));
        kernel = PerturbationKernel(opt.sigma_p_star);
        prior = PriorSampler::ogd(opt);
    } else if (prior_kind != "standard") {
        throw CLI::ValidationError("prior must be standard or ogd");
    }

    std::unique_ptr<Denoiser> den;
    if (model == "oracle") {
        den = std::make_unique<OracleDenoiser>(joint.mixture, sched, kernel);
    } else {
        den = std::make_unique<MlpDenoiser>(load_mlp(model));
    }
    return {std::move(joint), std::move(sets), std::move(sched), std::move(kernel),
            std::move(prior), std::move(den)};
}

Json manifest_config(const CLI::App* cmd) {
    Json j;
    j["command"] = cmd->get_name();
    for (const auto* opt : cmd->get_options()) {
        if (opt->get_name().empty() || opt->count() == 0) continue;
        j["flags"][opt->get_name()] = opt->results();
    }
    return j;
}

void write_manifest(const CLI::App* cmd, std::uint64_t seed, const std::string& out_prefix) {
    RunManifest manifest;
    manifest.config = manifest_config(cmd);
    manifest.seed = seed;
    manifest.code_version = kCodeVersion;
    save_manifest(manifest, out_prefix + ".manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optimal Gaussian diffusion benchmark"};
    app.require_subcommand(1);

    // ---- gen-scene ----
    auto* gen_scene = app.add_subcommand("gen-scene", "generate a synthetic scene");
    SceneSpec spec;
    std::uint64_t scene_seed = 1;
    std::string out_path = "scene.json";
    std::string format = "text";
    gen_scene->add_option("--agents", spec.n_agents);
    gen_scene->add_option("--horizon", spec.horizon);
    gen_scene->add_option("--dt", spec.dt);
    gen_scene->add_option("--modes", spec.modes_per_agent);
    gen_scene->add_option("--coupling", spec.interaction_coupling);
    gen_scene->add_option("--seed", scene_seed);
    gen_scene->add_option("--out", out_path);
    gen_scene->add_option("--format", format);

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the MLP denoiser on a scene");
    std::string train_scene, train_out = "model.ckpt", train_curve = "";
    int train_steps = 3000, train_batch = 64, train_hidden = 64, train_T = 100;
    double train_lr = 1e-3, beta0 = 1e-4, betaT = 0.05;
    std::uint64_t train_seed = 1;
    bool train_ogd_kernel = false;
    train->add_option("--scene", train_scene)->required();
    train->add_option("--steps", train_steps);
    train->add_option("--batch", train_batch);
    train->add_option("--lr", train_lr);
    train->add_option("--hidden", train_hidden);
    train->add_option("--sched-T", train_T);
    train->add_option("--seed", train_seed);
    train->add_option("--out", train_out);
    train->add_option("--loss-curve", train_curve);
    train->add_flag("--ogd-kernel", train_ogd_kernel, "train with the optimal kernel");
    train->add_option("--format", format);

    // ---- sample ----
    auto* sample = app.add_subcommand("sample", "reverse-diffusion sample batch");
    std::string sample_scene, sample_prior = "ogd", sample_model = "oracle";
    std::string sample_out = "batch.json", sample_method = "ddim";
    int sample_n = 128, sample_start_T = 100, sample_sched_T = 100, sample_stride = 10;
    int sample_L = 6;
    std::uint64_t sample_seed = 1;
    sample->add_option("--scene", sample_scene)->required();
    sample->add_option("--prior", sample_prior);
    sample->add_option("--model", sample_model);
    sample->add_option("--method", sample_method);
    sample->add_option("--n", sample_n);
    sample->add_option("--start-T", sample_start_T);
    sample->add_option("--sched-T", sample_sched_T);
    sample->add_option("--stride", sample_stride);
    sample->add_option("--marginal-L", sample_L);
    sample->add_option("--seed", sample_seed);
    sample->add_option("--out", sample_out);
    sample->add_option("--format", format);

    // ---- guide ----
    auto* guide = app.add_subcommand("guide", "guided generation on a scene");
    std::string guide_scene, guide_method = "ecmr", guide_route = "u", guide_speed = "d";
    std::string guide_prior = "ogd", guide_model = "oracle", guide_out = "guided.json";
    std::string guide_noise = "deterministic";
    int guide_n = 128, guide_start_T = 100, guide_sched_T = 100, guide_stride = 10, guide_L = 6;
    double guide_zeta = -1.0;
    std::uint64_t guide_seed = 1;
    bool guide_literal_init = false;
    guide->add_option("--scene", guide_scene)->required();
    guide->add_option("--guidance", guide_method);
    guide->add_option("--route-set", guide_route);
    guide->add_option("--speed", guide_speed);
    guide->add_option("--prior", guide_prior);
    guide->add_option("--model", guide_model);
    guide->add_option("--zeta", guide_zeta);
    guide->add_option("--noise-mode", guide_noise);
    guide->add_option("--n", guide_n);
    guide->add_option("--start-T", guide_start_T);
    guide->add_option("--sched-T", guide_sched_T);
    guide->add_option("--stride", guide_stride);
    guide->add_option("--marginal-L", guide_L);
    guide->add_option("--seed", guide_seed);
    guide->add_option("--out", guide_out);
    guide->add_flag("--literal-init", guide_literal_init);
    guide->add_option("--format", format);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "metrics for a sample batch");
    std::string eval_scene, eval_batch, eval_out = "metrics.txt";
    std::string eval_route = "", eval_speed = "d";
    int eval_L = 6, eval_gt_draws = 32;
    double eval_cluster_threshold = 2.5;
    bool eval_cluster = false;
    std::uint64_t eval_seed = 1;
    eval_cmd->add_option("--scene", eval_scene)->required();
    eval_cmd->add_option("--batch", eval_batch)->required();
    eval_cmd->add_option("--route-set", eval_route, "gt or u: also compute task metrics");
    eval_cmd->add_option("--speed", eval_speed);
    eval_cmd->add_option("--marginal-L", eval_L);
    eval_cmd->add_option("--gt-draws", eval_gt_draws);
    eval_cmd->add_flag("--cluster", eval_cluster);
    eval_cmd->add_option("--cluster-threshold", eval_cluster_threshold);
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--out", eval_out);

    // ---- bench-t-sweep ----
    auto* sweep = app.add_subcommand("bench-t-sweep", "quality over reverse start times");
    std::string sweep_scene = "", sweep_out = "t_sweep.txt";
    std::vector<int> sweep_T = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    bool sweep_vd500 = true;
    HarnessConfig hcfg;
    sweep->add_option("--scene", sweep_scene, "single scene file; default: standard suite");
    sweep->add_option("--T-values", sweep_T);
    sweep->add_flag("--vd500,!--no-vd500", sweep_vd500, "include the 500-step vanilla row");
    sweep->add_option("--samples", hcfg.sweep_samples);
    sweep->add_option("--seed", hcfg.run_seed);
    sweep->add_option("--workers", hcfg.workers);
    sweep->add_option("--out", sweep_out);

    // ---- bench-guidance ----
    auto* bench = app.add_subcommand("bench-guidance", "guided-sampling comparison");
    std::string bench_scene = "", bench_out = "guidance_bench.txt";
    std::vector<std::string> bench_methods = {"no_guid", "nnm", "sf", "ecm", "ecmr"};
    std::vector<std::string> bench_tasks = {"u:d"};
    bench->add_option("--scene", bench_scene);
    bench->add_option("--methods", bench_methods);
    bench->add_option("--tasks", bench_tasks, "route:speed pairs, e.g. u:d gt:n");
    bench->add_option("--n", hcfg.n_samples);
    bench->add_option("--seed", hcfg.run_seed);
    bench->add_option("--workers", hcfg.workers);
    bench->add_option("--out", bench_out);

    // ---- grid-zeta ----
    auto* grid_cmd = app.add_subcommand("grid-zeta", "step-size grid search");
    std::string grid_scene = "", grid_method = "ecm", grid_out = "zeta_grid.txt";
    std::string grid_task = "u:d";
    std::vector<double> grid_values;
    grid_cmd->add_option("--scene", grid_scene);
    grid_cmd->add_option("--method", grid_method);
    grid_cmd->add_option("--task", grid_task);
    grid_cmd->add_option("--grid", grid_values);
    grid_cmd->add_option("--n", hcfg.n_samples);
    grid_cmd->add_option("--seed", hcfg.run_seed);
    grid_cmd->add_option("--workers", hcfg.workers);
    grid_cmd->add_option("--out", grid_out);

    // ---- validate-prior ----
    auto* validate = app.add_subcommand("validate-prior", "numerical prior-optimality report");
    std::string val_scene = "", val_out = "prior_report.json";
    std::vector<int> val_T = {10, 40, 100};
    int val_candidates = 200, val_draws = 10000, val_sched_T = 100;
    std::uint64_t val_seed = 1;
    validate->add_option("--scene", val_scene, "scene file; default: reference scene");
    validate->add_option("--T-values", val_T);
    validate->add_option("--sched-T", val_sched_T);
    validate->add_option("--candidates", val_candidates);
    validate->add_option("--draws", val_draws);
    validate->add_option("--seed", val_seed);
    validate->add_option("--out", val_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_scene->parsed()) {
            const JointGmm scene = make_scene(spec, scene_seed);
            save_scene(scene, out_path, parse_encoding(format));
            write_manifest(gen_scene, scene_seed, out_path);
            std::cout << "wrote " << out_path << " (" << scene.mixture.size() << " components)\n";
        } else if (train->parsed()) {
            const JointGmm joint = load_scene(train_scene);
            const DiffusionSchedule sched = make_vp_schedule(train_T, beta0, betaT);
            PerturbationKernel kernel = PerturbationKernel::identity(joint.mixture.dim());
            if (train_ogd_kernel) {
                const DataStats stats = gmm_moments(joint.mixture);
                kernel = PerturbationKernel(optimal_prior(stats, sched.alpha_bar_at_time(train_T))
                                                 .sigma_p_star);
            }
            MlpConfig mcfg;
            mcfg.dim = joint.mixture.dim();
            mcfg.hidden = train_hidden;
            MlpDenoiser model(mcfg, train_T, train_seed);
            TrainConfig tcfg;
            tcfg.steps = train_steps;
            tcfg.batch = train_batch;
            tcfg.lr = train_lr;
            tcfg.seed = train_seed;
            const TrainResult result = train_ddpm(model, joint.mixture, sched, kernel, tcfg);
            save_mlp(model, train_out, parse_encoding(format));
            if (!train_curve.empty()) {
                std::vector<std::pair<double, double>> curve;
                for (std::size_t i = 0; i < result.loss_curve.size(); ++i)
                    curve.emplace_back(double(i), result.loss_curve[i]);
                save_series(curve, train_curve);
            }
            write_manifest(train, train_seed, train_out);
            std::cout << "wrote " << train_out << " (final loss "
                      << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << ")\n";
        } else if (sample->parsed()) {
            SceneRuntime rt = build_runtime(sample_scene, sample_prior, sample_model,
                                            sample_sched_T, sample_start_T, beta0, betaT,
                                            sample_L);
            SamplerConfig scfg;
            scfg.start_T = sample_start_T;
            scfg.ddim_stride = sample_stride;
            scfg.method = sample_method == "ddpm" ? SamplerMethod::ddpm : SamplerMethod::ddim;
            scfg.n_samples = sample_n;
            scfg.seed = sample_seed;
            const GenerateResult result =
                generate(*rt.den, rt.prior, rt.sched, rt.kernel, scfg);
            save_batch(result.samples, sample_out, parse_encoding(format));
            write_manifest(sample, sample_seed, sample_out);
            write_timings({{"-", "sample", result.network_steps, result.wall_seconds}},
                          sample_out + ".timings.txt");
            std::cout << "wrote " << sample_out << " (" << result.network_steps
                      << " network steps)\n";
        } else if (guide->parsed()) {
            SceneRuntime rt = build_runtime(guide_scene, guide_prior, guide_model, guide_sched_T,
                                            guide_start_T, beta0, betaT, guide_L);
            const RouteTask task = make_route_task(rt.joint, parse_kind(guide_route),
                                                   parse_speed(guide_speed), rt.sets,
                                                   derive_seed(guide_seed, 100));
            SamplerConfig scfg;
            scfg.start_T = guide_start_T;
            scfg.ddim_stride = guide_stride;
            scfg.n_samples = guide_n;
            scfg.seed = guide_seed;
            GuidanceConfig gcfg;
            gcfg.method = parse_method(guide_method);
            gcfg.zeta = guide_zeta >= 0.0 ? guide_zeta : default_zeta(gcfg.method);
            gcfg.noise_mode = guide_noise == "stochastic" ? NoiseMode::stochastic
                                                          : NoiseMode::deterministic;
            gcfg.literal_init = guide_literal_init;
            if (gcfg.method == GuidanceMethod::ecm || gcfg.method == GuidanceMethod::ecmr) {
                gcfg.t_schedule = default_t_schedule(guide_start_T, guide_stride);
                gcfg.K = static_cast<int>(gcfg.t_schedule.size());
            }
            const GuidedResult result = guided_generate(*rt.den, rt.prior, rt.sched, rt.kernel,
                                                        scfg, gcfg, task, &rt.sets);
            save_batch(result.samples, guide_out, parse_encoding(format));
            const MetricsReport metrics = controllable_metrics(result.samples, task);
            std::vector<MetricRow> rows(1);
            rows[0]["config_hash"] = "-";
            rows[0]["method"] = guide_method;
            put_metric(rows[0], "min_jfde", metrics.min_jfde);
            put_metric(rows[0], "mean_jfde", metrics.mean_jfde);
            put_metric(rows[0], "min_jrde", metrics.min_jrde);
            put_metric(rows[0], "mean_jrde", metrics.mean_jrde);
            rows[0]["network_steps"] = std::to_string(result.network_steps);
            rows[0]["guidance_steps"] = std::to_string(result.guidance_steps);
            save_metric_rows(rows, guide_out + ".metrics.txt");
            write_manifest(guide, guide_seed, guide_out);
            write_timings({{"-", guide_method, result.network_steps, result.wall_seconds}},
                          guide_out + ".timings.txt");
            std::cout << "wrote " << guide_out << " minJFDE=" << metrics.min_jfde << "\n";
        } else if (eval_cmd->parsed()) {
            const JointGmm joint = load_scene(eval_scene);
            const Mat batch = load_batch(eval_batch);
            const auto sets =
                marginal_sample_sets(joint, std::min(eval_L, joint.spec.modes_per_agent));
            std::vector<MetricRow> rows;
            MetricRow row;
            row["config_hash"] = "-";
            row["batch"] = eval_batch;
            {
                const Mat gt = joint.mixture.sample_matrix(eval_gt_draws,
                                                           derive_seed(eval_seed, 9800));
                double fde = 0.0, ade = 0.0;
                Mat preds = batch;
                Vec probs;
                if (eval_cluster) {
                    const ClusterResult cl = cluster_samples(batch, sets, joint.spec.horizon,
                                                             eval_cluster_threshold);
                    preds = cl.representatives;
                    probs = cl.probabilities;
                    row["clusters"] = std::to_string(cl.member_counts.size());
                }
                for (Eigen::Index g = 0; g < gt.rows(); ++g) {
                    const MetricsReport r = joint_prediction_metrics(
                        preds, probs, gt.row(g).transpose(), joint.spec.n_agents,
                        joint.spec.horizon);
                    fde += r.avg_min_fde;
                    ade += r.avg_min_ade;
                }
                put_metric(row, "avg_min_fde", fde / double(gt.rows()));
                put_metric(row, "avg_min_ade", ade / double(gt.rows()));
                const Mat gt_sw =
                    joint.mixture.sample_matrix(static_cast<int>(batch.rows()),
                                                derive_seed(eval_seed, 9000));
                put_metric(row, "sliced_wasserstein",
                           sliced_wasserstein(batch, gt_sw, 100, derive_seed(eval_seed, 9500)));
            }
            if (!eval_route.empty()) {
                const RouteTask task = make_route_task(joint, parse_kind(eval_route),
                                                       parse_speed(eval_speed), sets,
                                                       derive_seed(eval_seed, 100));
                const MetricsReport m = controllable_metrics(batch, task);
                put_metric(row, "min_jfde", m.min_jfde);
                put_metric(row, "mean_jfde", m.mean_jfde);
                put_metric(row, "min_jrde", m.min_jrde);
                put_metric(row, "mean_jrde", m.mean_jrde);
            }
            rows.push_back(std::move(row));
            save_metric_rows(rows, eval_out);
            write_manifest(eval_cmd, eval_seed, eval_out);
            std::cout << "wrote " << eval_out << "\n";
        } else if (sweep->parsed()) {
            std::vector<TSweepEntry> entries;
            for (int T : sweep_T) {
                entries.push_back({PriorKind::ogd, 100, T});
                entries.push_back({PriorKind::standard, 100, T});
            }
            if (sweep_vd500) entries.push_back({PriorKind::standard, 500, 500});
            const BenchOutput out = run_t_sweep(scenes_for(sweep_scene), entries, hcfg);
            save_metric_rows(out.rows, sweep_out);
            write_timings(out.timings, sweep_out + ".timings.txt");
            // plot-ready series per prior kind
            for (const char* prior : {"ogd", "standard"}) {
                std::vector<std::pair<double, double>> series;
                for (int T : sweep_T)
                    series.emplace_back(T, mean_metric(out.rows, "sliced_wasserstein",
                                                       {{"prior", prior},
                                                        {"start_T", std::to_string(T)},
                                                        {"sched_T", "100"}}));
                save_series(series, sweep_out + "." + prior + ".series.txt");
            }
            write_manifest(sweep, hcfg.run_seed, sweep_out);
            std::cout << "wrote " << sweep_out << " (" << out.rows.size() << " rows)\n";
        } else if (bench->parsed()) {
            std::vector<BenchMethod> methods;
            for (const auto& name : bench_methods) {
                BenchMethod m;
                m.name = name;
                if (name == "ecm_stochastic") {
                    m.method = GuidanceMethod::ecm;
                    m.noise = NoiseMode::stochastic;
                } else {
                    m.method = parse_method(name == "no_guid" ? "none" : name);
                }
                methods.push_back(std::move(m));
            }
            std::vector<TaskSpec> tasks;
            for (const auto& t : bench_tasks) {
                const auto sep = t.find(':');
                if (sep == std::string::npos)
                    throw CLI::ValidationError("task must be route:speed");
                tasks.push_back({parse_kind(t.substr(0, sep)), parse_speed(t.substr(sep + 1))});
            }
            const BenchOutput out = run_guidance_bench(scenes_for(bench_scene), methods, tasks,
                                                       hcfg);
            save_metric_rows(out.rows, bench_out);
            write_timings(out.timings, bench_out + ".timings.txt");
            write_manifest(bench, hcfg.run_seed, bench_out);
            std::cout << "wrote " << bench_out << " (" << out.rows.size() << " rows)\n";
        } else if (grid_cmd->parsed()) {
            BenchMethod m;
            m.name = grid_method;
            m.method = parse_method(grid_method);
            const auto sep = grid_task.find(':');
            if (sep == std::string::npos) throw CLI::ValidationError("task must be route:speed");
            const TaskSpec task{parse_kind(grid_task.substr(0, sep)),
                                parse_speed(grid_task.substr(sep + 1))};
            const std::vector<double> grid =
                grid_values.empty() ? default_zeta_grid(m.method) : grid_values;
            const GridResult result =
                run_step_size_grid(scenes_for(grid_scene), m, task, grid, hcfg);
            save_series(result.curve, grid_out);
            write_manifest(grid_cmd, hcfg.run_seed, grid_out);
            std::cout << "best zeta " << result.best_zeta << " -> " << grid_out << "\n";
        } else if (validate->parsed()) {
            JointGmm joint = val_scene.empty()
                                 ? make_scene(reference_scene().spec, reference_scene().seed)
                                 : load_scene(val_scene);
            const DiffusionSchedule sched = make_vp_schedule(val_sched_T, beta0, betaT);
            const OptimalityReport report =
                validate_optimality(joint, sched, val_T, val_candidates, val_seed, val_draws);
            save_report(report, val_out);
            write_manifest(validate, val_seed, val_out);
            for (const auto& e : report.entries)
                std::cout << "T=" << e.T << " closed_kl=" << e.closed_kl
                          << " family_opt_kl=" << e.family_opt_kl
                          << " attains_opt=" << (e.closed_attains_family_opt ? "yes" : "no")
                          << " vc_preferred=" << (e.vc_variant_preferred ? "yes" : "no") << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
