#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ogd/harness.hpp"

namespace py = pybind11;
using namespace ogd;

namespace {

RouteKind route_kind(const std::string& s) {
    if (s == "gt") return RouteKind::gt;
    if (s == "u") return RouteKind::u;
    throw py::value_error("route kind must be 'gt' or 'u'");
}

SpeedSetting speed_setting(const std::string& s) {
    if (s == "n") return SpeedSetting::normal;
    if (s == "a") return SpeedSetting::accel;
    if (s == "d") return SpeedSetting::decel;
    throw py::value_error("speed must be 'n', 'a', or 'd'");
}

GuidanceMethod guidance_method(const std::string& s) {
    if (s == "none") return GuidanceMethod::none;
    if (s == "nnm") return GuidanceMethod::nnm;
    if (s == "sf") return GuidanceMethod::sf;
    if (s == "ecm") return GuidanceMethod::ecm;
    if (s == "ecmr") return GuidanceMethod::ecmr;
    throw py::value_error("unknown guidance method: " + s);
}

struct PyScene {
    JointGmm joint;

    static PyScene make(int n_agents, int horizon, double dt, int modes, double coupling,
                        std::uint64_t seed) {
        SceneSpec spec;
        spec.n_agents = n_agents;
        spec.horizon = horizon;
        spec.dt = dt;
        spec.modes_per_agent = modes;
        spec.interaction_coupling = coupling;
        return {make_scene(spec, seed)};
    }

    int effective_L(int requested) const {
        return std::min(requested, joint.spec.modes_per_agent);
    }
};

struct ScenePipeline {
    DiffusionSchedule sched;
    PerturbationKernel kernel;
    PriorSampler prior;
    OracleDenoiser oracle;
    std::vector<MarginalSamples> sets;
};

ScenePipeline build_pipeline(const PyScene& scene, const std::string& prior_kind, int sched_T,
                             int start_T, int L) {
    DiffusionSchedule sched = make_vp_schedule(sched_T, 1e-4, 0.05);
    auto sets = marginal_sample_sets(scene.joint, scene.effective_L(L));
    if (prior_kind == "ogd") {
        std::vector<DataStats> stats;
        for (const auto& s : sets) stats.push_back(estimate_marginal_stats(s));
        const OptimalPrior prior =
            optimal_prior_blockdiag(stats, sched.alpha_bar_at_time(start_T));
        PerturbationKernel kernel(prior.sigma_p_star);
        OracleDenoiser oracle(scene.joint.mixture, sched, kernel);
        return {std::move(sched), kernel, PriorSampler::ogd(prior), std::move(oracle),
                std::move(sets)};
    }
    if (prior_kind != "standard") throw py::value_error("prior must be 'standard' or 'ogd'");
    PerturbationKernel kernel = PerturbationKernel::identity(scene.joint.mixture.dim());
    OracleDenoiser oracle(scene.joint.mixture, sched, kernel);
    return {std::move(sched), kernel, PriorSampler::standard(kernel), std::move(oracle),
            std::move(sets)};
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    if (std::isfinite(m.min_jfde)) {
        d["min_jfde"] = m.min_jfde;
        d["mean_jfde"] = m.mean_jfde;
        d["min_jrde"] = m.min_jrde;
        d["mean_jrde"] = m.mean_jrde;
    }
    if (std::isfinite(m.avg_min_fde)) {
        d["avg_min_fde"] = m.avg_min_fde;
        d["avg_min_ade"] = m.avg_min_ade;
        d["actor_mr"] = m.actor_mr;
        d["actor_cr"] = m.actor_cr;
        d["avg_brier_min_fde"] = m.avg_brier_min_fde;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "optimal Gaussian diffusion and clean-manifold guided sampling";
    m.attr("__version__") = "0.1.0";

    py::class_<PyScene>(m, "Scene")
        .def_static("make", &PyScene::make, py::arg("n_agents") = 2, py::arg("horizon") = 12,
                    py::arg("dt") = 0.5, py::arg("modes_per_agent") = 3,
                    py::arg("coupling") = 0.5, py::arg("seed") = 1)
        .def_static("load", [](const std::string& path) { return PyScene{load_scene(path)}; })
        .def("save",
             [](const PyScene& s, const std::string& path, const std::string& format) {
                 save_scene(s.joint, path,
                            format == "binary" ? Encoding::binary : Encoding::text);
             },
             py::arg("path"), py::arg("format") = "text")
        .def_property_readonly("n_agents", [](const PyScene& s) { return s.joint.spec.n_agents; })
        .def_property_readonly("horizon", [](const PyScene& s) { return s.joint.spec.horizon; })
        .def_property_readonly("dim", [](const PyScene& s) { return s.joint.mixture.dim(); })
        .def_property_readonly("n_components",
                               [](const PyScene& s) { return s.joint.mixture.size(); })
        .def("sample",
             [](const PyScene& s, int n, std::uint64_t seed) {
                 return s.joint.mixture.sample_matrix(n, seed);
             },
             py::arg("n"), py::arg("seed") = 0)
        .def("log_density",
             [](const PyScene& s, const Vec& x) { return s.joint.mixture.log_density(x); })
        .def("score", [](const PyScene& s, const Vec& x) { return gmm_score(s.joint.mixture, x); })
        .def("moments", [](const PyScene& s) {
            const DataStats stats = gmm_moments(s.joint.mixture);
            return py::make_tuple(stats.mean, stats.cov);
        });

    m.def("vp_alpha_bars", [](int T, double beta0, double betaT) {
        return make_vp_schedule(T, beta0, betaT).alpha_bars;
    }, py::arg("T"), py::arg("beta0") = 1e-4, py::arg("betaT") = 0.05);

    m.def("optimal_prior",
          [](const PyScene& scene, int start_T, int sched_T) {
              const DiffusionSchedule sched = make_vp_schedule(sched_T, 1e-4, 0.05);
              const DataStats stats = gmm_moments(scene.joint.mixture);
              const OptimalPrior p = optimal_prior(stats, sched.alpha_bar_at_time(start_T));
              py::dict d;
              d["mu"] = p.mu_star;
              d["sigma"] = p.sigma_star;
              d["sigma_p"] = p.sigma_p_star;
              return d;
          },
          py::arg("scene"), py::arg("start_T"), py::arg("sched_T") = 100);

    m.def("sample",
          [](const PyScene& scene, const std::string& prior, int start_T, int sched_T, int stride,
             const std::string& method, int n, std::uint64_t seed, int L) {
              ScenePipeline pipe = build_pipeline(scene, prior, sched_T, start_T, L);
              SamplerConfig cfg;
              cfg.start_T = start_T;
              cfg.ddim_stride = stride;
              cfg.method = method == "ddpm" ? SamplerMethod::ddpm : SamplerMethod::ddim;
              cfg.n_samples = n;
              cfg.seed = seed;
              return generate(pipe.oracle, pipe.prior, pipe.sched, pipe.kernel, cfg).samples;
          },
          py::arg("scene"), py::arg("prior") = "ogd", py::arg("start_T") = 100,
          py::arg("sched_T") = 100, py::arg("stride") = 10, py::arg("method") = "ddim",
          py::arg("n") = 128, py::arg("seed") = 0, py::arg("marginal_L") = 6);

    m.def("guide",
          [](const PyScene& scene, const std::string& method, const std::string& route_set,
             const std::string& speed, double zeta, int n, std::uint64_t seed,
             const std::string& noise_mode, int start_T, int sched_T, int stride, int L,
             const std::string& prior) {
              ScenePipeline pipe = build_pipeline(scene, prior, sched_T, start_T, L);
              const RouteTask task =
                  make_route_task(scene.joint, route_kind(route_set), speed_setting(speed),
                                  pipe.sets, derive_seed(seed, 100));
              SamplerConfig scfg;
              scfg.start_T = start_T;
              scfg.ddim_stride = stride;
              scfg.n_samples = n;
              scfg.seed = seed;
              GuidanceConfig gcfg;
              gcfg.method = guidance_method(method);
              gcfg.zeta = zeta >= 0.0 ? zeta : default_zeta(gcfg.method);
              gcfg.noise_mode = noise_mode == "stochastic" ? NoiseMode::stochastic
                                                           : NoiseMode::deterministic;
              if (gcfg.method == GuidanceMethod::ecm || gcfg.method == GuidanceMethod::ecmr) {
                  gcfg.t_schedule = default_t_schedule(start_T, stride);
                  gcfg.K = static_cast<int>(gcfg.t_schedule.size());
              }
              const GuidedResult result = guided_generate(
                  pipe.oracle, pipe.prior, pipe.sched, pipe.kernel, scfg, gcfg, task, &pipe.sets);
              return py::make_tuple(result.samples,
                                    metrics_dict(controllable_metrics(result.samples, task)));
          },
          py::arg("scene"), py::arg("method") = "ecmr", py::arg("route_set") = "u",
          py::arg("speed") = "d", py::arg("zeta") = -1.0, py::arg("n") = 128,
          py::arg("seed") = 0, py::arg("noise_mode") = "deterministic", py::arg("start_T") = 100,
          py::arg("sched_T") = 100, py::arg("stride") = 10, py::arg("marginal_L") = 6,
          py::arg("prior") = "ogd");

    m.def("prediction_metrics",
          [](const PyScene& scene, const Mat& samples, int gt_draws, std::uint64_t seed) {
              const Mat gt = scene.joint.mixture.sample_matrix(gt_draws, seed);
              double fde = 0.0, ade = 0.0;
              for (Eigen::Index g = 0; g < gt.rows(); ++g) {
                  const MetricsReport r = joint_prediction_metrics(
                      samples, Vec(), gt.row(g).transpose(), scene.joint.spec.n_agents,
                      scene.joint.spec.horizon);
                  fde += r.avg_min_fde;
                  ade += r.avg_min_ade;
              }
              py::dict d;
              d["avg_min_fde"] = fde / double(gt.rows());
              d["avg_min_ade"] = ade / double(gt.rows());
              return d;
          },
          py::arg("scene"), py::arg("samples"), py::arg("gt_draws") = 32, py::arg("seed") = 9800);

    m.def("controllable_metrics",
          [](const PyScene& scene, const Mat& samples, const std::string& route_set,
             const std::string& speed, std::uint64_t seed, int L) {
              const auto sets = marginal_sample_sets(scene.joint, scene.effective_L(L));
              const RouteTask task =
                  make_route_task(scene.joint, route_kind(route_set), speed_setting(speed), sets,
                                  derive_seed(seed, 100));
              return metrics_dict(controllable_metrics(samples, task));
          },
          py::arg("scene"), py::arg("samples"), py::arg("route_set") = "u", py::arg("speed") = "d",
          py::arg("seed") = 0, py::arg("marginal_L") = 6);

    m.def("cluster",
          [](const PyScene& scene, const Mat& samples, int L, double threshold) {
              const auto refs = marginal_sample_sets(scene.joint, scene.effective_L(L));
              const ClusterResult r =
                  cluster_samples(samples, refs, scene.joint.spec.horizon, threshold);
              return py::make_tuple(r.representatives, r.probabilities);
          },
          py::arg("scene"), py::arg("samples"), py::arg("marginal_L") = 6,
          py::arg("threshold") = 2.5);

    m.def("sliced_wasserstein", &sliced_wasserstein, py::arg("a"), py::arg("b"),
          py::arg("n_projections") = 100, py::arg("seed") = 0);

    m.def("kl_gaussian",
          [](const Vec& mp, const Mat& cp, const Vec& mq, const Mat& cq) {
              return kl_gaussian(Gaussian(mp, cp), Gaussian(mq, cq));
          },
          py::arg("mean_p"), py::arg("cov_p"), py::arg("mean_q"), py::arg("cov_q"));

    m.def("validate_prior",
          [](const PyScene& scene, const std::vector<int>& T_values, int candidates,
             std::uint64_t seed, int draws) {
              const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
              const OptimalityReport report =
                  validate_optimality(scene.joint, sched, T_values, candidates, seed, draws);
              py::list entries;
              for (const auto& e : report.entries) {
                  py::dict d;
                  d["T"] = e.T;
                  d["closed_kl"] = e.closed_kl;
                  d["closed_se"] = e.closed_se;
                  d["family_opt_kl"] = e.family_opt_kl;
                  d["standard_kl"] = e.standard_kl;
                  d["closed_attains_family_opt"] = e.closed_attains_family_opt;
                  d["variance_consistent_preferred"] = e.vc_variant_preferred;
                  entries.append(d);
              }
              return entries;
          },
          py::arg("scene"), py::arg("T_values") = std::vector<int>{10, 40, 100},
          py::arg("candidates") = 50, py::arg("seed") = 1, py::arg("draws") = 10000);
}
