#include "ogd/guidance.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ogd {

RouteTask make_route_task(const JointGmm& joint, RouteKind kind, SpeedSetting speed,
                          const std::vector<MarginalSamples>& sets, std::uint64_t seed) {
    RouteTask task;
    task.kind = kind;
    task.speed = speed;
    task.n_agents = joint.n_agents();
    task.horizon = joint.spec.horizon;
    Rng rng(seed);
    const int X = joint.agent_dim();
    if (kind == RouteKind::gt) {
        const Vec draw = joint.mixture.sample(rng);
        for (int i = 0; i < task.n_agents; ++i)
            task.routes.push_back(draw.segment(i * X, X));
    } else {
        for (int i = 0; i < task.n_agents; ++i) {
            const auto& set = sets[static_cast<std::size_t>(i)];
            const int l = static_cast<int>(rng.uniform() * double(set.trajectories.size()));
            task.routes.push_back(set.trajectories[static_cast<std::size_t>(
                std::min(l, static_cast<int>(set.trajectories.size()) - 1))]);
        }
    }
    const int H = task.horizon;
    const int late = H - 1;
    const int early = std::max(0, H - 1 - std::max(1, static_cast<int>(std::lround(1.0 / joint.spec.dt))));
    switch (speed) {
        case SpeedSetting::normal: task.tau_d = late; task.tau_g = late; break;
        case SpeedSetting::accel: task.tau_d = early; task.tau_g = late; break;
        case SpeedSetting::decel: task.tau_d = late; task.tau_g = early; break;
    }
    return task;
}

double goal_cost(const Vec& x0, const RouteTask& task) {
    const int X = 2 * task.horizon;
    double cost = 0.0;
    for (int i = 0; i < task.n_agents; ++i) {
        const Eigen::Vector2d pos = agent_position(x0, X, i, task.tau_d);
        cost += (pos - task.goal(i)).squaredNorm();
    }
    return cost / double(task.n_agents);
}

Vec goal_cost_grad(const Vec& x0, const RouteTask& task) {
    const int X = 2 * task.horizon;
    Vec grad = Vec::Zero(x0.size());
    for (int i = 0; i < task.n_agents; ++i) {
        const Eigen::Vector2d pos = agent_position(x0, X, i, task.tau_d);
        const Eigen::Vector2d g = 2.0 / double(task.n_agents) * (pos - task.goal(i));
        grad[i * X + 2 * task.tau_d] = g.x();
        grad[i * X + 2 * task.tau_d + 1] = g.y();
    }
    return grad;
}

std::vector<int> default_t_schedule(int start_T, int stride) {
    if (stride < 1 || start_T % stride != 0)
        throw std::invalid_argument("stride must divide start_T");
    std::vector<int> ts;
    for (int k = 0; k < start_T / stride; ++k) ts.push_back(stride * (k + 1));
    return ts;
}

Vec clip_elementwise(const Vec& v, const Vec& bound) {
    return v.cwiseMax(-bound).cwiseMin(bound);
}

Vec nnm_guided_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
                    const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                    const GuidanceConfig& cfg, const RouteTask& task) {
    const Vec m = ddim_step(x_t, t, t_prev, den, sched);
    const double ratio = sched.alpha_bar_at_time(t) / sched.alpha_bar_at_time(t_prev);
    Vec delta = cfg.zeta * goal_cost_grad(m, task);
    if (cfg.clip_enabled)
        delta = clip_elementwise(delta, std::sqrt(1.0 - ratio) * kernel.sigma_diag_sqrt());
    return m - delta;
}

Vec guidance_grad_xt(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched,
                     const Vec& grad_x0) {
    const double abar = sched.alpha_bar_at_time(t);
    return (grad_x0 - std::sqrt(1.0 - abar) * den.vjp(x_t, t, grad_x0)) / std::sqrt(abar);
}

Vec sf_guided_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
                   const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                   const GuidanceConfig& cfg, const RouteTask& task) {
    const double abar = sched.alpha_bar_at_time(t);
    const double abar_prev = sched.alpha_bar_at_time(t_prev);
    const Vec e = den.eps(x_t, t);
    const Vec x0_hat = (x_t - std::sqrt(1.0 - abar) * e) / std::sqrt(abar);
    const Vec grad_xt = guidance_grad_xt(x_t, t, den, sched, goal_cost_grad(x0_hat, task));
    Vec delta = cfg.zeta * std::sqrt(1.0 - abar) * grad_xt;
    if (cfg.clip_enabled) delta = clip_elementwise(delta, kernel.sigma_diag_sqrt());
    const Vec e_tilde = e - delta;
    const Vec x0_tilde = (x_t - std::sqrt(1.0 - abar) * e_tilde) / std::sqrt(abar);
    return std::sqrt(abar_prev) * x0_tilde + std::sqrt(1.0 - abar_prev) * e_tilde;
}

CandidateSet make_candidates(const std::vector<MarginalSamples>& sets, const Vec& x0_hat,
                             int agent_dim) {
    CandidateSet cs;
    cs.options.resize(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        cs.options[i] = sets[i].trajectories;
        cs.options[i].push_back(x0_hat.segment(static_cast<Eigen::Index>(i) * agent_dim, agent_dim));
    }
    return cs;
}

Vec ecmr_reference_swap(const Vec& x0_hat, const CandidateSet& candidates, const RouteTask& task,
                        bool exhaustive, int cap) {
    const int n = task.n_agents;
    const int X = 2 * task.horizon;
    if (static_cast<int>(candidates.options.size()) != n)
        throw std::invalid_argument("candidate set size mismatch");
    Vec out = x0_hat;
    if (!exhaustive) {
        // goal cost is additive per agent
        for (int i = 0; i < n; ++i) {
            const auto& opts = candidates.options[static_cast<std::size_t>(i)];
            double best = std::numeric_limits<double>::infinity();
            int best_j = 0;
            for (std::size_t j = 0; j < opts.size(); ++j) {
                const Eigen::Vector2d pos{opts[j][2 * task.tau_d], opts[j][2 * task.tau_d + 1]};
                const double c = (pos - task.goal(i)).squaredNorm();
                if (c < best) {
                    best = c;
                    best_j = static_cast<int>(j);
                }
            }
            out.segment(i * X, X) = opts[static_cast<std::size_t>(best_j)];
        }
        return out;
    }
    long total = 1;
    for (const auto& opts : candidates.options) {
        total *= static_cast<long>(opts.size());
        if (total > cap) throw std::runtime_error("candidate explosion");
    }
    std::vector<std::size_t> combo(static_cast<std::size_t>(n), 0);
    double best = std::numeric_limits<double>::infinity();
    Vec assembled(x0_hat.size());
    for (long c = 0; c < total; ++c) {
        for (int i = 0; i < n; ++i)
            assembled.segment(i * X, X) =
                candidates.options[static_cast<std::size_t>(i)][combo[static_cast<std::size_t>(i)]];
        const double cost = goal_cost(assembled, task);
        if (cost < best) {
            best = cost;
            out = assembled;
        }
        for (int i = n - 1; i >= 0; --i) {
            if (++combo[static_cast<std::size_t>(i)] <
                candidates.options[static_cast<std::size_t>(i)].size())
                break;
            combo[static_cast<std::size_t>(i)] = 0;
        }
    }
    return out;
}

namespace {

void check_guidance_config(const GuidanceConfig& cfg, const DiffusionSchedule& sched) {
    if (cfg.K != static_cast<int>(cfg.t_schedule.size()))
        throw std::invalid_argument("K must equal the t_schedule length");
    for (std::size_t k = 0; k < cfg.t_schedule.size(); ++k) {
        if (cfg.t_schedule[k] < 1 || cfg.t_schedule[k] > sched.T)
            throw std::invalid_argument("t_schedule outside schedule");
        if (k > 0 && cfg.t_schedule[k] <= cfg.t_schedule[k - 1])
            throw std::invalid_argument("t_schedule must increase in k");
    }
}

Vec ecm_core(Vec x0, const Vec* x_start, const Denoiser& den, const DiffusionSchedule& sched,
             const PerturbationKernel& kernel, const GuidanceConfig& cfg, const RouteTask& task,
             const std::vector<MarginalSamples>* ref_sets, Rng& rng, long* network_steps) {
    check_guidance_config(cfg, sched);
    const int d = den.dim();
    Vec eps_prev;
    bool have_eps = false;
    for (int k = cfg.K - 1; k >= 0; --k) {
        const int t = cfg.t_schedule[static_cast<std::size_t>(k)];
        const double abar = sched.alpha_bar_at_time(t);
        Vec x_t;
        if (k == cfg.K - 1 && x_start != nullptr) {
            x_t = *x_start;
        } else {
            const Vec inj = (cfg.noise_mode == NoiseMode::deterministic && have_eps)
                                ? eps_prev
                                : kernel.color(rng.normal_vec(d));
            x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * inj;
        }
        const Vec e = den.eps(x_t, t);
        if (network_steps) ++(*network_steps);
        Vec x0_hat = (x_t - std::sqrt(1.0 - abar) * e) / std::sqrt(abar);
        if (cfg.method == GuidanceMethod::ecmr) {
            if (!ref_sets) throw std::invalid_argument("ecmr requires a marginal sample set");
            x0_hat = ecmr_reference_swap(
                x0_hat, make_candidates(*ref_sets, x0_hat, 2 * task.horizon), task);
        }
        x0 = x0_hat - cfg.zeta * goal_cost_grad(x0_hat, task);
        eps_prev = e;
        have_eps = true;
    }
    return x0;
}

}  // namespace

Vec ecm_iterate(const Vec& x0_K, const Denoiser& den, const DiffusionSchedule& sched,
                const PerturbationKernel& kernel, const GuidanceConfig& cfg, const RouteTask& task,
                const std::vector<MarginalSamples>* ref_sets, Rng& rng) {
    return ecm_core(x0_K, nullptr, den, sched, kernel, cfg, task, ref_sets, rng, nullptr);
}

Vec ecm_iterate_from_noisy(const Vec& x_start, const Denoiser& den,
                           const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                           const GuidanceConfig& cfg, const RouteTask& task,
                           const std::vector<MarginalSamples>* ref_sets, Rng& rng) {
    return ecm_core(Vec::Zero(den.dim()), &x_start, den, sched, kernel, cfg, task, ref_sets, rng,
                    nullptr);
}

GuidedResult guided_generate(const Denoiser& den, const PriorSampler& prior,
                             const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                             const SamplerConfig& scfg, const GuidanceConfig& gcfg,
                             const RouteTask& task, const std::vector<MarginalSamples>* ref_sets) {
    GuidedResult result;
    result.samples.resize(scfg.n_samples, den.dim());
    if (scfg.n_samples == 0) return result;

    const bool iterate_loop =
        gcfg.method == GuidanceMethod::ecm || gcfg.method == GuidanceMethod::ecmr;
    std::vector<int> times;
    if (iterate_loop) {
        check_guidance_config(gcfg, sched);
        if (!gcfg.literal_init && gcfg.t_schedule.back() != scfg.start_T)
            throw std::invalid_argument("prior-mapped start requires t_schedule ending at start_T");
        times = gcfg.t_schedule;
    } else {
        times = reverse_times(scfg);
    }
    if (auto* oracle = dynamic_cast<const OracleDenoiser*>(&den)) oracle->prewarm(times);

    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < scfg.n_samples; ++i) {
        Rng rng(derive_seed(scfg.seed, static_cast<std::uint64_t>(i)));
        Vec x;
        if (iterate_loop) {
            if (gcfg.literal_init) {
                const Vec x0_K = kernel.color(rng.normal_vec(den.dim()));
                x = ecm_core(x0_K, nullptr, den, sched, kernel, gcfg, task, ref_sets, rng,
                             &result.network_steps);
            } else {
                const Vec x_start = prior.draw(rng);
                x = ecm_core(Vec::Zero(den.dim()), &x_start, den, sched, kernel, gcfg, task,
                             ref_sets, rng, &result.network_steps);
            }
            result.guidance_steps += gcfg.K;
        } else {
            x = prior.draw(rng);
            for (std::size_t k = 0; k + 1 < times.size(); ++k) {
                switch (gcfg.method) {
                    case GuidanceMethod::nnm:
                        x = nnm_guided_step(x, times[k], times[k + 1], den, sched, kernel, gcfg,
                                            task);
                        ++result.guidance_steps;
                        break;
                    case GuidanceMethod::sf:
                        x = sf_guided_step(x, times[k], times[k + 1], den, sched, kernel, gcfg,
                                           task);
                        ++result.guidance_steps;
                        break;
                    case GuidanceMethod::none:
                        x = ddim_step(x, times[k], times[k + 1], den, sched);
                        break;
                    default:
                        throw std::logic_error("unreachable guidance method");
                }
                ++result.network_steps;
            }
        }
        result.samples.row(i) = x.transpose();
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace ogd
