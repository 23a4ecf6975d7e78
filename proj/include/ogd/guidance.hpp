#pragma once

#include <vector>

#include "ogd/sampler.hpp"
#include "ogd/scenario.hpp"

namespace ogd {

enum class GuidanceMethod { none, nnm, sf, ecm, ecmr };
enum class NoiseMode { stochastic, deterministic };
enum class RouteKind { gt, u };
enum class SpeedSetting { normal, accel, decel };

/// Goal-point task: per-agent route polylines over the horizon, a trajectory
/// time index tau_d and a route index tau_g picked by the speed setting.
struct RouteTask {
    RouteKind kind = RouteKind::gt;
    SpeedSetting speed = SpeedSetting::normal;
    int n_agents = 1;
    int horizon = 12;
    std::vector<Vec> routes;  // per agent, 2*horizon
    int tau_d = 0;
    int tau_g = 0;

    Eigen::Vector2d goal(int agent) const {
        return {routes[static_cast<std::size_t>(agent)][2 * tau_g],
                routes[static_cast<std::size_t>(agent)][2 * tau_g + 1]};
    }
};

RouteTask make_route_task(const JointGmm& joint, RouteKind kind, SpeedSetting speed,
                          const std::vector<MarginalSamples>& sets, std::uint64_t seed);

/// (1/n) sum_i || Position(x0, tau_d)_i - Route_i(tau_g) ||^2 and its analytic
/// gradient (supported only on the tau_d coordinates).
double goal_cost(const Vec& x0, const RouteTask& task);
Vec goal_cost_grad(const Vec& x0, const RouteTask& task);

struct GuidanceConfig {
    GuidanceMethod method = GuidanceMethod::ecm;
    double zeta = 0.0;
    int K = 0;
    std::vector<int> t_schedule;  // size K, increasing in k
    NoiseMode noise_mode = NoiseMode::deterministic;
    bool clip_enabled = true;
    bool literal_init = false;  // x0(K) ~ N(0, Sigma_p) instead of the prior mapping
};

/// t_k = stride * (k + 1) with K = start_T / stride.
std::vector<int> default_t_schedule(int start_T, int stride);

Vec clip_elementwise(const Vec& v, const Vec& bound);

/// One DDIM step with the gradient injected into the next noisy mean,
/// clipped at sqrt(1 - abar_t/abar_t') * sigma_p per dimension.
Vec nnm_guided_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
                    const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                    const GuidanceConfig& cfg, const RouteTask& task);

/// grad_{x_t} J(x0_hat(x_t)) through the Tweedie map via the denoiser vjp.
Vec guidance_grad_xt(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched,
                     const Vec& grad_x0);

/// One DDIM step with the score-function bias: eps shifted by the clipped,
/// sqrt(1-abar_t)-scaled guidance gradient.
Vec sf_guided_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
                   const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                   const GuidanceConfig& cfg, const RouteTask& task);

/// Per-agent option lists R_i plus the agent's current estimate.
struct CandidateSet {
    std::vector<std::vector<Vec>> options;  // per agent: L+1 trajectories
};

CandidateSet make_candidates(const std::vector<MarginalSamples>& sets, const Vec& x0_hat,
                             int agent_dim);

/// argmin J(w) over the product set. The goal cost decomposes per agent so the
/// default path is a per-agent argmin; the exhaustive path enumerates up to
/// `cap` combinations and throws "candidate explosion" beyond.
Vec ecmr_reference_swap(const Vec& x0_hat, const CandidateSet& candidates, const RouteTask& task,
                        bool exhaustive = false, int cap = 4096);

/// Noise-inject / denoise / gradient-step loop from a clean-space iterate.
Vec ecm_iterate(const Vec& x0_K, const Denoiser& den, const DiffusionSchedule& sched,
                const PerturbationKernel& kernel, const GuidanceConfig& cfg, const RouteTask& task,
                const std::vector<MarginalSamples>* ref_sets, Rng& rng);

/// Same loop, entered with a noisy sample already at time t_schedule.back();
/// this is the prior-mapped start used with OGD.
Vec ecm_iterate_from_noisy(const Vec& x_start, const Denoiser& den,
                           const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                           const GuidanceConfig& cfg, const RouteTask& task,
                           const std::vector<MarginalSamples>* ref_sets, Rng& rng);

struct GuidedResult {
    Mat samples;
    long network_steps = 0;
    long guidance_steps = 0;
    double wall_seconds = 0.0;
    double seconds_per_step() const {
        return network_steps > 0 ? wall_seconds / double(network_steps) : 0.0;
    }
};

/// Guided batch generation. NNM/SF run guided DDIM chains; ECM/ECMR run the
/// iterate loop; method none is the plain chain. One guidance step per
/// network step for every guided method.
GuidedResult guided_generate(const Denoiser& den, const PriorSampler& prior,
                             const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                             const SamplerConfig& scfg, const GuidanceConfig& gcfg,
                             const RouteTask& task, const std::vector<MarginalSamples>* ref_sets);

}  // namespace ogd
