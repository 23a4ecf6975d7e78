#pragma once

#include <vector>

#include "ogd/denoiser.hpp"
#include "ogd/prior.hpp"

namespace ogd {

enum class SamplerMethod { ddpm, ddim };
enum class PriorKind { standard, ogd };

struct SamplerConfig {
    int start_T = 100;       // reverse start time
    int ddim_stride = 10;    // must divide start_T
    SamplerMethod method = SamplerMethod::ddim;
    int n_samples = 128;
    std::uint64_t seed = 0;
};

/// Gaussian reverse-start distribution: standard = N(0, Sigma_p),
/// ogd = N(mu*, Sigma*).
struct PriorSampler {
    Vec mean;
    Mat chol;

    static PriorSampler standard(const PerturbationKernel& kernel);
    static PriorSampler ogd(const OptimalPrior& prior);
    Vec draw(Rng& rng) const;
};

Mat sample_prior(const PriorSampler& prior, int n, std::uint64_t seed);

/// Ancestral step t -> t-1; noise is a whitened draw and is ignored for the
/// final step to time 0.
Vec ddpm_step(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched,
              const PerturbationKernel& kernel, const Vec& whitened_noise);

/// Deterministic (eta = 0) step t -> t_prev via the Tweedie estimate.
Vec ddim_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
              const DiffusionSchedule& sched);

/// Tweedie reconstruction of clean data from x_t.
Vec tweedie_x0(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched);

/// Reverse times visited by a config: start_T, start_T - stride, ..., 0 for
/// DDIM; start_T, start_T - 1, ..., 0 for DDPM.
std::vector<int> reverse_times(const SamplerConfig& cfg);

struct GenerateResult {
    Mat samples;              // n_samples x dim
    long network_steps = 0;
    double wall_seconds = 0.0;
    double seconds_per_step() const {
        return network_steps > 0 ? wall_seconds / double(network_steps) : 0.0;
    }
};

/// Runs the reverse chain for every sample with per-sample derived seeds.
GenerateResult generate(const Denoiser& den, const PriorSampler& prior,
                        const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                        const SamplerConfig& cfg);

}  // namespace ogd
