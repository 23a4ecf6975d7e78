#include "ogd/sampler.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ogd {

PriorSampler PriorSampler::standard(const PerturbationKernel& kernel) {
    return {Vec::Zero(kernel.dim()), kernel.chol()};
}

PriorSampler PriorSampler::ogd(const OptimalPrior& prior) {
    Eigen::LLT<Mat> llt(prior.sigma_star);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("prior covariance not positive definite");
    return {prior.mu_star, Mat(llt.matrixL())};
}

Vec PriorSampler::draw(Rng& rng) const { return mean + chol * rng.normal_vec(mean.size()); }

Mat sample_prior(const PriorSampler& prior, int n, std::uint64_t seed) {
    Mat out(n, prior.mean.size());
    Rng rng(seed);
    for (int i = 0; i < n; ++i) out.row(i) = prior.draw(rng).transpose();
    return out;
}

Vec ddpm_step(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched,
              const PerturbationKernel& kernel, const Vec& whitened_noise) {
    if (t < 1 || t > sched.T) throw std::out_of_range("invalid step index");
    const double beta = sched.beta(t - 1);
    const double alpha = sched.alpha(t - 1);
    const double abar = sched.alpha_bar_at_time(t);
    Vec m = (x_t - beta / std::sqrt(1.0 - abar) * den.eps(x_t, t)) / std::sqrt(alpha);
    if (t - 1 > 0) m += std::sqrt(beta) * kernel.color(whitened_noise);
    return m;
}

Vec tweedie_x0(const Vec& x_t, int t, const Denoiser& den, const DiffusionSchedule& sched) {
    const double abar = sched.alpha_bar_at_time(t);
    return (x_t - std::sqrt(1.0 - abar) * den.eps(x_t, t)) / std::sqrt(abar);
}

Vec ddim_step(const Vec& x_t, int t, int t_prev, const Denoiser& den,
              const DiffusionSchedule& sched) {
    if (t_prev > t) throw std::invalid_argument("ddim target time after source time");
    if (t_prev == t) return x_t;
    const double abar = sched.alpha_bar_at_time(t);
    const double abar_prev = sched.alpha_bar_at_time(t_prev);
    const Vec e = den.eps(x_t, t);
    const Vec x0 = (x_t - std::sqrt(1.0 - abar) * e) / std::sqrt(abar);
    return std::sqrt(abar_prev) * x0 + std::sqrt(1.0 - abar_prev) * e;
}

std::vector<int> reverse_times(const SamplerConfig& cfg) {
    std::vector<int> times;
    if (cfg.method == SamplerMethod::ddim) {
        if (cfg.ddim_stride < 1 || cfg.start_T % cfg.ddim_stride != 0)
            throw std::invalid_argument("ddim stride must divide start_T");
        for (int t = cfg.start_T; t >= 0; t -= cfg.ddim_stride) times.push_back(t);
    } else {
        for (int t = cfg.start_T; t >= 0; --t) times.push_back(t);
    }
    return times;
}

GenerateResult generate(const Denoiser& den, const PriorSampler& prior,
                        const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                        const SamplerConfig& cfg) {
    if (cfg.start_T < 0 || cfg.start_T > sched.T)
        throw std::invalid_argument("start_T outside schedule");
    if (cfg.n_samples < 0) throw std::invalid_argument("negative sample count");
    GenerateResult result;
    result.samples.resize(cfg.n_samples, den.dim());
    if (cfg.n_samples == 0) return result;

    const std::vector<int> times = reverse_times(cfg);
    if (auto* oracle = dynamic_cast<const OracleDenoiser*>(&den)) oracle->prewarm(times);

    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < cfg.n_samples; ++i) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        Vec x = prior.draw(rng);
        if (cfg.method == SamplerMethod::ddim) {
            for (std::size_t k = 0; k + 1 < times.size(); ++k) {
                x = ddim_step(x, times[k], times[k + 1], den, sched);
                ++result.network_steps;
            }
        } else {
            for (int t = cfg.start_T; t >= 1; --t) {
                const Vec z = rng.normal_vec(den.dim());
                x = ddpm_step(x, t, den, sched, kernel, z);
                ++result.network_steps;
            }
        }
        result.samples.row(i) = x.transpose();
    }
    result.wall_seconds = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace ogd
