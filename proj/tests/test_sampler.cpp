#include <doctest.h>

#include "ogd/evaluate.hpp"
#include "ogd/harness.hpp"
#include "ogd/sampler.hpp"
#include "test_util.hpp"

using namespace ogd;
using namespace ogd::test;

namespace {

struct ZeroDenoiser final : Denoiser {
    int d;
    explicit ZeroDenoiser(int dim) : d(dim) {}
    int dim() const override { return d; }
    Vec eps(const Vec& x, int) const override { return Vec::Zero(x.size()); }
};

GaussianMixture single_gaussian(const Vec& mean, const Mat& cov) {
    return GaussianMixture(Vec::Ones(1), {Gaussian(mean, cov)});
}

}  // namespace

TEST_CASE("prior draws: moments, determinism, coincident priors") {
    const PerturbationKernel kernel = PerturbationKernel::identity(3);
    const PriorSampler standard = PriorSampler::standard(kernel);

    OptimalPrior op;
    op.mu_star = Vec::Zero(3);
    op.sigma_star = Mat::Identity(3, 3);
    op.sigma_p_star = Mat::Identity(3, 3);
    const PriorSampler ogd = PriorSampler::ogd(op);

    const Mat a = sample_prior(standard, 2000, 42);
    const Mat b = sample_prior(ogd, 2000, 42);
    CHECK((a - b).norm() == 0.0);  // same parameters, same stream

    OptimalPrior shifted = op;
    Rng rng(5);
    shifted.mu_star = rng.normal_vec(3);
    shifted.sigma_star = random_spd(3, rng);
    const PriorSampler ogd2 = PriorSampler::ogd(shifted);
    const int n = 100000;
    const Mat draws = sample_prior(ogd2, n, 7);
    const Vec mean = draws.colwise().mean().transpose();
    for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt(shifted.sigma_star(j, j) / double(n));
        CHECK(std::abs(mean[j] - shifted.mu_star[j]) < 3.0 * se);
    }
    CHECK((sample_prior(ogd2, 100, 9) - sample_prior(ogd2, 100, 9)).norm() == 0.0);
}

TEST_CASE("ddpm_step reduces to x/sqrt(alpha) for zero eps and zero noise") {
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel = PerturbationKernel::identity(2);
    const ZeroDenoiser den(2);
    Vec x(2);
    x << 1.0, -2.0;
    const Vec out = ddpm_step(x, 50, den, sched, kernel, Vec::Zero(2));
    CHECK((out - x / std::sqrt(sched.alpha(49))).norm() < 1e-15);
    CHECK_THROWS_AS(ddpm_step(x, 0, den, sched, kernel, Vec::Zero(2)), std::out_of_range);
}

TEST_CASE("one oracle ddpm step from t=1 hits the closed-form posterior mean") {
    Vec mu(1);
    mu << 2.0;
    Mat var(1, 1);
    var << 0.49;
    const GaussianMixture data = single_gaussian(mu, var);
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel = PerturbationKernel::identity(1);
    const OracleDenoiser oracle(data, sched, kernel);
    Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        Vec x1 = 2.0 * rng.normal_vec(1) + mu;
        const Vec out = ddpm_step(x1, 1, oracle, sched, kernel, Vec::Zero(1));
        const double a = sched.alpha_bar_at_time(1);
        const double post_mean =
            mu[0] + std::sqrt(a) * var(0, 0) / (a * var(0, 0) + 1.0 - a) * (x1[0] - std::sqrt(a) * mu[0]);
        CHECK(out[0] == doctest::Approx(post_mean).epsilon(1e-10));
    }
}

TEST_CASE("oracle ddpm chain reproduces Gaussian data moments") {
    Vec mu(1);
    mu << 1.0;
    Mat var(1, 1);
    var << 0.64;
    const GaussianMixture data = single_gaussian(mu, var);
    const DiffusionSchedule sched = make_vp_schedule(40, 1e-4, 0.05);
    const PerturbationKernel kernel = PerturbationKernel::identity(1);
    const OracleDenoiser oracle(data, sched, kernel);
    const DataStats stats = gmm_moments(data);
    const PriorSampler prior =
        PriorSampler::ogd(optimal_prior(stats, sched.alpha_bar_at_time(40)));
    SamplerConfig cfg;
    cfg.start_T = 40;
    cfg.method = SamplerMethod::ddpm;
    cfg.n_samples = 10000;
    cfg.seed = 11;
    const GenerateResult out = generate(oracle, prior, sched, kernel, cfg);
    const double mean = out.samples.col(0).mean();
    const double se = std::sqrt(var(0, 0) / double(cfg.n_samples));
    CHECK(std::abs(mean - mu[0]) < 3.5 * se);
    const double sample_var =
        (out.samples.col(0).array() - mean).square().sum() / double(cfg.n_samples);
    CHECK(std::abs(sample_var - var(0, 0)) < 0.05);
}

TEST_CASE("ddim_step identity and degenerate-data Tweedie") {
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel = PerturbationKernel::identity(2);
    Rng rng(4);
    Vec target(2);
    target << 3.0, -1.0;
    const GaussianMixture data = single_gaussian(target, 1e-12 * Mat::Identity(2, 2));
    const OracleDenoiser oracle(data, sched, kernel);
    const Vec x = rng.normal_vec(2);
    CHECK((ddim_step(x, 50, 50, oracle, sched) - x).norm() == 0.0);
    for (int t : {20, 60, 100}) {
        const Vec x0 = tweedie_x0(rng.normal_vec(2), t, oracle, sched);
        CHECK((x0 - target).norm() < 1e-4);
    }
}

TEST_CASE("oracle ddim chain reproduces Gaussian data moments") {
    Rng rng(9);
    const Vec mu = rng.normal_vec(2);
    const Mat cov = random_spd(2, rng);
    const GaussianMixture data = single_gaussian(mu, cov);
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel(random_spd(2, rng));
    const OracleDenoiser oracle(data, sched, kernel);
    const PriorSampler prior = PriorSampler::ogd(
        optimal_prior(gmm_moments(data), sched.alpha_bar_at_time(100)));
    SamplerConfig cfg;
    cfg.start_T = 100;
    cfg.ddim_stride = 10;
    cfg.n_samples = 4000;
    cfg.seed = 13;
    const GenerateResult out = generate(oracle, prior, sched, kernel, cfg);
    const Vec mean = out.samples.colwise().mean().transpose();
    for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt(cov(j, j) / double(cfg.n_samples));
        CHECK(std::abs(mean[j] - mu[j]) < 4.0 * se);
    }
}

TEST_CASE("generate handles empty batches and repeats bit-identically") {
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel = PerturbationKernel::identity(2);
    const GaussianMixture data = single_gaussian(Vec::Zero(2), Mat::Identity(2, 2));
    const OracleDenoiser oracle(data, sched, kernel);
    const PriorSampler prior = PriorSampler::standard(kernel);
    SamplerConfig cfg;
    cfg.start_T = 100;
    cfg.n_samples = 0;
    cfg.seed = 3;
    CHECK(generate(oracle, prior, sched, kernel, cfg).samples.rows() == 0);
    cfg.n_samples = 16;
    const Mat a = generate(oracle, prior, sched, kernel, cfg).samples;
    const Mat b = generate(oracle, prior, sched, kernel, cfg).samples;
    CHECK((a - b).norm() == 0.0);
    cfg.ddim_stride = 7;  // does not divide 100
    CHECK_THROWS_AS(generate(oracle, prior, sched, kernel, cfg), std::invalid_argument);
}

TEST_CASE("whitened-space chain equals the colored chain") {
    Rng rng(21);
    const GaussianMixture colored = random_mixture(3, 2, rng);
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const PerturbationKernel kernel(random_spd(3, rng));
    const Mat L = kernel.chol();

    // whiten the data mixture by L^{-1}
    std::vector<Gaussian> comps;
    for (int m = 0; m < colored.size(); ++m) {
        const Vec mean = L.triangularView<Eigen::Lower>().solve(colored.component(m).mean());
        const Mat a = L.triangularView<Eigen::Lower>().solve(colored.component(m).cov());
        const Mat cov = L.triangularView<Eigen::Lower>().solve(a.transpose());
        comps.emplace_back(mean, ((cov + cov.transpose()) * 0.5).eval());
    }
    const GaussianMixture whitened(colored.weights(), comps);

    const OracleDenoiser oracle_c(colored, sched, kernel);
    const OracleDenoiser oracle_w(whitened, sched, PerturbationKernel::identity(3));

    SamplerConfig cfg;
    cfg.start_T = 100;
    cfg.ddim_stride = 10;
    cfg.n_samples = 8;
    cfg.seed = 19;
    const PriorSampler prior_c{Vec::Zero(3), kernel.chol()};
    const PriorSampler prior_w{Vec::Zero(3), Mat::Identity(3, 3)};
    const Mat xs_c = generate(oracle_c, prior_c, sched, kernel, cfg).samples;
    const Mat xs_w =
        generate(oracle_w, prior_w, sched, PerturbationKernel::identity(3), cfg).samples;
    const Mat colored_back = xs_w * L.transpose();
    CHECK((xs_c - colored_back).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ogd start beats the standard prior across start times on the reference mixture") {
    const SceneConfig sc = reference_scene();
    const JointGmm joint = make_scene(sc.spec, sc.seed);
    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const DataStats stats = gmm_moments(joint.mixture);
    const Mat gt = joint.mixture.sample_matrix(1000, 2024);

    for (int start_T : {20, 60, 100}) {
        const OptimalPrior op = optimal_prior(stats, sched.alpha_bar_at_time(start_T));
        const PerturbationKernel ogd_kernel(op.sigma_p_star);
        const OracleDenoiser ogd_oracle(joint.mixture, sched, ogd_kernel);
        const PerturbationKernel id_kernel = PerturbationKernel::identity(joint.mixture.dim());
        const OracleDenoiser std_oracle(joint.mixture, sched, id_kernel);

        SamplerConfig cfg;
        cfg.start_T = start_T;
        cfg.ddim_stride = 10;
        cfg.n_samples = 1000;
        cfg.seed = 5;
        const Mat ogd_samples =
            generate(ogd_oracle, PriorSampler::ogd(op), sched, ogd_kernel, cfg).samples;
        const Mat std_samples =
            generate(std_oracle, PriorSampler::standard(id_kernel), sched, id_kernel, cfg).samples;
        const double sw_ogd = sliced_wasserstein(ogd_samples, gt, 100, 99);
        const double sw_std = sliced_wasserstein(std_samples, gt, 100, 99);
        CHECK(sw_ogd <= sw_std);
    }
}
